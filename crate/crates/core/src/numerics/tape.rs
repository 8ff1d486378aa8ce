//! Reverse-mode differentiation by recording tensor operations on a tape.
//!
//! Each forward call appends a node holding its value and the operation that
//! produced it. [`Tape::backward`] walks the nodes in reverse, applying the
//! vector-Jacobian product of every operation, and adds the results into the
//! gradient slots of the parameters the loss depends on.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::{self, matmul_backward, sigmoid, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Hadamard,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Unary(Unary, Var),
    Softmax(Var),
    CrossEntropy { logits: Var, target: usize },
    Sum(Var),
    Row(Var, usize),
    Transpose(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Single-threaded recording context.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// A tape that rejects any operation producing NaN or infinity.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
            checked: true,
        }
    }

    pub fn unchecked() -> Self {
        Tape {
            checked: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, what: &str) -> Result<Var> {
        if self.checked && !value.all_finite() {
            return Err(Error::NonFinite(what.to_string()));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Constant,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records (once per tape) the current value of a parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: store.get(id).value.clone(),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    pub fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let out = match op {
            Binary::Add => x.zip_map(y, "add", |p, q| p + q)?,
            Binary::Hadamard => x.zip_map(y, "hadamard", |p, q| p * q)?,
        };
        self.push(out, Op::Binary(op, a, b), "binary op")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Hadamard, a, b)
    }

    /// Adds the vector `row` to every row of the matrix `m`.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        let (mv, rv) = (self.value(m), self.value(row));
        if mv.rank() != 2 || rv.rank() != 1 || mv.cols() != rv.len() {
            return Err(Error::shape(format!(
                "add_row: matrix {:?} incompatible with row {:?}",
                mv.dims(),
                rv.dims()
            )));
        }
        let cols = rv.len();
        let mut out = mv.clone();
        for chunk in out.data_mut().chunks_mut(cols) {
            for (o, r) in chunk.iter_mut().zip(rv.data()) {
                *o += r;
            }
        }
        self.push(out, Op::AddRow(m, row), "add_row")
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k), "scale")
    }

    pub fn unary(&mut self, op: Unary, a: Var) -> Result<Var> {
        let x = self.value(a);
        let out = match op {
            Unary::Sigmoid => x.map(sigmoid),
            Unary::Tanh => x.map(f64::tanh),
            Unary::Relu => x.map(|v| v.max(0.0)),
        };
        self.push(out, Op::Unary(op, a), "unary op")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a)
    }

    pub fn softmax(&mut self, e: Var) -> Result<Var> {
        let out = tensor::softmax_vec(self.value(e))?;
        self.push(out, Op::Softmax(e), "softmax")
    }

    /// `-log softmax(logits)[target]` as a scalar.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rank() != 1 || target >= lv.len() {
            return Err(Error::shape(format!(
                "cross_entropy: target {target} out of range for logits {:?}",
                lv.dims()
            )));
        }
        let logp = tensor::log_softmax_vec(lv)?;
        let out = Tensor::scalar(-logp.data()[target]);
        self.push(out, Op::CrossEntropy { logits, target }, "cross_entropy")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), "sum")
    }

    /// Row `i` of a matrix as a vector (embedding lookup).
    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let mv = self.value(m);
        if mv.rank() != 2 || i >= mv.rows() {
            return Err(Error::shape(format!("row {i} out of range for {:?}", mv.dims())));
        }
        let out = Tensor::vector(mv.row(i));
        self.push(out, Op::Row(m, i), "row")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        self.push(out, Op::Transpose(a), "transpose")
    }

    /// Propagates d(loss)/d(node) back through the tape and adds the
    /// parameter gradients into `store`. Gradients accumulate across calls.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::arg(format!(
                "backward needs a scalar loss, got dims {:?}",
                lv.dims()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.dims(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match node.op {
                Op::Constant => {}
                Op::Param(id) => store.accumulate(id, &g),
                Op::MatMul(a, b) => {
                    let (da, db) = matmul_backward(self.value(a), self.value(b), &g);
                    acc(&mut grads, a, da);
                    acc(&mut grads, b, db);
                }
                Op::Binary(Binary::Add, a, b) => {
                    acc(&mut grads, a, g.clone());
                    acc(&mut grads, b, g);
                }
                Op::Binary(Binary::Hadamard, a, b) => {
                    let da = g.zip_map(self.value(b), "hadamard", |p, q| p * q)?;
                    let db = g.zip_map(self.value(a), "hadamard", |p, q| p * q)?;
                    acc(&mut grads, a, da);
                    acc(&mut grads, b, db);
                }
                Op::AddRow(m, r) => {
                    let cols = self.value(r).len();
                    let mut dr = vec![0.0; cols];
                    for chunk in g.data().chunks(cols) {
                        for (d, x) in dr.iter_mut().zip(chunk) {
                            *d += x;
                        }
                    }
                    acc(&mut grads, r, Tensor::vector(&dr));
                    acc(&mut grads, m, g);
                }
                Op::Scale(a, k) => acc(&mut grads, a, g.map(|x| x * k)),
                Op::Unary(op, a) => {
                    let y = &node.value;
                    let x = self.value(a);
                    let d = match op {
                        Unary::Sigmoid => g.zip_map(y, "sigmoid", |g, y| g * y * (1.0 - y))?,
                        Unary::Tanh => g.zip_map(y, "tanh", |g, y| g * (1.0 - y * y))?,
                        Unary::Relu => g.zip_map(x, "relu", |g, x| if x > 0.0 { g } else { 0.0 })?,
                    };
                    acc(&mut grads, a, d);
                }
                Op::Softmax(e) => {
                    // d e_j = alpha_j (g_j - sum_i g_i alpha_i)
                    let alpha = &node.value;
                    let dot: f64 = g.data().iter().zip(alpha.data()).map(|(x, y)| x * y).sum();
                    let d = g.zip_map(alpha, "softmax", |gj, aj| aj * (gj - dot))?;
                    acc(&mut grads, e, d);
                }
                Op::CrossEntropy { logits, target } => {
                    let gs = g.data()[0];
                    let mut p = tensor::softmax_vec(self.value(logits))?;
                    p.data_mut()[target] -= 1.0;
                    acc(&mut grads, logits, p.map(|x| x * gs));
                }
                Op::Sum(a) => {
                    let gs = g.data()[0];
                    acc(&mut grads, a, Tensor::full(self.value(a).dims(), gs));
                }
                Op::Row(m, i) => {
                    let mv = self.value(m);
                    let mut d = Tensor::zeros(mv.dims());
                    let cols = mv.cols();
                    d.data_mut()[i * cols..(i + 1) * cols].copy_from_slice(g.data());
                    acc(&mut grads, m, d);
                }
                Op::Transpose(a) => acc(&mut grads, a, g.transpose()?),
            }
        }
        Ok(())
    }
}

fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
