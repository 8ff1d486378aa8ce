use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
///
/// A scalar is represented with dims `[1]`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::shape(format!("dims {dims:?} must be non-empty and positive")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} need {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, 0.0)
    }

    pub fn full(dims: &[usize], value: f64) -> Self {
        assert!(
            !dims.is_empty() && dims.iter().all(|&d| d > 0),
            "dims {dims:?} must be non-empty and positive"
        );
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            dims: vec![1],
            data: vec![value],
        }
    }

    /// Rank-1 tensor from a non-empty slice.
    pub fn vector(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "vector must be non-empty");
        Tensor {
            dims: vec![values.len()],
            data: values.to_vec(),
        }
    }

    /// Rank-2 tensor from equal-length rows.
    pub fn matrix(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged matrix rows"));
        }
        Tensor::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::arg(format!("item() on tensor of dims {:?}", self.dims)));
        }
        Ok(self.data[0])
    }

    pub fn rows(&self) -> usize {
        self.dims[0]
    }

    pub fn cols(&self) -> usize {
        if self.dims.len() == 2 {
            self.dims[1]
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn reshape(mut self, dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != self.data.len() || dims.contains(&0) {
            return Err(Error::shape(format!("cannot reshape {:?} into {dims:?}", self.dims)));
        }
        self.dims = dims;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        same_dims(self, other, what)?;
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::shape(format!("transpose of rank-{} tensor", self.rank())));
        }
        let (m, n) = (self.dims[0], self.dims[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            dims: vec![n, m],
            data: out,
        })
    }

    /// Largest absolute elementwise difference; `None` on dims mismatch.
    pub fn max_abs_diff(&self, other: &Tensor) -> Option<f64> {
        if self.dims != other.dims {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}{:?}", self.dims, self.data)
    }
}

pub(crate) fn same_dims(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::shape(format!(
            "{what}: operand dims {:?} and {:?} differ",
            a.dims, b.dims
        )));
    }
    Ok(())
}

/// Operand layout for [`matmul`]: rank-1 operands act as a row (left) or column (right).
fn mm_layout(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, Vec<usize>)> {
    let bad = || {
        Error::shape(format!(
            "matmul: left operand {:?} incompatible with right operand {:?}",
            a.dims, b.dims
        ))
    };
    let (m, k, a_vec) = match a.rank() {
        1 => (1, a.dims[0], true),
        2 => (a.dims[0], a.dims[1], false),
        _ => return Err(bad()),
    };
    let (k2, n, b_vec) = match b.rank() {
        1 => (b.dims[0], 1, true),
        2 => (b.dims[0], b.dims[1], false),
        _ => return Err(bad()),
    };
    if k != k2 {
        return Err(bad());
    }
    let out = match (a_vec, b_vec) {
        (false, false) => vec![m, n],
        (false, true) => vec![m],
        (true, false) => vec![n],
        (true, true) => vec![1],
    };
    Ok((m, k, n, out))
}

/// Matrix product. Rank-1 operands are treated as a row vector on the left
/// and a column vector on the right, and the corresponding output axis is dropped.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k, n, dims) = mm_layout(a, b)?;
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor { dims, data: out })
}

/// Backward of [`matmul`]: returns `(dA, dB)` for upstream gradient `dc`.
pub(crate) fn matmul_backward(a: &Tensor, b: &Tensor, dc: &Tensor) -> (Tensor, Tensor) {
    let (m, k, n, _) = mm_layout(a, b).expect("validated in forward");
    // dA = dC . B^T
    let mut da = vec![0.0; m * k];
    for i in 0..m {
        let dcrow = &dc.data[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b.data[p * n..(p + 1) * n];
            da[i * k + p] = dcrow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    // dB = A^T . dC
    let mut db = vec![0.0; k * n];
    for i in 0..m {
        let dcrow = &dc.data[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let dbrow = &mut db[p * n..(p + 1) * n];
            for (o, &g) in dbrow.iter_mut().zip(dcrow) {
                *o += av * g;
            }
        }
    }
    (
        Tensor {
            dims: a.dims.clone(),
            data: da,
        },
        Tensor {
            dims: b.dims.clone(),
            data: db,
        },
    )
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically shifted softmax over a rank-1 tensor.
pub fn softmax_vec(e: &Tensor) -> Result<Tensor> {
    if e.rank() != 1 {
        return Err(Error::arg(format!(
            "softmax_vec expects a vector, got dims {:?}",
            e.dims
        )));
    }
    Ok(Tensor {
        dims: e.dims.clone(),
        data: softmax(&e.data)?,
    })
}

/// Softmax of a slice with max subtraction. Errors on empty or non-finite input.
pub fn softmax(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::arg("softmax of an empty vector"));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::arg("softmax input contains non-finite values"));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|x| x / z).collect())
}

/// `log(softmax(logits))`, computed without forming the probabilities.
pub fn log_softmax_vec(logits: &Tensor) -> Result<Tensor> {
    if logits.rank() != 1 {
        return Err(Error::arg(format!(
            "log_softmax expects a vector, got dims {:?}",
            logits.dims
        )));
    }
    let max = logits.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.data.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    Ok(logits.map(|x| x - lse))
}
