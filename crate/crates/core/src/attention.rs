//! Attention over the spatial feature grid.
//!
//! Every variant produces a context vector `v_hat` as a weighted sum of the
//! location features. The softmax-based variants differ only in how the
//! pre-softmax score `e_i` of location `i` is formed:
//!
//! | variant                 | score                                          |
//! |-------------------------|------------------------------------------------|
//! | `soft`                  | `v_e . tanh(W_ae a_i + W_he h)`                |
//! | `attention_on_saliency` | `s_i * v_e . tanh(W_ae a_i + W_he h)`          |
//! | `shared_weights`        | `s_i e_sal + (1 - s_i) e_ctx`, one `W_ae, W_he`|
//! | `saliency_context`      | `s_i e_sal + (1 - s_i) e_ctx`, separate paths  |
//!
//! `saliency_pooling` skips scoring altogether: `v_hat = sum_i s_i a_i`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Soft,
    SaliencyPooling,
    AttentionOnSaliency,
    SharedWeights,
    SaliencyContext,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Soft,
        Variant::SaliencyPooling,
        Variant::AttentionOnSaliency,
        Variant::SharedWeights,
        Variant::SaliencyContext,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Soft => "soft",
            Variant::SaliencyPooling => "saliency_pooling",
            Variant::AttentionOnSaliency => "attention_on_saliency",
            Variant::SharedWeights => "shared_weights",
            Variant::SaliencyContext => "saliency_context",
        }
    }

    /// Variants with separate salient and contextual score paths.
    pub fn is_two_path(self) -> bool {
        matches!(self, Variant::SharedWeights | Variant::SaliencyContext)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown attention variant `{s}`")))
    }
}

/// Location features `{a_1..a_L}` as an `L x D` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    a: Tensor,
}

impl FeatureGrid {
    pub fn new(a: Tensor) -> Result<Self> {
        if a.rank() != 2 {
            return Err(Error::shape(format!("feature grid must be L x D, got {:?}", a.dims())));
        }
        if !a.all_finite() {
            return Err(Error::Data("feature grid has non-finite entries".into()));
        }
        Ok(FeatureGrid { a })
    }

    pub fn locations(&self) -> usize {
        self.a.rows()
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.a
    }
}

/// Per-location saliency `s_i` in `[0, 1]`. The context weight
/// `z_i = 1 - s_i` is always derived, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyGrid {
    s: Vec<f64>,
}

impl SaliencyGrid {
    pub fn new(s: Vec<f64>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::arg("saliency grid is empty"));
        }
        if let Some((i, v)) = s.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("saliency s[{i}] = {v} outside [0, 1]")));
        }
        Ok(SaliencyGrid { s })
    }

    pub fn uniform(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn salient(&self) -> &[f64] {
        &self.s
    }

    pub fn context(&self) -> Vec<f64> {
        self.s.iter().map(|s| 1.0 - s).collect()
    }
}

/// Handles of one scoring path `(W_ae, W_he, v_e)` on a tape.
#[derive(Debug, Clone, Copy)]
pub struct PathVars {
    pub w_ae: Var,
    pub w_he: Var,
    pub v_e: Var,
}

/// Attention parameters of a variant, bound to a tape.
#[derive(Debug, Clone, Copy)]
pub enum AttentionVars {
    Pooling,
    Single(PathVars),
    TwoPath { sal: PathVars, ctx: PathVars },
}

#[derive(Debug, Clone, Copy)]
struct PathIds {
    w_ae: ParamId,
    w_he: ParamId,
    v_e: ParamId,
}

impl PathIds {
    fn vars(&self, tape: &mut Tape, store: &ParamStore) -> PathVars {
        PathVars {
            w_ae: tape.param(store, self.w_ae),
            w_he: tape.param(store, self.w_he),
            v_e: tape.param(store, self.v_e),
        }
    }
}

/// How a parameter should be initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Applied to an input (features, embeddings).
    Input,
    /// Applied to the recurrent state.
    Recurrent,
    /// Starts at zero.
    Zero,
}

/// Names, dims and roles of the attention parameters of `variant`.
pub fn param_layout(variant: Variant, d: usize, h: usize, d_att: usize) -> Vec<(String, Vec<usize>, ParamRole)> {
    let path = |prefix: &str| {
        vec![
            (format!("{prefix}W_ae"), vec![d_att, d], ParamRole::Input),
            (format!("{prefix}W_he"), vec![d_att, h], ParamRole::Input),
            (format!("{prefix}v_e"), vec![d_att], ParamRole::Zero),
        ]
    };
    match variant {
        Variant::SaliencyPooling => vec![],
        Variant::Soft | Variant::AttentionOnSaliency => path("att."),
        Variant::SharedWeights => vec![
            ("att.W_ae".into(), vec![d_att, d], ParamRole::Input),
            ("att.W_he".into(), vec![d_att, h], ParamRole::Input),
            ("att.sal.v_e".into(), vec![d_att], ParamRole::Zero),
            ("att.ctx.v_e".into(), vec![d_att], ParamRole::Zero),
        ],
        Variant::SaliencyContext => {
            let mut v = path("att.sal.");
            v.extend(path("att.ctx."));
            v
        }
    }
}

/// Attention parameter ids of a variant inside a [`ParamStore`].
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    variant: Variant,
    ids: ParamIds,
}

#[derive(Debug, Clone, Copy)]
enum ParamIds {
    Pooling,
    Single(PathIds),
    TwoPath { sal: PathIds, ctx: PathIds },
}

impl AttentionParams {
    /// Looks up the parameters laid out by [`param_layout`].
    pub fn bind(store: &ParamStore, variant: Variant) -> Result<Self> {
        let id = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::Config(format!("missing attention parameter `{name}`")))
        };
        let path = |prefix: &str| -> Result<PathIds> {
            Ok(PathIds {
                w_ae: id(&format!("{prefix}W_ae"))?,
                w_he: id(&format!("{prefix}W_he"))?,
                v_e: id(&format!("{prefix}v_e"))?,
            })
        };
        let ids = match variant {
            Variant::SaliencyPooling => ParamIds::Pooling,
            Variant::Soft | Variant::AttentionOnSaliency => ParamIds::Single(path("att.")?),
            Variant::SharedWeights => {
                let (w_ae, w_he) = (id("att.W_ae")?, id("att.W_he")?);
                ParamIds::TwoPath {
                    sal: PathIds {
                        w_ae,
                        w_he,
                        v_e: id("att.sal.v_e")?,
                    },
                    ctx: PathIds {
                        w_ae,
                        w_he,
                        v_e: id("att.ctx.v_e")?,
                    },
                }
            }
            Variant::SaliencyContext => ParamIds::TwoPath {
                sal: path("att.sal.")?,
                ctx: path("att.ctx.")?,
            },
        };
        Ok(AttentionParams { variant, ids })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn vars(&self, tape: &mut Tape, store: &ParamStore) -> AttentionVars {
        match &self.ids {
            ParamIds::Pooling => AttentionVars::Pooling,
            ParamIds::Single(p) => AttentionVars::Single(p.vars(tape, store)),
            ParamIds::TwoPath { sal, ctx } => AttentionVars::TwoPath {
                sal: sal.vars(tape, store),
                ctx: ctx.vars(tape, store),
            },
        }
    }
}

/// Result of one attention step. Path scores are present for two-path
/// variants only; `e` and `alpha` are absent for saliency pooling.
#[derive(Debug, Clone, Copy)]
pub struct AttendOutput {
    pub e: Option<Var>,
    pub e_sal: Option<Var>,
    pub e_ctx: Option<Var>,
    pub alpha: Option<Var>,
    pub v_hat: Var,
}

/// `e_i = v_e . tanh(W_ae a_i + W_he h_prev)` for every location.
pub fn score_path(tape: &mut Tape, grid: Var, h_prev: Var, path: &PathVars) -> Result<Var> {
    let prepared = PreparedPath::new(tape, grid, path)?;
    prepared.scores(tape, h_prev)
}

/// `e_i = s_i e_sal_i + (1 - s_i) e_ctx_i`.
pub fn combine_saliency_context(tape: &mut Tape, e_sal: Var, e_ctx: Var, s: &SaliencyGrid) -> Result<Var> {
    let (s_var, z_var) = saliency_constants(tape, s);
    combine(tape, e_sal, e_ctx, s_var, z_var)
}

/// `v_hat = sum_i alpha_i a_i`.
pub fn context_vector(tape: &mut Tape, alpha: Var, grid: Var) -> Result<Var> {
    let (av, gv) = (tape.value(alpha), tape.value(grid));
    if av.rank() != 1 || gv.rank() != 2 || av.len() != gv.rows() {
        return Err(Error::shape(format!(
            "context_vector: weights {:?} do not match grid {:?}",
            av.dims(),
            gv.dims()
        )));
    }
    let total = av.sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::arg(format!("attention weights sum to {total}, expected 1")));
    }
    tape.matmul(alpha, grid)
}

/// Full attention step for a variant: prepare then attend once.
pub fn attend(
    tape: &mut Tape,
    vars: &AttentionVars,
    variant: Variant,
    grid: Var,
    s: &SaliencyGrid,
    h_prev: Var,
) -> Result<AttendOutput> {
    Attention::prepare(tape, vars, variant, grid, s)?.attend(tape, h_prev)
}

fn saliency_constants(tape: &mut Tape, s: &SaliencyGrid) -> (Var, Var) {
    let s_var = tape.constant(Tensor::vector(s.salient()));
    let z_var = tape.constant(Tensor::vector(&s.context()));
    (s_var, z_var)
}

fn combine(tape: &mut Tape, e_sal: Var, e_ctx: Var, s: Var, z: Var) -> Result<Var> {
    let a = tape.hadamard(s, e_sal)?;
    let b = tape.hadamard(z, e_ctx)?;
    tape.add(a, b)
}

/// A scoring path with the time-invariant `a_i W_ae^T` term computed once.
#[derive(Debug, Clone, Copy)]
struct PreparedPath {
    keys: Var,
    w_he: Var,
    v_e: Var,
}

impl PreparedPath {
    fn new(tape: &mut Tape, grid: Var, path: &PathVars) -> Result<Self> {
        let w_t = tape.transpose(path.w_ae)?;
        let keys = tape.matmul(grid, w_t)?;
        Ok(PreparedPath {
            keys,
            w_he: path.w_he,
            v_e: path.v_e,
        })
    }

    fn scores(&self, tape: &mut Tape, h_prev: Var) -> Result<Var> {
        let query = tape.matmul(self.w_he, h_prev)?;
        let pre = tape.add_row(self.keys, query)?;
        let act = tape.tanh(pre)?;
        tape.matmul(act, self.v_e)
    }
}

#[derive(Debug, Clone, Copy)]
enum Scorer {
    Pooling { v_hat: Option<Var> },
    Soft(PreparedPath),
    OnSaliency(PreparedPath),
    TwoPath { sal: PreparedPath, ctx: PreparedPath },
}

/// Attention prepared for one image; call [`Attention::attend`] once per step.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    grid: Var,
    s: Var,
    z: Var,
    scorer: Scorer,
}

impl Attention {
    pub fn prepare(
        tape: &mut Tape,
        vars: &AttentionVars,
        variant: Variant,
        grid: Var,
        s: &SaliencyGrid,
    ) -> Result<Self> {
        let g = tape.value(grid);
        if g.rank() != 2 || g.rows() != s.len() {
            return Err(Error::shape(format!(
                "feature grid {:?} does not match saliency grid of {} locations",
                g.dims(),
                s.len()
            )));
        }
        let (s_var, z_var) = saliency_constants(tape, s);
        let scorer = match (variant, vars) {
            (Variant::SaliencyPooling, AttentionVars::Pooling) => Scorer::Pooling { v_hat: None },
            (Variant::Soft, AttentionVars::Single(p)) => Scorer::Soft(PreparedPath::new(tape, grid, p)?),
            (Variant::AttentionOnSaliency, AttentionVars::Single(p)) => {
                Scorer::OnSaliency(PreparedPath::new(tape, grid, p)?)
            }
            (Variant::SharedWeights | Variant::SaliencyContext, AttentionVars::TwoPath { sal, ctx }) => {
                Scorer::TwoPath {
                    sal: PreparedPath::new(tape, grid, sal)?,
                    ctx: PreparedPath::new(tape, grid, ctx)?,
                }
            }
            _ => {
                return Err(Error::arg(format!(
                    "attention parameters do not match variant `{variant}`"
                )))
            }
        };
        Ok(Attention {
            grid,
            s: s_var,
            z: z_var,
            scorer,
        })
    }

    pub fn attend(&mut self, tape: &mut Tape, h_prev: Var) -> Result<AttendOutput> {
        let (e, e_sal, e_ctx) = match self.scorer {
            Scorer::Pooling { v_hat } => {
                // Time independent: computed on the first step, reused after.
                let v_hat = match v_hat {
                    Some(v) => v,
                    None => {
                        let v = tape.matmul(self.s, self.grid)?;
                        self.scorer = Scorer::Pooling { v_hat: Some(v) };
                        v
                    }
                };
                return Ok(AttendOutput {
                    e: None,
                    e_sal: None,
                    e_ctx: None,
                    alpha: None,
                    v_hat,
                });
            }
            Scorer::Soft(p) => (p.scores(tape, h_prev)?, None, None),
            Scorer::OnSaliency(p) => {
                let raw = p.scores(tape, h_prev)?;
                (tape.hadamard(self.s, raw)?, None, None)
            }
            Scorer::TwoPath { sal, ctx } => {
                let es = sal.scores(tape, h_prev)?;
                let ec = ctx.scores(tape, h_prev)?;
                (combine(tape, es, ec, self.s, self.z)?, Some(es), Some(ec))
            }
        };
        let alpha = tape.softmax(e)?;
        let v_hat = tape.matmul(alpha, self.grid)?;
        Ok(AttendOutput {
            e: Some(e),
            e_sal,
            e_ctx,
            alpha: Some(alpha),
            v_hat,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_store(w_ae: Tensor, w_he: Tensor, v_e: Tensor) -> (ParamStore, [ParamId; 3]) {
        let mut store = ParamStore::new();
        let ids = [
            store.insert("att.W_ae", w_ae).unwrap(),
            store.insert("att.W_he", w_he).unwrap(),
            store.insert("att.v_e", v_e).unwrap(),
        ];
        (store, ids)
    }

    fn path_vars(tape: &mut Tape, store: &ParamStore, ids: [ParamId; 3]) -> PathVars {
        PathVars {
            w_ae: tape.param(store, ids[0]),
            w_he: tape.param(store, ids[1]),
            v_e: tape.param(store, ids[2]),
        }
    }

    #[test]
    fn scalar_score_is_tanh_half() {
        let (store, ids) = path_store(
            Tensor::matrix(&[&[1.0]]).unwrap(),
            Tensor::matrix(&[&[0.0]]).unwrap(),
            Tensor::vector(&[1.0]),
        );
        let mut tape = Tape::new();
        let p = path_vars(&mut tape, &store, ids);
        let grid = tape.constant(Tensor::matrix(&[&[0.5]]).unwrap());
        let h = tape.constant(Tensor::vector(&[0.3]));
        let e = score_path(&mut tape, grid, h, &p).unwrap();
        assert!((tape.value(e).data()[0] - 0.46211715726000974).abs() < 1e-15);
        assert!((tape.value(e).data()[0] - 0.46212).abs() < 1e-5);
    }

    #[test]
    fn zero_projection_gives_zero_scores() {
        let (store, ids) = path_store(
            Tensor::full(&[3, 2], 0.7),
            Tensor::full(&[3, 4], -0.2),
            Tensor::zeros(&[3]),
        );
        let mut tape = Tape::new();
        let p = path_vars(&mut tape, &store, ids);
        let grid = tape.constant(Tensor::full(&[5, 2], 1.3));
        let h = tape.constant(Tensor::full(&[4], 0.4));
        let e = score_path(&mut tape, grid, h, &p).unwrap();
        assert_eq!(tape.value(e), &Tensor::zeros(&[5]));
    }

    #[test]
    fn score_path_shape_error() {
        let (store, ids) = path_store(Tensor::zeros(&[3, 2]), Tensor::zeros(&[3, 4]), Tensor::zeros(&[3]));
        let mut tape = Tape::new();
        let p = path_vars(&mut tape, &store, ids);
        let grid = tape.constant(Tensor::zeros(&[5, 3]));
        let h = tape.constant(Tensor::zeros(&[4]));
        assert!(matches!(score_path(&mut tape, grid, h, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn combine_cases() {
        let mut tape = Tape::new();
        let es = tape.constant(Tensor::vector(&[2.0, 5.0]));
        let ec = tape.constant(Tensor::vector(&[7.0, 3.0]));
        let s = SaliencyGrid::new(vec![1.0, 0.0]).unwrap();
        let e = combine_saliency_context(&mut tape, es, ec, &s).unwrap();
        assert_eq!(tape.value(e).data(), &[2.0, 3.0]);

        let half = SaliencyGrid::uniform(2, 0.5).unwrap();
        let e = combine_saliency_context(&mut tape, es, ec, &half).unwrap();
        assert_eq!(tape.value(e).data(), &[4.5, 4.0]);

        let s = SaliencyGrid::new(vec![0.3, 0.9]).unwrap();
        let e = combine_saliency_context(&mut tape, es, es, &s).unwrap();
        assert!(tape.value(e).max_abs_diff(tape.value(es)).unwrap() < 1e-15);

        let short = SaliencyGrid::new(vec![0.3]).unwrap();
        assert!(matches!(
            combine_saliency_context(&mut tape, es, ec, &short),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn context_vector_cases() {
        let mut tape = Tape::new();
        let grid = tape.constant(Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[2.0, 3.0]]).unwrap());
        let one_hot = tape.constant(Tensor::vector(&[0.0, 0.0, 1.0]));
        let v = context_vector(&mut tape, one_hot, grid).unwrap();
        assert_eq!(tape.value(v).data(), &[2.0, 3.0]);

        let grid2 = tape.constant(Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap());
        let half = tape.constant(Tensor::vector(&[0.5, 0.5]));
        let v = context_vector(&mut tape, half, grid2).unwrap();
        assert_eq!(tape.value(v).data(), &[0.5, 0.5]);

        assert!(matches!(context_vector(&mut tape, half, grid), Err(Error::Shape(_))));
        let bad = tape.constant(Tensor::vector(&[0.5, 0.6]));
        assert!(matches!(context_vector(&mut tape, bad, grid2), Err(Error::Argument(_))));
    }

    #[test]
    fn saliency_pooling_weighted_sum() {
        let mut tape = Tape::new();
        let grid = tape.constant(Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap());
        let h = tape.constant(Tensor::zeros(&[3]));
        let s = SaliencyGrid::uniform(2, 1.0).unwrap();
        let out = attend(
            &mut tape,
            &AttentionVars::Pooling,
            Variant::SaliencyPooling,
            grid,
            &s,
            h,
        )
        .unwrap();
        assert_eq!(tape.value(out.v_hat).data(), &[1.0, 1.0]);
        assert!(out.alpha.is_none() && out.e.is_none());
    }

    #[test]
    fn mismatched_variant_params_rejected() {
        let mut tape = Tape::new();
        let grid = tape.constant(Tensor::zeros(&[2, 2]));
        let h = tape.constant(Tensor::zeros(&[3]));
        let s = SaliencyGrid::uniform(2, 1.0).unwrap();
        assert!(matches!(
            attend(&mut tape, &AttentionVars::Pooling, Variant::Soft, grid, &s, h),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!(matches!("hard".parse::<Variant>(), Err(Error::Argument(_))));
    }

    #[test]
    fn saliency_grid_validation() {
        assert!(SaliencyGrid::new(vec![]).is_err());
        assert!(SaliencyGrid::new(vec![0.5, 1.2]).is_err());
        let g = SaliencyGrid::new(vec![0.25, 1.0]).unwrap();
        for (s, z) in g.salient().iter().zip(g.context()) {
            assert_eq!(s + z, 1.0);
        }
    }
}
