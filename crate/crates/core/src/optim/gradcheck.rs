use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attention::{SaliencyGrid, Variant};
use crate::decoder::{ImageInput, Model, ModelConfig};
use crate::error::Result;
use crate::numerics::{ParamStore, Tape, Tensor, Var};
use crate::vocab::{BOS, EOS};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;

/// Denominator floor for the relative error. Central differences of a loss
/// of magnitude ~10 carry rounding noise near `eps * 10 / h`, about 2e-11,
/// so gradients much below 1e-6 cannot be resolved relatively.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub scalars: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub params: Vec<ParamCheck>,
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compares backprop gradients of `loss` against central differences for
/// every scalar in `store`. `loss` must build a scalar on the given tape.
pub fn check_gradients(
    store: &mut ParamStore,
    tolerance: f64,
    loss: impl Fn(&ParamStore, &mut Tape) -> Result<Var>,
) -> Result<GradCheckReport> {
    store.zero_grads();
    let mut tape = Tape::new();
    let out = loss(store, &mut tape)?;
    tape.backward(out, store)?;

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let v = loss(store, &mut tape)?;
        tape.value(v).item()
    };
    let mut params = Vec::with_capacity(store.len());
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).value.len();
        let mut check = ParamCheck {
            name: store.get(id).name().to_string(),
            scalars: n,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
        };
        for j in 0..n {
            let orig = store.get(id).value.data()[j];
            store.get_mut(id).value.data_mut()[j] = orig + FD_STEP;
            let up = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig - FD_STEP;
            let down = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = store.get(id).grad.data()[j];
            check.max_rel_err = check.max_rel_err.max(rel_err(analytic, numeric));
            check.max_abs_err = check.max_abs_err.max((analytic - numeric).abs());
        }
        params.push(check);
    }
    store.zero_grads();
    let max_rel_err = params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_err,
        tolerance,
        passed: max_rel_err < tolerance,
        params,
    })
}

/// Small sizes for finite differences: H=16, L=6 (2x3 grid), V=12, D=8.
pub fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        raw_feature_dim: 8,
        feature_dim: 8,
        hidden: 16,
        embed: 8,
        att_dim: 8,
        vocab_size: 12,
    }
}

/// Gradient check of the full teacher-forced caption loss for `config`.
/// Parameters are drawn uniformly from [-0.5, 0.5] rather than the training
/// initialisation so that every gradient is well away from zero.
pub fn grad_check(config: &ModelConfig, tolerance: f64, seed: u64) -> Result<GradCheckReport> {
    let mut model = Model::init(*config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for slot in model.params_mut().slots_mut() {
        slot.value
            .data_mut()
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-0.5..0.5));
    }
    let locations = 6;
    let features = Tensor::new(
        vec![locations, config.raw_feature_dim],
        (0..locations * config.raw_feature_dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )?;
    let saliency = SaliencyGrid::new((0..locations).map(|_| rng.random_range(0.0..=1.0)).collect())?;
    let image = ImageInput::new(features, saliency)?;
    let first = crate::vocab::UNK;
    let mut ids = vec![BOS];
    ids.extend((0..4).map(|_| rng.random_range(first..config.vocab_size)));
    ids.push(EOS);

    let cfg = *model.config();
    let mut store = model.into_params();
    check_gradients(&mut store, tolerance, |store, tape| {
        // Rebuilding the model per evaluation keeps the closure free of
        // borrowed model state; the store is the only thing perturbed.
        let m = Model::from_store(cfg, store.clone())?;
        let (nll, _) = m.sequence_nll(tape, &image, &ids)?;
        Ok(nll)
    })
}
