use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Adam with a Nesterov look-ahead on the first moment.
    Nadam,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Nadam => "nadam",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nadam" => Ok(OptimizerKind::Nadam),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::arg(format!("unknown optimizer `{s}` (nadam|adam)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Rescale gradients whose global L2 norm exceeds this.
    pub grad_clip_norm: Option<f64>,
    /// Longest caption in words; longer ones are cut and closed with EOS.
    pub max_caption_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 8,
            epochs: 10,
            seed: 42,
            optimizer: OptimizerKind::Nadam,
            grad_clip_norm: None,
            max_caption_len: 20,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted so parameters can be held fixed.
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_caption_len == 0 {
            return Err(Error::Config("max_caption_len must be at least 1".into()));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("grad_clip_norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// First and second moments per parameter, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl OptimizerState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.slots().iter().map(|s| Tensor::zeros(s.value.dims())).collect();
        OptimizerState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, index: usize) -> &Tensor {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &Tensor {
        &self.v[index]
    }
}

/// Applies one update from the accumulated gradients, then zeroes them.
pub fn optimizer_step(store: &mut ParamStore, state: &mut OptimizerState, config: &TrainConfig) -> Result<()> {
    if store.is_empty() {
        log::warn!("optimizer step on an empty parameter store; nothing to update");
        return Ok(());
    }
    if state.m.len() != store.len()
        || state
            .m
            .iter()
            .zip(store.slots())
            .any(|(m, s)| m.dims() != s.value.dims())
    {
        return Err(Error::shape("optimizer state does not match the parameter store"));
    }
    if let Some(limit) = config.grad_clip_norm {
        let norm = store.grad_norm();
        if norm > limit {
            let k = limit / norm;
            for slot in store.slots_mut() {
                slot.grad.data_mut().iter_mut().for_each(|g| *g *= k);
            }
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    let lr = config.learning_rate;
    for (k, slot) in store.slots_mut().iter_mut().enumerate() {
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        let theta = slot.value.data_mut();
        let grad = slot.grad.data_mut();
        for j in 0..theta.len() {
            let g = grad[j];
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * g;
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            let num = match config.optimizer {
                OptimizerKind::Adam => m_hat,
                OptimizerKind::Nadam => BETA1 * m_hat + (1.0 - BETA1) * g / bc1,
            };
            theta[j] -= lr * num / (v_hat.sqrt() + EPSILON);
            grad[j] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.insert("x", Tensor::vector(&[value])).unwrap();
        s.get_mut(id).grad = Tensor::vector(&[grad]);
        s
    }

    fn cfg(kind: OptimizerKind) -> TrainConfig {
        TrainConfig {
            optimizer: kind,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut s = one_param(0.3, 0.0);
        let mut st = OptimizerState::new(&s);
        optimizer_step(&mut s, &mut st, &cfg(OptimizerKind::Nadam)).unwrap();
        assert_eq!(s.slots()[0].value.data(), &[0.3]);
    }

    #[test]
    fn adam_first_step() {
        let mut s = one_param(0.0, 1.0);
        let mut st = OptimizerState::new(&s);
        optimizer_step(&mut s, &mut st, &cfg(OptimizerKind::Adam)).unwrap();
        let delta = s.slots()[0].value.data()[0];
        assert!((delta + 0.001 / (1.0 + 1e-8)).abs() < 1e-18);
        assert_eq!(s.slots()[0].grad.data(), &[0.0]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn nadam_first_step() {
        let mut s = one_param(0.0, 1.0);
        let mut st = OptimizerState::new(&s);
        optimizer_step(&mut s, &mut st, &cfg(OptimizerKind::Nadam)).unwrap();
        let delta = s.slots()[0].value.data()[0];
        assert!((delta + 0.0019 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn clipping_rescales() {
        let mut s = one_param(0.0, 10.0);
        let mut st = OptimizerState::new(&s);
        let c = TrainConfig {
            grad_clip_norm: Some(1.0),
            ..cfg(OptimizerKind::Adam)
        };
        optimizer_step(&mut s, &mut st, &c).unwrap();
        assert!((st.first_moment(0).data()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn empty_store_is_a_no_op() {
        let mut s = ParamStore::new();
        let mut st = OptimizerState::new(&s);
        optimizer_step(&mut s, &mut st, &TrainConfig::default()).unwrap();
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
