//! Training objective, Adam-family optimizers, the training loop and a
//! finite-difference gradient checker.

mod gradcheck;
mod optimizer;
mod train;

pub use gradcheck::{check_gradients, grad_check, tiny_config, GradCheckReport, ParamCheck, FD_STEP, REL_FLOOR};
pub use optimizer::{optimizer_step, OptimizerKind, OptimizerState, TrainConfig, BETA1, BETA2, EPSILON};
pub use train::{batch_loss, fit, train_epoch, write_log_csv, EpochStats, TrainSet};

use crate::error::{Error, Result};

/// Mean negative log-likelihood of `targets` under per-step distributions,
/// counting only steps where `mask` is true.
pub fn sequence_nll<P: AsRef<[f64]>>(probs: &[P], targets: &[usize], mask: &[bool]) -> Result<f64> {
    if probs.len() != targets.len() || targets.len() != mask.len() {
        return Err(Error::arg(format!(
            "{} distributions, {} targets and {} mask entries must agree",
            probs.len(),
            targets.len(),
            mask.len()
        )));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for ((p, &y), &keep) in probs.iter().zip(targets).zip(mask) {
        if !keep {
            continue;
        }
        let p = p.as_ref();
        let py = *p
            .get(y)
            .ok_or_else(|| Error::arg(format!("target {y} outside distribution of {}", p.len())))?;
        total -= py.ln();
        n += 1;
    }
    if n == 0 {
        return Err(Error::arg("no non-pad tokens to score"));
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_log_v() {
        let p = vec![vec![0.2; 5]; 3];
        let loss = sequence_nll(&p, &[0, 3, 4], &[true; 3]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn certain_targets_cost_nothing() {
        let p = [[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(sequence_nll(&p, &[1, 0], &[true, true]).unwrap(), 0.0);
    }

    #[test]
    fn two_step_case() {
        let p = [[0.5, 0.5, 0.0, 0.0], [0.25, 0.25, 0.25, 0.25]];
        let loss = sequence_nll(&p, &[0, 2], &[true, true]).unwrap();
        assert!((loss - 1.5 * 2f64.ln()).abs() < 1e-15);
        assert!((loss - 1.03972).abs() < 1e-5);
    }

    #[test]
    fn masked_steps_ignored() {
        let p = [[0.5, 0.5], [0.01, 0.99]];
        let loss = sequence_nll(&p, &[0, 0], &[true, false]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            sequence_nll(&p, &[0, 0], &[false, false]),
            Err(Error::Argument(_))
        ));
    }
}
