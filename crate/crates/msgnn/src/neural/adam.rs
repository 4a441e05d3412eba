//! Adam optimizer with bias correction; moment state persists across steps
//! and rides along in checkpoints.

use crate::error::{Error, Result};
use crate::neural::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Standard parameters with the given learning rate.
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates per parameter tensor plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let m = params.iter().map(|t| vec![0.0; t.n_scalars()]).collect();
        let v = params.iter().map(|t| vec![0.0; t.n_scalars()]).collect();
        Self { m, v, step: 0 }
    }

    /// One Adam update from the gradients currently stored in `params`.
    /// Aborts without touching any state when a gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet, cfg: &AdamConfig) -> Result<()> {
        params.grads_finite().map_err(|e| match e {
            Error::NonFinite(loc) => Error::NonFinite(format!("adam step aborted: {loc}")),
            other => other,
        })?;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (idx, tensor) in params.iter_mut().enumerate() {
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..tensor.values.len() {
                let g = tensor.grad[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                tensor.values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(values: Vec<f64>) -> ParamSet {
        let mut ps = ParamSet::new();
        let n = values.len();
        ps.register("p", vec![n], values).unwrap();
        ps
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut ps = single_param(vec![1.0, -2.0, 3.0]);
        let mut adam = AdamState::new(&ps);
        adam.step(&mut ps, &AdamConfig::with_lr(1e-2)).unwrap();
        assert_eq!(ps.tensor(0).values, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_is_signed_lr() {
        // At t=1 the bias-corrected ratio m/sqrt(v) is sign(g).
        let mut ps = single_param(vec![0.0]);
        ps.tensor_mut(0).grad[0] = 0.35;
        let cfg = AdamConfig::with_lr(1e-3);
        let mut adam = AdamState::new(&ps);
        adam.step(&mut ps, &cfg).unwrap();
        let delta = ps.tensor(0).values[0];
        assert!((delta + cfg.lr).abs() < 1e-6, "first step {delta} should be ~ -lr");
    }

    /// Iterated recurrence with a constant gradient: the update magnitude
    /// approaches lr as the bias corrections converge.
    #[test]
    fn constant_gradient_update_approaches_lr() {
        let mut ps = single_param(vec![0.0]);
        let cfg = AdamConfig::with_lr(1e-3);
        let mut adam = AdamState::new(&ps);
        let g = 0.7;
        let mut prev = ps.tensor(0).values[0];
        let mut last_step = 0.0;
        for _ in 0..200 {
            ps.tensor_mut(0).grad[0] = g;
            adam.step(&mut ps, &cfg).unwrap();
            let cur = ps.tensor(0).values[0];
            last_step = prev - cur;
            prev = cur;
        }
        assert!((last_step - cfg.lr).abs() < 1e-5, "late-step magnitude {last_step}");
    }

    #[test]
    fn non_finite_gradient_aborts_unchanged() {
        let mut ps = single_param(vec![1.0, 2.0]);
        ps.tensor_mut(0).grad[1] = f64::NAN;
        let mut adam = AdamState::new(&ps);
        let before_m = adam.m.clone();
        let err = adam.step(&mut ps, &AdamConfig::with_lr(1e-3)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(ps.tensor(0).values, vec![1.0, 2.0]);
        assert_eq!(adam.m, before_m);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn moment_state_persists() {
        let mut ps = single_param(vec![0.0]);
        let cfg = AdamConfig::with_lr(1e-2);
        let mut adam = AdamState::new(&ps);
        ps.tensor_mut(0).grad[0] = 1.0;
        adam.step(&mut ps, &cfg).unwrap();
        let m1 = adam.m[0][0];
        ps.tensor_mut(0).grad[0] = 1.0;
        adam.step(&mut ps, &cfg).unwrap();
        let m2 = adam.m[0][0];
        assert!(m2 > m1, "first moment must accumulate");
        assert_eq!(adam.step, 2);
    }
}
