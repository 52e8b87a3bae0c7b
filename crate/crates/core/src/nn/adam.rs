use alloc::vec::Vec;

use super::params::ParamStore;
use super::NnError;
use crate::math::{powi, sqrt, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moments, kept in `f64` regardless of the parameter precision.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<R: Real>(params: &ParamStore<R>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| alloc::vec![0.0; t.len()]).collect();
        Self { config, step: 0, m: zeros.clone(), v: zeros }
    }
}

/// Learning rate of epoch `epoch` (counted from zero): `0.001 * 0.8988^epoch`.
///
/// Evaluated as the single quotient `8988^e / 10^(4e+3)`, which is the
/// correctly rounded decimal value while both terms are exact (`e <= 4`).
pub fn lr_at_epoch(epoch: u32) -> f64 {
    if epoch > 70 {
        return 0.001 * powi(0.8988, epoch as i32);
    }
    let e = epoch as i32;
    powi(8988.0, e) / powi(10.0, 4 * e + 3)
}

/// Rescales `grads` so that its global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<R: Real>(grads: &mut ParamStore<R>, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm.is_finite() {
        grads.scale(R::from_f64(max_norm / norm));
    }
    norm
}

/// One bias-corrected Adam update.
///
/// A gradient containing a NaN or infinity is rejected before anything is
/// modified.
pub fn adam_step<R: Real>(
    params: &mut ParamStore<R>,
    grads: &ParamStore<R>,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<(), NnError> {
    if !params.same_layout(grads) || state.m.len() != params.tensors().len() {
        return Err(NnError::Shape("gradient or optimizer layout differs from parameters".into()));
    }
    for g in grads.tensors() {
        if g.data.iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFiniteGradient(g.name.clone()));
        }
    }
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - powi(beta1, t);
    let c2 = 1.0 - powi(beta2, t);
    for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads.tensors()).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.data.len() {
            let gj = g.data[j].to_f64();
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            let update = lr * (m[j] / c1) / (sqrt(v[j] / c2) + eps);
            p.data[j] = R::from_f64(p.data[j].to_f64() - update);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn store(v: Vec<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let n = v.len();
        s.push("w", &[n], v).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = store(vec![1.0, -2.0, 0.5]);
        let g = store(vec![0.3, -7.0, 0.0]);
        let mut st = OptimizerState::new(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut st, 0.01).unwrap();
        let w = &p.get("w").unwrap().data;
        assert!((w[0] - (1.0 - 0.01 * 0.3 / (0.3 + 1e-8))).abs() < 1e-15);
        assert!((w[1] - (-2.0 + 0.01 * 7.0 / (7.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn non_finite_gradient_rejected_without_change() {
        let mut p = store(vec![1.0, 2.0]);
        let g = store(vec![0.1, f64::NAN]);
        let mut st = OptimizerState::new(&p, AdamConfig::default());
        let before = (p.clone(), st.clone());
        assert!(matches!(adam_step(&mut p, &g, &mut st, 0.01), Err(NnError::NonFiniteGradient(_))));
        assert_eq!((p, st), before);
    }

    #[test]
    fn lr_schedule() {
        assert_eq!(lr_at_epoch(0), 0.001);
        assert_eq!(lr_at_epoch(1), 0.0008988);
        assert!((lr_at_epoch(10) - 0.001 * 0.8988f64.powi(10)).abs() < 1e-18);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = store(vec![3.0, 4.0]);
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
        let mut h = store(vec![0.3, 0.4]);
        clip_grad_norm(&mut h, 1.0);
        assert_eq!(h.get("w").unwrap().data, vec![0.3, 0.4]);
    }
}
