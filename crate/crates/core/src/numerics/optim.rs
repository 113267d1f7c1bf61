//! AdamW with decoupled weight decay and the warmup + cosine schedule.

use serde::{Deserialize, Serialize};

use super::tensor::{GradStore, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

impl OptimizerState {
    pub fn new(params: &ParamStore, config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One AdamW update at learning rate `lr` (overrides `config.lr`).
///
/// Order per coordinate: `θ ← θ − lr·wd·θ`, then the bias-corrected moment
/// step `θ ← θ − lr·m̂/(√v̂ + ε)`.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &GradStore,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    state.step += 1;
    let AdamWConfig {
        beta1,
        beta2,
        eps,
        weight_decay,
        ..
    } = state.config;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for ti in 0..params.len() {
        let g = grads.at(ti).data();
        let m = state.m.at_mut(ti).data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
        }
        let v = state.v.at_mut(ti).data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
        }
        let m = state.m.at(ti).data();
        let v = state.v.at(ti).data();
        let theta = params.at_mut(ti).data_mut();
        for i in 0..theta.len() {
            theta[i] -= lr * weight_decay * theta[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Learning rate at `step` of `total_steps`: linear ramp over the first
/// `⌈warmup_frac·total⌉` steps, cosine decay to zero afterwards.
pub fn lr_at(step: usize, total_steps: usize, base_lr: f64, warmup_frac: f64) -> f64 {
    if total_steps == 0 {
        return 0.0;
    }
    let step = step.min(total_steps);
    let warmup = ((warmup_frac * total_steps as f64).ceil() as usize).clamp(1, total_steps);
    if step <= warmup {
        base_lr * step as f64 / warmup as f64
    } else {
        let progress = (step - warmup) as f64 / (total_steps - warmup) as f64;
        (base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn scalar(v: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::from_vec(&[1], vec![v]).unwrap()).unwrap();
        p
    }

    fn cfg(wd: f64) -> AdamWConfig {
        AdamWConfig {
            lr: 0.1,
            weight_decay: wd,
            ..Default::default()
        }
    }

    #[test]
    fn analytic_first_step() {
        let mut p = scalar(1.0);
        let mut st = OptimizerState::new(&p, cfg(0.0));
        adamw_step(&mut p, &scalar(1.0), &mut st, 0.1).unwrap();
        // m̂ = v̂ = 1, so the step is lr/(1 + ε) = 0.1 − 1e-9
        let x = p.get("x").data()[0];
        assert!((x - (0.9 + 1e-9)).abs() < 1e-12, "x = {x}");
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut p = scalar(0.37);
        let mut st = OptimizerState::new(&p, cfg(0.0));
        for _ in 0..3 {
            adamw_step(&mut p, &scalar(0.0), &mut st, 0.1).unwrap();
        }
        assert_eq!(p.get("x").data()[0], 0.37);
    }

    #[test]
    fn decay_only_step() {
        let mut p = scalar(1.0);
        let mut st = OptimizerState::new(&p, cfg(0.5));
        adamw_step(&mut p, &scalar(0.0), &mut st, 0.1).unwrap();
        assert!((p.get("x").data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn schedule_reference_points() {
        assert!((lr_at(50, 1000, 2e-5, 0.1) - 1e-5).abs() < 1e-20);
        assert!((lr_at(100, 1000, 2e-5, 0.1) - 2e-5).abs() < 1e-20);
        assert!((lr_at(550, 1000, 2e-5, 0.1) - 1e-5).abs() < 1e-18);
        assert_eq!(lr_at(0, 1000, 2e-5, 0.1), 0.0);
        assert!(lr_at(1000, 1000, 2e-5, 0.1).abs() < 1e-20);
    }

    #[test]
    fn schedule_is_continuous_and_nonnegative() {
        for total in [1usize, 2, 7, 100, 1000, 5000] {
            for s in 0..=total {
                assert!(lr_at(s, total, 1.0, 0.1) >= 0.0);
            }
        }
        for total in [100usize, 1000, 5000] {
            let w = (0.1 * total as f64).ceil() as usize;
            let at = lr_at(w, total, 1.0, 0.1);
            assert_eq!(at, 1.0);
            assert!((at - lr_at(w - 1, total, 1.0, 0.1)).abs() <= 1.0 / w as f64 + 1e-12);
            assert!((at - lr_at(w + 1, total, 1.0, 0.1)).abs() < 1e-3);
        }
    }
}
