//! Per-episode optimization: AdamW with decoupled weight decay and the
//! cosine-annealed learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment estimates for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamWState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamWState {
    pub fn new(len: usize) -> Self {
        AdamWState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One AdamW update:
/// `p -= lr * m_hat / (sqrt(v_hat) + eps) + lr * weight_decay * p`.
/// Non-finite gradients abort so the episode can revert.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamWState,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::InvalidArgument(format!(
            "adamw shapes disagree: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("adamw gradient".into()));
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps) + lr * cfg.weight_decay * params[i];
    }
    Ok(())
}

/// Cosine annealing between `lr_max` (step 0) and `lr_min` (step = steps):
/// `lr_min + 0.5 (lr_max - lr_min) (1 + cos(pi * step / steps))`.
pub fn cosine_lr(step: usize, steps: usize, lr_max: f64, lr_min: f64) -> Result<f64> {
    if steps < 1 {
        return Err(Error::InvalidArgument("schedule needs steps >= 1".into()));
    }
    if step > steps {
        return Err(Error::InvalidArgument(format!(
            "schedule step {step} out of range 0..={steps}"
        )));
    }
    let phase = std::f64::consts::PI * (step as f64 / steps as f64);
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + phase.cos()))
}
