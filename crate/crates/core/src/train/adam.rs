//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};
use xtasc_tensor::{Float, Tensor};

use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for a fixed, ordered list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState<T: Float> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Float> AdamState<T> {
    pub fn new(params: &[Tensor<T>], config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            second: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
        }
    }
}

/// Applies one update to every parameter holding a gradient. Parameters
/// without a gradient keep their value and moments. Any non-finite gradient
/// aborts the step before anything is modified.
pub fn adam_step<T: Float>(params: &[Tensor<T>], state: &mut AdamState<T>, lr: f64) -> Result<()> {
    if params.len() != state.first.len() {
        return Err(CoreError::Mismatch(format!(
            "optimizer tracks {} parameters, got {}",
            state.first.len(),
            params.len()
        )));
    }
    let grads: Vec<Option<Vec<T>>> = params.iter().map(|p| p.grad()).collect();
    for (i, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Divergence(format!("non-finite gradient in parameter {i}")));
            }
        }
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let step_size = lr / (1.0 - beta1.powi(t));
    let bias2 = 1.0 - beta2.powi(t);
    let (b1, b2) = (T::from_f(beta1), T::from_f(beta2));
    let (c1, c2) = (T::from_f(1.0 - beta1), T::from_f(1.0 - beta2));
    let (step_size, bias2_sqrt, eps) = (T::from_f(step_size), T::from_f(bias2.sqrt()), T::from_f(eps));
    for ((p, g), (m, v)) in params.iter().zip(&grads).zip(state.first.iter_mut().zip(state.second.iter_mut())) {
        let Some(g) = g else { continue };
        let mut data = p.data_mut();
        for k in 0..data.len() {
            m[k] = b1 * m[k] + c1 * g[k];
            v[k] = b2 * v[k] + c2 * g[k] * g[k];
            data[k] = data[k] - step_size * m[k] / (v[k].sqrt() / bias2_sqrt + eps);
        }
    }
    Ok(())
}

/// `lr0 * 0.5^floor(epoch / halve_every)`.
pub fn lr_schedule(epoch: usize, lr0: f64, halve_every: usize) -> f64 {
    let halvings = epoch / halve_every.max(1);
    lr0 * 0.5f64.powi(halvings.min(i32::MAX as usize) as i32)
}
