//! Task weights for the total loss: equal, learned log-variance
//! (uncertainty) and GradNorm.

use serde::{Deserialize, Serialize};
use xtasc_tensor::{Float, Tensor};

use crate::error::{config_err, Result};
use crate::loss::LossConfig;

/// Floor applied to GradNorm weights before renormalization.
pub const MIN_GRADNORM_WEIGHT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingKind {
    Equal,
    Uncertainty,
    GradNorm,
}

impl std::str::FromStr for WeightingKind {
    type Err = crate::CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equal" => Ok(WeightingKind::Equal),
            "uncertainty" => Ok(WeightingKind::Uncertainty),
            "gradnorm" => Ok(WeightingKind::GradNorm),
            other => Err(config_err(format!("unknown weighting {other:?}"))),
        }
    }
}

/// Learnable per-task log variances `s_t`; the total becomes
/// `sum_t exp(-s_t) L_t + s_t`.
#[derive(Clone, Debug)]
pub struct UncertaintyState<T: Float> {
    pub log_vars: [Tensor<T>; 2],
}

impl<T: Float> UncertaintyState<T> {
    pub fn new(s1: f64, s2: f64) -> Self {
        UncertaintyState {
            log_vars: [
                Tensor::parameter(&[1], vec![T::from_f(s1)]).unwrap(),
                Tensor::parameter(&[1], vec![T::from_f(s2)]).unwrap(),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradNormState {
    pub weights: [f64; 2],
    /// Task losses at the first step, `L_t(0)`.
    pub initial_losses: Option<[f64; 2]>,
    pub alpha: f64,
    pub lr: f64,
}

impl GradNormState {
    pub fn new(alpha: f64, lr: f64) -> Self {
        GradNormState { weights: [1.0, 1.0], initial_losses: None, alpha, lr }
    }
}

#[derive(Clone, Debug)]
pub enum Weighting<T: Float> {
    Equal,
    Uncertainty(UncertaintyState<T>),
    GradNorm(GradNormState),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightingSnapshot {
    Equal,
    Uncertainty { log_vars: [f64; 2] },
    GradNorm(GradNormState),
}

impl<T: Float> Weighting<T> {
    pub fn from_config(cfg: &LossConfig) -> Self {
        match cfg.weighting {
            WeightingKind::Equal => Weighting::Equal,
            WeightingKind::Uncertainty => Weighting::Uncertainty(UncertaintyState::new(0.0, 0.0)),
            WeightingKind::GradNorm => Weighting::GradNorm(GradNormState::new(cfg.gradnorm_alpha, cfg.gradnorm_lr)),
        }
    }

    /// Returns `(total, [omega1, omega2], reg)` with
    /// `total = omega1 * L1 + omega2 * L2 + reg`.
    pub fn combine_total(&self, l1: &Tensor<T>, l2: &Tensor<T>) -> Result<(Tensor<T>, [f64; 2], f64)> {
        match self {
            Weighting::Equal => Ok((l1.add(l2)?, [1.0, 1.0], 0.0)),
            Weighting::Uncertainty(u) => {
                let [s1, s2] = &u.log_vars;
                let t1 = s1.neg().exp().mul(l1)?.add(s1)?;
                let t2 = s2.neg().exp().mul(l2)?.add(s2)?;
                let total = t1.add(&t2)?;
                let (s1v, s2v) = (s1.item().as_f64(), s2.item().as_f64());
                Ok((total, [(-s1v).exp(), (-s2v).exp()], s1v + s2v))
            }
            Weighting::GradNorm(g) => {
                let [w1, w2] = g.weights;
                let total = l1.mul_scalar(T::from_f(w1)).add(&l2.mul_scalar(T::from_f(w2)))?;
                Ok((total, g.weights, 0.0))
            }
        }
    }

    /// Trainable scalars owned by the weighting scheme.
    pub fn parameters(&self) -> Vec<(String, Tensor<T>)> {
        match self {
            Weighting::Uncertainty(u) => vec![
                ("weighting.log_var_seg".to_string(), u.log_vars[0].clone()),
                ("weighting.log_var_depth".to_string(), u.log_vars[1].clone()),
            ],
            _ => Vec::new(),
        }
    }

    pub fn snapshot(&self) -> WeightingSnapshot {
        match self {
            Weighting::Equal => WeightingSnapshot::Equal,
            Weighting::Uncertainty(u) => WeightingSnapshot::Uncertainty {
                log_vars: [u.log_vars[0].item().as_f64(), u.log_vars[1].item().as_f64()],
            },
            Weighting::GradNorm(g) => WeightingSnapshot::GradNorm(g.clone()),
        }
    }

    pub fn restore(snapshot: &WeightingSnapshot) -> Self {
        match snapshot {
            WeightingSnapshot::Equal => Weighting::Equal,
            WeightingSnapshot::Uncertainty { log_vars } => {
                Weighting::Uncertainty(UncertaintyState::new(log_vars[0], log_vars[1]))
            }
            WeightingSnapshot::GradNorm(g) => Weighting::GradNorm(g.clone()),
        }
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One GradNorm step on the task weights.
///
/// With `G_t = ||w_t * grad_t||`, `r_t = (L_t / L_t(0)) / mean_s(L_s / L_s(0))`
/// and the target `mean(G) * r_t^alpha` held constant, takes a gradient step
/// of `sum_t |G_t - target_t|` with respect to `w`, floors each weight at
/// [`MIN_GRADNORM_WEIGHT`] and rescales so the weights sum to 2.
pub fn gradnorm_update(
    task_grads: [&[f64]; 2],
    initial_losses: [f64; 2],
    current_losses: [f64; 2],
    weights: [f64; 2],
    alpha: f64,
    lr: f64,
) -> Result<[f64; 2]> {
    if initial_losses.iter().any(|&l| l == 0.0 || !l.is_finite()) {
        return Err(config_err(format!("GradNorm initial losses must be nonzero, got {initial_losses:?}")));
    }
    let norms = [l2_norm(task_grads[0]), l2_norm(task_grads[1])];
    let g = [weights[0] * norms[0], weights[1] * norms[1]];
    let g_mean = (g[0] + g[1]) / 2.0;
    let ratio = [current_losses[0] / initial_losses[0], current_losses[1] / initial_losses[1]];
    let ratio_mean = (ratio[0] + ratio[1]) / 2.0;
    let mut next = weights;
    for t in 0..2 {
        let target = g_mean * (ratio[t] / ratio_mean).powf(alpha);
        let diff = g[t] - target;
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        next[t] = (weights[t] - lr * sign * norms[t]).max(MIN_GRADNORM_WEIGHT);
    }
    // The larger weight lies in [1, 2], so `2 - larger` is exact and the pair
    // sums to exactly 2.
    let big = if next[0] >= next[1] { 0 } else { 1 };
    let mut out = [0.0; 2];
    out[big] = (2.0 * next[big] / (next[0] + next[1])).min(2.0 - MIN_GRADNORM_WEIGHT);
    out[1 - big] = 2.0 - out[big];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_weights() {
        let w = Weighting::<f64>::Equal;
        let (total, omega, reg) = w.combine_total(&Tensor::scalar(1.0), &Tensor::scalar(2.0)).unwrap();
        assert_eq!(total.item(), 3.0);
        assert_eq!(omega, [1.0, 1.0]);
        assert_eq!(reg, 0.0);
    }

    #[test]
    fn uncertainty_at_zero_is_plain_sum() {
        let w = Weighting::<f64>::Uncertainty(UncertaintyState::new(0.0, 0.0));
        let (total, omega, reg) = w.combine_total(&Tensor::scalar(1.25), &Tensor::scalar(0.5)).unwrap();
        assert_eq!(total.item(), 1.75);
        assert_eq!(omega, [1.0, 1.0]);
        assert_eq!(reg, 0.0);
    }

    #[test]
    fn uncertainty_gradient_on_log_var() {
        // d/ds (exp(-s) L + s) = 1 - exp(-s) L
        let u = UncertaintyState::<f64>::new(0.3, -0.2);
        let w = Weighting::Uncertainty(u.clone());
        let (total, _, _) = w.combine_total(&Tensor::scalar(2.0), &Tensor::scalar(0.5)).unwrap();
        total.backward().unwrap();
        let g1 = u.log_vars[0].grad().unwrap()[0];
        let g2 = u.log_vars[1].grad().unwrap()[0];
        assert!((g1 - (1.0 - (-0.3f64).exp() * 2.0)).abs() < 1e-12);
        assert!((g2 - (1.0 - (0.2f64).exp() * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn gradnorm_fixed_point() {
        let g = [1.0, 2.0, 2.0];
        let w = gradnorm_update([&g, &g], [2.0, 3.0], [1.0, 1.5], [1.0, 1.0], 1.5, 0.1).unwrap();
        assert_eq!(w, [1.0, 1.0]);
    }

    #[test]
    fn gradnorm_shrinks_larger_gradient() {
        let big = [3.0, 0.0];
        let small = [1.0, 0.0];
        let w = gradnorm_update([&big, &small], [1.0, 1.0], [0.5, 0.5], [1.0, 1.0], 1.5, 0.05).unwrap();
        assert!(w[0] < 1.0 && w[1] > 1.0);
        assert_eq!(w[0] + w[1], 2.0);
    }

    #[test]
    fn gradnorm_zero_initial_loss_errors() {
        let g = [1.0];
        assert!(gradnorm_update([&g, &g], [0.0, 1.0], [1.0, 1.0], [1.0, 1.0], 1.5, 0.1).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let w = Weighting::<f64>::Uncertainty(UncertaintyState::new(0.5, -1.0));
        let snap = w.snapshot();
        let json = serde_json::to_string(&snap).unwrap();
        let back: WeightingSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(Weighting::<f64>::restore(&back).snapshot(), snap);
    }
}
