//! Direct, cross-task consistency and alignment losses, and their per-task
//! combination.

use serde::{Deserialize, Serialize};
use xtasc_tensor::{Float, Tensor};

use crate::data::Batch;
use crate::error::{config_err, CoreError, Result};
use crate::model::{ForwardOutput, Variant};
use crate::weighting::{Weighting, WeightingKind};

/// Segmentation label of unlabeled pixels.
pub const VOID: u8 = 255;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Mixing weight of the cross term for segmentation.
    pub lambda_seg: f64,
    /// Mixing weight of the cross term for depth.
    pub lambda_depth: f64,
    pub weighting: WeightingKind,
    pub gradnorm_alpha: f64,
    pub gradnorm_lr: f64,
    pub seg_ignore_index: u8,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_seg: 0.01,
            lambda_depth: 0.01,
            weighting: WeightingKind::Uncertainty,
            gradnorm_alpha: 1.5,
            gradnorm_lr: 0.025,
            seg_ignore_index: VOID,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for l in [self.lambda_seg, self.lambda_depth] {
            if !(0.0..=1.0).contains(&l) {
                return Err(config_err(format!("lambda {l} outside [0, 1]")));
            }
        }
        if !(self.gradnorm_alpha >= 0.0) || !(self.gradnorm_lr > 0.0) {
            return Err(config_err("gradnorm_alpha must be >= 0 and gradnorm_lr > 0"));
        }
        Ok(())
    }
}

/// Per-step loss values. `total = omega1 * L1 + omega2 * L2 + reg`, where
/// `reg` is the log-variance term of uncertainty weighting (zero otherwise).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub ell1: f64,
    pub ell2: f64,
    pub ell_2to1: f64,
    pub ell_1to2: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub reg: f64,
    pub total: f64,
}

fn check_logits<T: Float>(op: &'static str, logits: &Tensor<T>, pixels: usize) -> Result<(usize, usize, usize)> {
    let s = logits.shape();
    if s.len() != 4 || s[0] * s[2] * s[3] != pixels {
        return Err(CoreError::Mismatch(format!("{op}: logits {s:?} vs {pixels} labels")));
    }
    Ok((s[0], s[1], s[2] * s[3]))
}

/// Mean cross-entropy over pixels whose label is not `ignore_index`.
pub fn seg_ce<T: Float>(logits: &Tensor<T>, target: &[u8], ignore_index: u8) -> Result<Tensor<T>> {
    let (n, c, hw) = check_logits("seg_ce", logits, target.len())?;
    let mut idx = Vec::with_capacity(target.len());
    for (p, &t) in target.iter().enumerate() {
        if t == ignore_index {
            continue;
        }
        if t as usize >= c {
            return Err(CoreError::Mismatch(format!("seg_ce: label {t} with {c} classes")));
        }
        let (s, pix) = (p / hw, p % hw);
        idx.push((s * c + t as usize) * hw + pix);
    }
    debug_assert!(n * hw == target.len());
    if idx.is_empty() {
        return Err(CoreError::EmptyMask("seg_ce"));
    }
    let picked = logits.softmax(1)?.gather(&idx)?.log();
    Ok(picked.sum_all().mul_scalar(T::from_f(-1.0 / idx.len() as f64)))
}

/// Soft-target cross-entropy of the transferred logits against the detached
/// softmax of the direct logits, averaged over every pixel.
pub fn seg_xtc<T: Float>(transferred: &Tensor<T>, direct: &Tensor<T>) -> Result<Tensor<T>> {
    if transferred.shape() != direct.shape() || transferred.ndim() != 4 {
        return Err(CoreError::Mismatch(format!(
            "seg_xtc: {:?} vs {:?}",
            transferred.shape(),
            direct.shape()
        )));
    }
    let s = direct.shape();
    let pixels = s[0] * s[2] * s[3];
    let target = direct.detach().softmax(1)?;
    let ce = target.mul(&transferred.softmax(1)?.log())?.sum_all();
    Ok(ce.mul_scalar(T::from_f(-1.0 / pixels as f64)))
}

fn valid_indices(op: &'static str, valid: &[bool]) -> Result<Vec<usize>> {
    let idx: Vec<usize> = valid.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| i).collect();
    if idx.is_empty() {
        return Err(CoreError::EmptyMask(op));
    }
    Ok(idx)
}

/// Mean absolute error over valid pixels.
pub fn depth_l1<T: Float>(pred: &Tensor<T>, target: &Tensor<T>, valid: &[bool]) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() || pred.numel() != valid.len() {
        return Err(CoreError::Mismatch(format!(
            "depth_l1: pred {:?}, target {:?}, mask {}",
            pred.shape(),
            target.shape(),
            valid.len()
        )));
    }
    let idx = valid_indices("depth_l1", valid)?;
    let diff = pred.gather(&idx)?.sub(&target.gather(&idx)?)?;
    Ok(diff.abs().sum_all().mul_scalar(T::from_f(1.0 / idx.len() as f64)))
}

/// Masked L1 between the transferred depth and the detached direct depth.
pub fn depth_xtc<T: Float>(transferred: &Tensor<T>, direct: &Tensor<T>, valid: &[bool]) -> Result<Tensor<T>> {
    depth_l1(transferred, &direct.detach(), valid)
}

/// Alignment terms: transferred predictions against ground truth. Gradients
/// flow through the transfer networks into both direct branches.
pub fn align_losses<T: Float>(
    transferred_seg: &Tensor<T>,
    seg_target: &[u8],
    transferred_depth: &Tensor<T>,
    depth_target: &Tensor<T>,
    valid_depth: &[bool],
    ignore_index: u8,
) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((
        seg_ce(transferred_seg, seg_target, ignore_index)?,
        depth_l1(transferred_depth, depth_target, valid_depth)?,
    ))
}

/// `(1 - lambda) * direct + lambda * cross`; without a cross term the direct
/// loss is returned unchanged.
pub fn task_loss<T: Float>(direct: &Tensor<T>, cross: Option<&Tensor<T>>, lambda: f64) -> Result<Tensor<T>> {
    match cross {
        None => Ok(direct.clone()),
        Some(cross) => Ok(direct
            .mul_scalar(T::from_f(1.0 - lambda))
            .add(&cross.mul_scalar(T::from_f(lambda)))?),
    }
}

/// Graph handles for one step's losses.
pub struct LossTerms<T: Float> {
    pub total: Tensor<T>,
    /// `[L1, L2]`.
    pub task: [Tensor<T>; 2],
    pub report: LossReport,
}

/// Evaluates every loss term for a forward pass and combines them with the
/// current task weighting.
pub fn compute_losses<T: Float>(
    variant: Variant,
    out: &ForwardOutput<T>,
    batch: &Batch<T>,
    cfg: &LossConfig,
    weighting: &Weighting<T>,
) -> Result<LossTerms<T>> {
    compute_losses_with_targets(variant, out, [&out.direct_seg, &out.direct_depth], batch, cfg, weighting)
}

/// As [`compute_losses`], with the consistency targets (segmentation logits
/// and depth, both treated as constants) given explicitly. Finite-difference
/// checks hold them fixed this way.
pub fn compute_losses_with_targets<T: Float>(
    variant: Variant,
    out: &ForwardOutput<T>,
    xtc_targets: [&Tensor<T>; 2],
    batch: &Batch<T>,
    cfg: &LossConfig,
    weighting: &Weighting<T>,
) -> Result<LossTerms<T>> {
    let ell1 = seg_ce(&out.direct_seg, &batch.seg, cfg.seg_ignore_index)?;
    let ell2 = depth_l1(&out.direct_depth, &batch.depth, &batch.valid_depth)?;
    let cross = match (variant, &out.transferred_seg, &out.transferred_depth) {
        (Variant::CrossTask, Some(ts), Some(td)) => Some((
            seg_xtc(ts, xtc_targets[0])?,
            depth_xtc(td, xtc_targets[1], &batch.valid_depth)?,
        )),
        (Variant::Align, Some(ts), Some(td)) => Some(align_losses(
            ts,
            &batch.seg,
            td,
            &batch.depth,
            &batch.valid_depth,
            cfg.seg_ignore_index,
        )?),
        (Variant::CrossTask | Variant::Align, _, _) => {
            return Err(CoreError::Mismatch(format!("{variant} forward is missing transferred outputs")));
        }
        _ => None,
    };
    let l1 = task_loss(&ell1, cross.as_ref().map(|c| &c.0), cfg.lambda_seg)?;
    let l2 = task_loss(&ell2, cross.as_ref().map(|c| &c.1), cfg.lambda_depth)?;
    let (total, omega, reg) = weighting.combine_total(&l1, &l2)?;
    let report = LossReport {
        ell1: ell1.item().as_f64(),
        ell2: ell2.item().as_f64(),
        ell_2to1: cross.as_ref().map_or(0.0, |c| c.0.item().as_f64()),
        ell_1to2: cross.as_ref().map_or(0.0, |c| c.1.item().as_f64()),
        l1: l1.item().as_f64(),
        l2: l2.item().as_f64(),
        omega1: omega[0],
        omega2: omega[1],
        reg,
        total: total.item().as_f64(),
    };
    Ok(LossTerms { total, task: [l1, l2], report })
}
