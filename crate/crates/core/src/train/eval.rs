use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use xtasc_tensor::{Float, Tensor};

use crate::data::{prepare_eval, read_dataset, AugmentConfig, Batch, ChannelStats, Dataset};
use crate::error::{CoreError, Result};
use crate::loss::seg_ce;
use crate::metrics::{miou_pixacc, ConfusionMatrix, DepthErrorSums, MetricsReport};
use crate::model::{load_checkpoint, read_checkpoint_manifest, XTaskNet};
use crate::nn::Mode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: MetricsReport,
    /// Mean cross-entropy over labeled pixels.
    pub seg_loss: f64,
    /// Mean absolute depth error of the direct prediction over valid pixels.
    pub depth_loss: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta_m: Option<f64>,
}

pub fn normalization(stats: &ChannelStats) -> AugmentConfig {
    AugmentConfig { mean: stats.mean, std: stats.std, ..AugmentConfig::default() }
}

/// Eval-mode pass over `dataset` in fixed order.
pub fn evaluate<T: Float>(
    net: &XTaskNet<T>,
    dataset: &Dataset,
    stats: &ChannelStats,
    batch_size: usize,
    ignore_index: u8,
) -> Result<EvalReport> {
    let c = net.config.num_classes;
    if dataset.manifest.num_classes > c {
        return Err(CoreError::Mismatch(format!(
            "dataset has {} classes, model predicts {c}",
            dataset.manifest.num_classes
        )));
    }
    net.config.check_resolution(dataset.manifest.height, dataset.manifest.width)?;
    if dataset.is_empty() {
        return Err(CoreError::Mismatch("empty evaluation set".into()));
    }
    let norm = normalization(stats);
    let mut conf = ConfusionMatrix::new(c);
    let mut depth = DepthErrorSums::default();
    let (mut seg_sum, mut seg_count) = (0.0, 0usize);
    for chunk in dataset.samples.chunks(batch_size.max(1)) {
        let prepared: Vec<_> = chunk.iter().map(|s| prepare_eval(s, &norm)).collect();
        let batch = Batch::<T>::from_samples(&prepared)?;
        let out = net.forward(&batch.images.detach(), Mode::Eval)?;
        let logits = out.direct_seg.detach();
        let pred_depth = out.direct_depth.detach();
        let labeled = batch.seg.iter().filter(|&&g| g != ignore_index).count();
        if labeled > 0 {
            seg_sum += seg_ce(&logits, &batch.seg, ignore_index)?.item().as_f64() * labeled as f64;
            seg_count += labeled;
        }
        conf.accumulate(&argmax_channels(&logits), &batch.seg, ignore_index)?;
        depth.accumulate(&pred_depth.to_f64_vec(), &batch.depth.to_f64_vec(), &batch.valid_depth)?;
    }
    let (miou, pix_acc, per_class_iou) = miou_pixacc(&conf)?;
    let (abs_err, rel_err) = depth.finish()?;
    Ok(EvalReport {
        metrics: MetricsReport { miou, pix_acc, abs_err, rel_err, per_class_iou },
        seg_loss: if seg_count > 0 { seg_sum / seg_count as f64 } else { 0.0 },
        depth_loss: abs_err,
        samples: dataset.len(),
        delta_m: None,
    })
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Loads a checkpoint in its stored precision and evaluates it, adding Δ_m
/// against `baseline` when given.
pub fn evaluate_checkpoint(
    checkpoint: impl AsRef<Path>,
    dataset_dir: impl AsRef<Path>,
    baseline: Option<&EvalReport>,
    batch_size: usize,
) -> Result<EvalReport> {
    let dataset = read_dataset(dataset_dir)?;
    let mut report = match read_checkpoint_manifest(checkpoint.as_ref())?.dtype {
        xtasc_tensor::io::DType::F64 => eval_loaded::<f64>(checkpoint.as_ref(), &dataset, batch_size)?,
        _ => eval_loaded::<f32>(checkpoint.as_ref(), &dataset, batch_size)?,
    };
    if let Some(b) = baseline {
        report.delta_m = Some(report.metrics.delta_m_against(&b.metrics)?);
    }
    Ok(report)
}

fn eval_loaded<T: Float>(dir: &Path, dataset: &Dataset, batch_size: usize) -> Result<EvalReport> {
    let (net, manifest) = load_checkpoint::<T>(dir)?;
    let stats = manifest.input_stats.unwrap_or_else(|| dataset.manifest.stats.clone());
    evaluate(&net, dataset, &stats, batch_size, crate::loss::VOID)
}

/// Per-pixel argmax over the channel axis of `[N, C, H, W]` logits, as
/// `N * H * W` class ids. Ties go to the lower class.
pub fn argmax_channels<T: Float>(logits: &Tensor<T>) -> Vec<u8> {
    let s = logits.shape();
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    let data = logits.data();
    let mut out = Vec::with_capacity(n * hw);
    for b in 0..n {
        let base = b * c * hw;
        for p in 0..hw {
            let mut best = 0;
            for k in 1..c {
                if data[base + k * hw + p] > data[base + best * hw + p] {
                    best = k;
                }
            }
            out.push(best as u8);
        }
    }
    out
}
