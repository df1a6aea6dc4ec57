use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xtasc_tensor::gradcheck::{compare, GradComparison};

use crate::data::{prepare_eval, Batch, Dataset, DepthMode, GenConfig};
use crate::error::Result;
use crate::loss::{compute_losses, compute_losses_with_targets, LossConfig};
use crate::model::{param_group, ModelConfig, Variant, XTaskNet};
use crate::nn::Mode;
use crate::weighting::Weighting;

use super::eval::normalization;

const JITTER_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub variant: Variant,
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
    pub batch: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Half-width of the uniform noise added to every parameter before the
    /// check. Freshly initialized networks have zero biases, which puts
    /// exact zeros at ReLU kinks.
    pub jitter: f64,
    pub loss: LossConfig,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            variant: Variant::CrossTask,
            num_classes: 3,
            height: 8,
            width: 8,
            batch: 2,
            seed: 0,
            step: 1e-6,
            tolerance: 1e-4,
            jitter: 0.05,
            loss: LossConfig { lambda_seg: 0.5, lambda_depth: 0.5, ..LossConfig::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub group: String,
    pub tensors: usize,
    #[serde(flatten)]
    pub comparison: GradComparison,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub variant: Variant,
    pub parameters: usize,
    pub groups: Vec<GroupCheck>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares analytic gradients of the total training loss of a tiny f64
/// network with central finite differences, for every parameter element.
pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let model_cfg = ModelConfig::tiny(cfg.num_classes, cfg.variant);
    let net = XTaskNet::<f64>::new(model_cfg, cfg.seed)?;
    let weighting = Weighting::<f64>::from_config(&cfg.loss);
    let gen = GenConfig {
        height: cfg.height,
        width: cfg.width,
        num_classes: cfg.num_classes,
        depth_mode: DepthMode::InverseDisparity,
        seed: cfg.seed,
        min_shapes: 1,
        max_shapes: 3,
        ..GenConfig::default()
    };
    let data = Dataset::from_generator(&gen, 0, cfg.batch)?;
    let norm = normalization(&data.manifest.stats);
    let prepared: Vec<_> = data.samples.iter().map(|s| prepare_eval(s, &norm)).collect();
    let batch = Batch::<f64>::from_samples(&prepared)?;

    let params: Vec<_> = net.parameters().into_iter().chain(weighting.parameters()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(JITTER_STREAM);
    for (_, p) in &params {
        for v in p.data_mut().iter_mut() {
            *v += rng.gen_range(-cfg.jitter..=cfg.jitter);
        }
    }
    params.iter().for_each(|(_, p)| p.zero_grad());
    let base = net.forward(&batch.images, Mode::Train)?;
    compute_losses(cfg.variant, &base, &batch, &cfg.loss, &weighting)?.total.backward()?;
    // Consistency targets are constants of the objective, so the numeric
    // side holds them at their unperturbed values.
    let targets = [base.direct_seg.detach(), base.direct_depth.detach()];
    let loss = || -> Result<_> {
        let out = net.forward(&batch.images, Mode::Train)?;
        compute_losses_with_targets(cfg.variant, &out, [&targets[0], &targets[1]], &batch, &cfg.loss, &weighting)
    };

    let mut groups: BTreeMap<String, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (name, p) in &params {
        let analytic = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
        let mut numeric = Vec::with_capacity(p.numel());
        for i in 0..p.numel() {
            let orig = p.data()[i];
            p.data_mut()[i] = orig + cfg.step;
            let plus = loss()?.report.total;
            p.data_mut()[i] = orig - cfg.step;
            let minus = loss()?.report.total;
            p.data_mut()[i] = orig;
            numeric.push((plus - minus) / (2.0 * cfg.step));
        }
        let entry = groups.entry(param_group(name).to_string()).or_default();
        entry.0 += 1;
        entry.1.extend(analytic);
        entry.2.extend(numeric);
    }
    let groups: Vec<GroupCheck> = groups
        .into_iter()
        .map(|(group, (tensors, a, n))| GroupCheck { group, tensors, comparison: compare(&a, &n) })
        .collect();
    let max_rel_err = groups.iter().map(|g| g.comparison.max_rel_err).fold(0.0, f64::max);
    Ok(GradcheckReport {
        variant: cfg.variant,
        parameters: params.iter().map(|(_, p)| p.numel()).sum(),
        groups,
        max_rel_err,
        tolerance: cfg.tolerance,
        passed: max_rel_err < cfg.tolerance,
    })
}
