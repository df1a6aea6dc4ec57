use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::error::{config_err, Result};
use crate::loss::LossConfig;
use crate::model::{ModelConfig, Variant};
use crate::weighting::WeightingKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = crate::CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(config_err(format!("unknown precision {other:?}"))),
        }
    }
}

/// Network widths; class count and variant come from the dataset and run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub encoder_stages: Vec<usize>,
    pub decoder_channels: usize,
    pub ttnet_channels: [usize; 3],
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::from_model(&ModelConfig::desk(2, Variant::CrossTask))
    }
}

impl Architecture {
    pub fn tiny() -> Self {
        Architecture::from_model(&ModelConfig::tiny(2, Variant::CrossTask))
    }

    fn from_model(m: &ModelConfig) -> Self {
        Architecture {
            encoder_stages: m.encoder_stages.clone(),
            decoder_channels: m.decoder_channels,
            ttnet_channels: m.ttnet_channels,
        }
    }

    pub fn model_config(&self, num_classes: usize, variant: Variant) -> ModelConfig {
        ModelConfig {
            encoder_stages: self.encoder_stages.clone(),
            decoder_channels: self.decoder_channels,
            decoder_blocks: self.encoder_stages.len().saturating_sub(1),
            ttnet_channels: self.ttnet_channels,
            ..ModelConfig::desk(num_classes, variant)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_halve_every: usize,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub seed: u64,
    pub architecture: Architecture,
    pub precision: Precision,
    /// Random flips and scaled crops on training batches.
    pub augment: bool,
    pub data_dir: Option<PathBuf>,
    /// Held-out split; generated from the training generator on a disjoint
    /// stream when absent.
    pub eval_dir: Option<PathBuf>,
    pub eval_count: usize,
    pub eval_every: usize,
    /// Logs and checkpoints; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::CrossTask,
            epochs: 60,
            batch_size: 8,
            lr: 1e-4,
            lr_halve_every: 25,
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
            architecture: Architecture::default(),
            precision: Precision::F32,
            augment: true,
            data_dir: None,
            eval_dir: None,
            eval_count: 64,
            eval_every: 10,
            out_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(config_err("lr must be positive"));
        }
        if self.epochs == 0 || self.lr_halve_every == 0 || self.eval_every == 0 {
            return Err(config_err("epochs, lr_halve_every and eval_every must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(config_err("batch_size must be at least 2 for batch statistics"));
        }
        if self.variant == Variant::SingleTask && self.loss.weighting == WeightingKind::GradNorm {
            return Err(config_err("GradNorm needs a shared layer; ST shares none"));
        }
        self.loss.validate()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        super::adam::lr_schedule(epoch, self.lr, self.lr_halve_every)
    }
}
