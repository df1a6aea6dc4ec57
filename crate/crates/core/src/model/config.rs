use serde::{Deserialize, Serialize};

use crate::error::{config_err, CoreError, Result};

/// Which of the four compared models to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Two independent encoder+decoder networks, one per task.
    #[serde(rename = "ST")]
    SingleTask,
    /// Shared encoder, two decoders, no transfer networks.
    #[serde(rename = "MT")]
    MultiTask,
    /// Transfer networks trained against ground truth.
    #[serde(rename = "ALIGN")]
    Align,
    /// Transfer networks trained against the other task's direct prediction.
    #[serde(rename = "XTC")]
    CrossTask,
}

impl Variant {
    pub fn has_transfer(self) -> bool {
        matches!(self, Variant::Align | Variant::CrossTask)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::SingleTask => "ST",
            Variant::MultiTask => "MT",
            Variant::Align => "ALIGN",
            Variant::CrossTask => "XTC",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ST" => Ok(Variant::SingleTask),
            "MT" => Ok(Variant::MultiTask),
            "ALIGN" => Ok(Variant::Align),
            "XTC" => Ok(Variant::CrossTask),
            other => Err(config_err(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    /// Output channels of each residual stage; every stage after the first
    /// halves the resolution.
    pub encoder_stages: Vec<usize>,
    pub decoder_channels: usize,
    pub decoder_blocks: usize,
    pub ttnet_channels: [usize; 3],
    pub variant: Variant,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk(7, Variant::CrossTask)
    }
}

impl ModelConfig {
    /// CPU-sized defaults.
    pub fn desk(num_classes: usize, variant: Variant) -> Self {
        ModelConfig {
            in_channels: 3,
            num_classes,
            encoder_stages: vec![16, 32, 64],
            decoder_channels: 32,
            decoder_blocks: 2,
            ttnet_channels: [16, 32, 64],
            variant,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    /// Smallest useful network, for gradient checks and fast tests.
    pub fn tiny(num_classes: usize, variant: Variant) -> Self {
        ModelConfig {
            encoder_stages: vec![3, 4],
            decoder_channels: 3,
            decoder_blocks: 1,
            ttnet_channels: [2, 3, 4],
            ..ModelConfig::desk(num_classes, variant)
        }
    }

    pub fn downsamplings(&self) -> usize {
        self.encoder_stages.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_stages.is_empty() || self.encoder_stages.contains(&0) {
            return Err(config_err("encoder_stages must be nonempty and positive"));
        }
        if self.num_classes < 2 {
            return Err(config_err("num_classes must be at least 2"));
        }
        if self.decoder_blocks != self.downsamplings() {
            return Err(config_err(format!(
                "decoder_blocks {} must equal encoder downsamplings {}",
                self.decoder_blocks,
                self.downsamplings()
            )));
        }
        if !(self.ttnet_channels[0] < self.ttnet_channels[1] && self.ttnet_channels[1] < self.ttnet_channels[2]) {
            return Err(config_err("ttnet_channels must be strictly increasing"));
        }
        if self.in_channels == 0 || self.decoder_channels == 0 || self.ttnet_channels[0] == 0 {
            return Err(config_err("channel counts must be positive"));
        }
        Ok(())
    }

    /// Checks that an `height x width` input passes through every network.
    pub fn check_resolution(&self, height: usize, width: usize) -> Result<()> {
        let down = 1usize << self.downsamplings();
        let fail = |reason: String| Err(CoreError::Resolution { height, width, reason });
        if height == 0 || width == 0 || height % down != 0 || width % down != 0 {
            return fail(format!("must be divisible by {down} for the encoder"));
        }
        if height % 8 != 0 || width % 8 != 0 {
            return fail("must be divisible by 8 for the transfer networks".into());
        }
        Ok(())
    }
}
