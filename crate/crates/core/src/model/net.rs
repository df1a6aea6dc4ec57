use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xtasc_tensor::{Float, Tensor};

use super::config::{ModelConfig, Variant};
use super::decoder::Decoder;
use super::encoder::Encoder;
use super::ttnet::TransferNet;
use crate::error::Result;
use crate::nn::{Mode, Module};

/// Top-level parameter groups; every parameter name starts with one of these.
pub const GROUP_ENCODER: &str = "encoder";
pub const GROUP_DEPTH_ENCODER: &str = "depth_encoder";
pub const GROUP_SEG_DECODER: &str = "seg_decoder";
pub const GROUP_DEPTH_DECODER: &str = "depth_decoder";
/// Depth -> segmentation transfer network.
pub const GROUP_SEG_TRANSFER: &str = "seg_transfer";
/// Segmentation -> depth transfer network.
pub const GROUP_DEPTH_TRANSFER: &str = "depth_transfer";

#[derive(Clone, Debug)]
pub struct ForwardOutput<T: Float> {
    /// Segmentation logits `[N, C, H, W]`.
    pub direct_seg: Tensor<T>,
    /// Depth `[N, 1, H, W]`.
    pub direct_depth: Tensor<T>,
    /// Logits predicted from the depth output.
    pub transferred_seg: Option<Tensor<T>>,
    /// Depth predicted from the segmentation probabilities.
    pub transferred_depth: Option<Tensor<T>>,
    /// Encoder stage outputs (the segmentation network's, for `ST`).
    pub features: Vec<Tensor<T>>,
}

/// Shared encoder, two task decoders and, for `ALIGN`/`XTC`, two transfer
/// networks. The `ST` baseline instead holds a second encoder so the two
/// tasks share nothing.
#[derive(Debug)]
pub struct XTaskNet<T: Float> {
    pub config: ModelConfig,
    pub encoder: Encoder<T>,
    pub depth_encoder: Option<Encoder<T>>,
    pub seg_decoder: Decoder<T>,
    pub depth_decoder: Decoder<T>,
    pub seg_transfer: Option<TransferNet<T>>,
    pub depth_transfer: Option<TransferNet<T>>,
}

impl<T: Float> XTaskNet<T> {
    /// Builds and initializes a network. Construction order is fixed, so two
    /// variants built from the same seed share encoder and decoder weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.num_classes;
        let encoder = Encoder::new(&config, &mut rng);
        let seg_decoder = Decoder::new(&config, c, &mut rng);
        let depth_decoder = Decoder::new(&config, 1, &mut rng);
        let depth_encoder =
            (config.variant == Variant::SingleTask).then(|| Encoder::new(&config, &mut rng));
        let (seg_transfer, depth_transfer) = if config.variant.has_transfer() {
            (
                Some(TransferNet::new(1, c, config.ttnet_channels, &mut rng)),
                Some(TransferNet::new(c, 1, config.ttnet_channels, &mut rng)),
            )
        } else {
            (None, None)
        };
        Ok(XTaskNet { config, encoder, depth_encoder, seg_decoder, depth_decoder, seg_transfer, depth_transfer })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn forward(&self, images: &Tensor<T>, mode: Mode) -> Result<ForwardOutput<T>> {
        let shape = images.shape();
        if shape.len() != 4 || shape[1] != self.config.in_channels {
            return Err(crate::error::CoreError::Mismatch(format!(
                "expected [N, {}, H, W] input, got {shape:?}",
                self.config.in_channels
            )));
        }
        self.config.check_resolution(shape[2], shape[3])?;

        let features = self.encoder.forward(images, mode)?;
        let direct_seg = self.seg_decoder.forward(&features, mode)?;
        let direct_depth = match &self.depth_encoder {
            Some(enc) => self.depth_decoder.forward(&enc.forward(images, mode)?, mode)?,
            None => self.depth_decoder.forward(&features, mode)?,
        };
        let transferred_seg = match &self.seg_transfer {
            Some(net) => Some(net.forward(&direct_depth)?),
            None => None,
        };
        let transferred_depth = match &self.depth_transfer {
            Some(net) => Some(net.forward(&direct_seg.softmax(1)?)?),
            None => None,
        };
        Ok(ForwardOutput { direct_seg, direct_depth, transferred_seg, transferred_depth, features })
    }

    /// Every trainable parameter, with dotted names.
    pub fn parameters(&self) -> Vec<(String, Tensor<T>)> {
        self.named_parameters("")
    }

    pub fn buffers(&self) -> Vec<(String, Tensor<T>)> {
        self.named_buffers("")
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grad(&self) {
        self.parameters().iter().for_each(|(_, t)| t.zero_grad());
    }

    /// The shared layer GradNorm balances gradients on.
    pub fn reference_layer(&self) -> &Tensor<T> {
        self.encoder.reference_layer()
    }
}

/// Group of a dotted parameter name.
pub fn param_group(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

impl<T: Float> Module<T> for XTaskNet<T> {
    fn collect_params(&self, _prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.encoder.collect_params(GROUP_ENCODER, out);
        if let Some(e) = &self.depth_encoder {
            e.collect_params(GROUP_DEPTH_ENCODER, out);
        }
        self.seg_decoder.collect_params(GROUP_SEG_DECODER, out);
        self.depth_decoder.collect_params(GROUP_DEPTH_DECODER, out);
        if let Some(n) = &self.seg_transfer {
            n.collect_params(GROUP_SEG_TRANSFER, out);
        }
        if let Some(n) = &self.depth_transfer {
            n.collect_params(GROUP_DEPTH_TRANSFER, out);
        }
    }

    fn collect_buffers(&self, _prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.encoder.collect_buffers(GROUP_ENCODER, out);
        if let Some(e) = &self.depth_encoder {
            e.collect_buffers(GROUP_DEPTH_ENCODER, out);
        }
        self.seg_decoder.collect_buffers(GROUP_SEG_DECODER, out);
        self.depth_decoder.collect_buffers(GROUP_DEPTH_DECODER, out);
    }
}
