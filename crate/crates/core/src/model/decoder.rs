use rand::Rng;
use xtasc_tensor::{concat, Float, Tensor};

use super::config::ModelConfig;
use crate::error::{CoreError, Result};
use crate::nn::{join, Conv2d, ConvBnRelu, Mode, Module};

/// U-Net style task decoder. Block `j` works at the resolution of encoder
/// stage `D - j`: it concatenates the previous block's output with that
/// stage's features (block 0 takes the deepest features alone), applies three
/// conv-BN-ReLU layers and upsamples by 2. A 1x1 conv maps to the task
/// dimension.
#[derive(Debug)]
pub struct Decoder<T: Float> {
    pub blocks: Vec<[ConvBnRelu<T>; 3]>,
    pub head: Conv2d<T>,
}

impl<T: Float> Decoder<T> {
    pub fn new(cfg: &ModelConfig, out_ch: usize, rng: &mut impl Rng) -> Self {
        let bn = (cfg.bn_eps, cfg.bn_momentum);
        let d = cfg.downsamplings();
        let width = cfg.decoder_channels;
        let mut blocks = Vec::with_capacity(d);
        for j in 0..d {
            let skip = cfg.encoder_stages[d - j];
            let in_ch = if j == 0 { skip } else { width + skip };
            blocks.push([
                ConvBnRelu::new(in_ch, width, 1, bn, rng),
                ConvBnRelu::new(width, width, 1, bn, rng),
                ConvBnRelu::new(width, width, 1, bn, rng),
            ]);
        }
        let head_in = if d == 0 { cfg.encoder_stages[0] } else { width };
        Decoder { blocks, head: Conv2d::new(head_in, out_ch, 1, 1, true, rng) }
    }

    /// `features` as returned by [`Encoder::forward`](super::Encoder::forward).
    pub fn forward(&self, features: &[Tensor<T>], mode: Mode) -> Result<Tensor<T>> {
        let d = self.blocks.len();
        let mut h = features[d].clone();
        for (j, block) in self.blocks.iter().enumerate() {
            if j > 0 {
                let skip = &features[d - j];
                if skip.shape()[2..] != h.shape()[2..] {
                    return Err(CoreError::Mismatch(format!(
                        "decoder block {j}: skip {:?} vs upsampled {:?}",
                        skip.shape(),
                        h.shape()
                    )));
                }
                h = concat(&[&h, skip], 1)?;
            }
            for layer in block {
                h = layer.forward(&h, mode)?;
            }
            h = h.upsample_nearest2x()?;
        }
        self.head.forward(&h)
    }
}

impl<T: Float> Module<T> for Decoder<T> {
    fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        for (j, block) in self.blocks.iter().enumerate() {
            for (k, layer) in block.iter().enumerate() {
                layer.collect_params(&join(prefix, &format!("block{j}.{k}")), out);
            }
        }
        self.head.collect_params(&join(prefix, "head"), out);
    }

    fn collect_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        for (j, block) in self.blocks.iter().enumerate() {
            for (k, layer) in block.iter().enumerate() {
                layer.collect_buffers(&join(prefix, &format!("block{j}.{k}")), out);
            }
        }
    }
}
