use rand::Rng;
use xtasc_tensor::{Float, Tensor};

use super::config::ModelConfig;
use crate::error::Result;
use crate::nn::{join, BatchNorm2d, Conv2d, ConvBnRelu, Mode, Module};

/// Basic residual block: two 3x3 convs with BN; the shortcut is a 1x1
/// conv + BN whenever the stride or width changes.
#[derive(Debug)]
pub struct ResidualBlock<T: Float> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    pub shortcut: Option<(Conv2d<T>, BatchNorm2d<T>)>,
}

impl<T: Float> ResidualBlock<T> {
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, bn: (f64, f64), rng: &mut impl Rng) -> Self {
        let conv1 = Conv2d::new(in_ch, out_ch, 3, stride, false, rng);
        let conv2 = Conv2d::new(out_ch, out_ch, 3, 1, false, rng);
        let shortcut = (stride != 1 || in_ch != out_ch).then(|| {
            (Conv2d::new(in_ch, out_ch, 1, stride, false, rng), BatchNorm2d::new(out_ch, bn.0, bn.1))
        });
        ResidualBlock {
            conv1,
            bn1: BatchNorm2d::new(out_ch, bn.0, bn.1),
            conv2,
            bn2: BatchNorm2d::new(out_ch, bn.0, bn.1),
            shortcut,
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.bn1.forward(&self.conv1.forward(x)?, mode)?.relu();
        let h = self.bn2.forward(&self.conv2.forward(&h)?, mode)?;
        let skip = match &self.shortcut {
            Some((conv, bn)) => bn.forward(&conv.forward(x)?, mode)?,
            None => x.clone(),
        };
        Ok(h.add(&skip)?.relu())
    }
}

impl<T: Float> Module<T> for ResidualBlock<T> {
    fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.conv1.collect_params(&join(prefix, "conv1"), out);
        self.bn1.collect_params(&join(prefix, "bn1"), out);
        self.conv2.collect_params(&join(prefix, "conv2"), out);
        self.bn2.collect_params(&join(prefix, "bn2"), out);
        if let Some((c, b)) = &self.shortcut {
            c.collect_params(&join(prefix, "shortcut.conv"), out);
            b.collect_params(&join(prefix, "shortcut.bn"), out);
        }
    }

    fn collect_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.bn1.collect_buffers(&join(prefix, "bn1"), out);
        self.bn2.collect_buffers(&join(prefix, "bn2"), out);
        if let Some((_, b)) = &self.shortcut {
            b.collect_buffers(&join(prefix, "shortcut.bn"), out);
        }
    }
}

/// Shared image encoder: a 3x3 stem then one residual block per stage.
#[derive(Debug)]
pub struct Encoder<T: Float> {
    pub stem: ConvBnRelu<T>,
    pub stages: Vec<ResidualBlock<T>>,
}

impl<T: Float> Encoder<T> {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let bn = (cfg.bn_eps, cfg.bn_momentum);
        let stem = ConvBnRelu::new(cfg.in_channels, cfg.encoder_stages[0], 1, bn, rng);
        let mut stages = Vec::with_capacity(cfg.encoder_stages.len());
        let mut in_ch = cfg.encoder_stages[0];
        for (i, &out_ch) in cfg.encoder_stages.iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            stages.push(ResidualBlock::new(in_ch, out_ch, stride, bn, rng));
            in_ch = out_ch;
        }
        Encoder { stem, stages }
    }

    /// Per-stage feature maps, finest first.
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        let mut h = self.stem.forward(x, mode)?;
        let mut feats = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            h = stage.forward(&h, mode)?;
            feats.push(h.clone());
        }
        Ok(feats)
    }

    /// Weight of the last conv in the deepest stage; GradNorm measures task
    /// gradients here.
    pub fn reference_layer(&self) -> &Tensor<T> {
        &self.stages.last().expect("encoder has stages").conv2.weight
    }
}

impl<T: Float> Module<T> for Encoder<T> {
    fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.stem.collect_params(&join(prefix, "stem"), out);
        for (i, s) in self.stages.iter().enumerate() {
            s.collect_params(&join(prefix, &format!("stage{i}")), out);
        }
    }

    fn collect_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.stem.collect_buffers(&join(prefix, "stem"), out);
        for (i, s) in self.stages.iter().enumerate() {
            s.collect_buffers(&join(prefix, &format!("stage{i}")), out);
        }
    }
}
