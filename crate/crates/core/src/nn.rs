//! Parameterized layers shared by the encoder, decoders and transfer nets.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use xtasc_tensor::{Float, NormMode, RunningStats, Tensor};

use crate::error::Result;

pub type Mode = NormMode;

/// Named parameters and buffers, collected with dotted prefixes.
pub trait Module<T: Float> {
    fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>);

    /// Non-trainable state (batch-norm running statistics).
    fn collect_buffers(&self, _prefix: &str, _out: &mut Vec<(String, Tensor<T>)>) {}

    fn named_parameters(&self, prefix: &str) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.collect_params(prefix, &mut out);
        out
    }

    fn named_buffers(&self, prefix: &str) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.collect_buffers(prefix, &mut out);
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

#[derive(Debug)]
pub struct Conv2d<T: Float> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Float> Conv2d<T> {
    /// Kaiming-normal weights (fan-in, ReLU gain), zero bias.
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        let data = (0..out_ch * fan_in).map(|_| T::from_f(normal.sample(rng))).collect();
        let weight = Tensor::parameter(&[out_ch, in_ch, kernel, kernel], data).unwrap();
        let bias = bias.then(|| Tensor::parameter(&[out_ch], vec![T::zero(); out_ch]).unwrap());
        Conv2d { weight, bias, stride, padding: kernel / 2 }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.conv2d(&self.weight, self.bias.as_ref(), self.stride, self.padding)?)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
}

impl<T: Float> Module<T> for Conv2d<T> {
    fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((join(prefix, "weight"), self.weight.clone()));
        if let Some(b) = &self.bias {
            out.push((join(prefix, "bias"), b.clone()));
        }
    }
}

#[derive(Debug)]
pub struct BatchNorm2d<T: Float> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub stats: RunningStats<T>,
    pub eps: f64,
    pub momentum: f64,
}

impl<T: Float> BatchNorm2d<T> {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        BatchNorm2d {
            gamma: Tensor::parameter(&[channels], vec![T::one(); channels]).unwrap(),
            beta: Tensor::parameter(&[channels], vec![T::zero(); channels]).unwrap(),
            stats: RunningStats::new(channels),
            eps,
            momentum,
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        Ok(x.batch_norm2d(
            &self.gamma,
            &self.beta,
            &self.stats,
            mode,
            T::from_f(self.eps),
            T::from_f(self.momentum),
        )?)
    }
}

impl<T: Float> Module<T> for BatchNorm2d<T> {
    fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((join(prefix, "gamma"), self.gamma.clone()));
        out.push((join(prefix, "beta"), self.beta.clone()));
    }

    fn collect_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((join(prefix, "running_mean"), self.stats.mean.clone()));
        out.push((join(prefix, "running_var"), self.stats.var.clone()));
    }
}

/// conv3x3 (no bias) -> BN -> ReLU.
#[derive(Debug)]
pub struct ConvBnRelu<T: Float> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

impl<T: Float> ConvBnRelu<T> {
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, bn: (f64, f64), rng: &mut impl Rng) -> Self {
        ConvBnRelu {
            conv: Conv2d::new(in_ch, out_ch, 3, stride, false, rng),
            bn: BatchNorm2d::new(out_ch, bn.0, bn.1),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        Ok(self.bn.forward(&self.conv.forward(x)?, mode)?.relu())
    }
}

impl<T: Float> Module<T> for ConvBnRelu<T> {
    fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.conv.collect_params(&join(prefix, "conv"), out);
        self.bn.collect_params(&join(prefix, "bn"), out);
    }

    fn collect_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.bn.collect_buffers(&join(prefix, "bn"), out);
    }
}
