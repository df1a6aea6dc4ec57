use rand::Rng;
use xtasc_tensor::{concat, Float, Tensor};

use crate::error::{CoreError, Result};
use crate::nn::{join, Conv2d, Module};

/// Two 3x3 conv + ReLU layers.
#[derive(Debug)]
pub struct DoubleConv<T: Float> {
    pub first: Conv2d<T>,
    pub second: Conv2d<T>,
}

impl<T: Float> DoubleConv<T> {
    fn new(in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        DoubleConv {
            first: Conv2d::new(in_ch, out_ch, 3, 1, true, rng),
            second: Conv2d::new(out_ch, out_ch, 3, 1, true, rng),
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.first.forward(x)?.relu();
        Ok(self.second.forward(&h)?.relu())
    }
}

impl<T: Float> Module<T> for DoubleConv<T> {
    fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.first.collect_params(&join(prefix, "first"), out);
        self.second.collect_params(&join(prefix, "second"), out);
    }
}

/// Task-transfer network: a small U-Net mapping one task's prediction into
/// the other task's output space.
///
/// Contracting blocks `c0..c2` (widths `channels[0..3]`) each end in a 2x2
/// max-pool. Expanding block `e0` runs at 1/8 resolution on the pooled `c2`
/// output; `e1` and `e2` take the upsampled previous output concatenated with
/// the mirrored contracting output. The final 1x1 conv sees the upsampled
/// `e2` output concatenated with `c0`'s.
#[derive(Debug)]
pub struct TransferNet<T: Float> {
    pub down: [DoubleConv<T>; 3],
    pub up: [DoubleConv<T>; 3],
    pub head: Conv2d<T>,
}

impl<T: Float> TransferNet<T> {
    pub fn new(in_ch: usize, out_ch: usize, channels: [usize; 3], rng: &mut impl Rng) -> Self {
        let [c0, c1, c2] = channels;
        let down = [DoubleConv::new(in_ch, c0, rng), DoubleConv::new(c0, c1, rng), DoubleConv::new(c1, c2, rng)];
        let up = [DoubleConv::new(c2, c2, rng), DoubleConv::new(2 * c2, c1, rng), DoubleConv::new(2 * c1, c0, rng)];
        TransferNet { down, up, head: Conv2d::new(2 * c0, out_ch, 1, 1, true, rng) }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = (x.shape()[2], x.shape()[3]);
        if h % 8 != 0 || w % 8 != 0 {
            return Err(CoreError::Resolution {
                height: h,
                width: w,
                reason: "transfer network needs extents divisible by 8".into(),
            });
        }
        let mut skips = Vec::with_capacity(3);
        let mut cur = x.clone();
        for block in &self.down {
            let s = block.forward(&cur)?;
            cur = s.maxpool2d()?;
            skips.push(s);
        }
        cur = self.up[0].forward(&cur)?.upsample_nearest2x()?;
        cur = self.up[1].forward(&concat(&[&cur, &skips[2]], 1)?)?.upsample_nearest2x()?;
        cur = self.up[2].forward(&concat(&[&cur, &skips[1]], 1)?)?.upsample_nearest2x()?;
        self.head.forward(&concat(&[&cur, &skips[0]], 1)?)
    }
}

impl<T: Float> Module<T> for TransferNet<T> {
    fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        for (i, b) in self.down.iter().enumerate() {
            b.collect_params(&join(prefix, &format!("down{i}")), out);
        }
        for (i, b) in self.up.iter().enumerate() {
            b.collect_params(&join(prefix, &format!("up{i}")), out);
        }
        self.head.collect_params(&join(prefix, "head"), out);
    }
}
