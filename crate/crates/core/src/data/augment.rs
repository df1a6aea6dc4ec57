//! Joint geometric augmentation and image normalization.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scene::SceneSample;
use crate::error::{config_err, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub hflip_prob: f64,
    pub crop_scales: Vec<f64>,
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            hflip_prob: 0.5,
            crop_scales: vec![1.0, 1.2, 1.5],
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(config_err("hflip_prob outside [0, 1]"));
        }
        if self.crop_scales.is_empty() || self.crop_scales.iter().any(|&s| !(s >= 1.0)) {
            return Err(config_err("crop_scales must be nonempty and >= 1"));
        }
        if self.std.iter().any(|&s| !(s > 0.0)) {
            return Err(config_err("normalization std must be positive"));
        }
        Ok(())
    }
}

/// Random flip and scaled crop applied identically to every plane, followed
/// by image normalization.
pub fn augment(sample: &SceneSample, cfg: &AugmentConfig, rng: &mut impl Rng) -> SceneSample {
    let mut out = sample.clone();
    if rng.gen_bool(cfg.hflip_prob) {
        out = hflip(&out);
    }
    let scale = *cfg.crop_scales.choose(rng).expect("validated crop_scales");
    if scale != 1.0 {
        let (h, w) = (out.height, out.width);
        let (sh, sw) = (((h as f64) * scale).round() as usize, ((w as f64) * scale).round() as usize);
        let up = rescale(&out, sh, sw);
        let oy = rng.gen_range(0..=sh - h);
        let ox = rng.gen_range(0..=sw - w);
        out = crop(&up, oy, ox, h, w);
    }
    normalize(&mut out, cfg);
    out
}

/// Normalization only, as used for evaluation.
pub fn prepare_eval(sample: &SceneSample, cfg: &AugmentConfig) -> SceneSample {
    let mut out = sample.clone();
    normalize(&mut out, cfg);
    out
}

pub fn normalize(sample: &mut SceneSample, cfg: &AugmentConfig) {
    let n = sample.height * sample.width;
    for ch in 0..3 {
        for v in &mut sample.image[ch * n..(ch + 1) * n] {
            *v = (*v - cfg.mean[ch]) / cfg.std[ch];
        }
    }
}

/// Mirror along the width axis.
pub fn hflip(sample: &SceneSample) -> SceneSample {
    let (h, w) = (sample.height, sample.width);
    let flip = |plane: &[_], out: &mut [_]| {
        for i in 0..h {
            for j in 0..w {
                out[i * w + j] = plane[i * w + w - 1 - j];
            }
        }
    };
    let mut out = sample.clone();
    let n = h * w;
    for ch in 0..3 {
        flip(&sample.image[ch * n..(ch + 1) * n], &mut out.image[ch * n..(ch + 1) * n]);
    }
    flip_u8(&sample.seg, &mut out.seg, h, w);
    flip(&sample.depth, &mut out.depth);
    out
}

fn flip_u8(src: &[u8], dst: &mut [u8], h: usize, w: usize) {
    for i in 0..h {
        for j in 0..w {
            dst[i * w + j] = src[i * w + w - 1 - j];
        }
    }
}

/// Source taps `(i0, i1, frac)` for half-pixel-centered linear resampling.
fn taps(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5).max(0.0);
    let i0 = (s.floor() as usize).min(src_len - 1);
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

fn nearest(dst: usize, src_len: usize, dst_len: usize) -> usize {
    (((dst as f64 + 0.5) * src_len as f64 / dst_len as f64) as usize).min(src_len - 1)
}

/// Resize to `sh x sw`: bilinear for image and depth, nearest for labels. A
/// resampled depth pixel is invalid if any source pixel with nonzero weight
/// is invalid.
pub fn rescale(sample: &SceneSample, sh: usize, sw: usize) -> SceneSample {
    let (h, w) = (sample.height, sample.width);
    let (n, m) = (h * w, sh * sw);
    let mut image = vec![0f32; 3 * m];
    let mut seg = vec![0u8; m];
    let mut depth = vec![0f32; m];
    for y in 0..sh {
        let (y0, y1, fy) = taps(y, h, sh);
        let ny = nearest(y, h, sh);
        for x in 0..sw {
            let (x0, x1, fx) = taps(x, w, sw);
            let corners = [
                (y0 * w + x0, (1.0 - fy) * (1.0 - fx)),
                (y0 * w + x1, (1.0 - fy) * fx),
                (y1 * w + x0, fy * (1.0 - fx)),
                (y1 * w + x1, fy * fx),
            ];
            let q = y * sw + x;
            for ch in 0..3 {
                let plane = &sample.image[ch * n..(ch + 1) * n];
                image[ch * m + q] = corners.iter().map(|&(p, wt)| f64::from(plane[p]) * wt).sum::<f64>() as f32;
            }
            let invalid = corners.iter().any(|&(p, wt)| wt > 0.0 && sample.depth[p] <= 0.0);
            depth[q] = if invalid {
                0.0
            } else {
                corners.iter().map(|&(p, wt)| f64::from(sample.depth[p]) * wt).sum::<f64>() as f32
            };
            seg[q] = sample.seg[ny * w + nearest(x, w, sw)];
        }
    }
    SceneSample { height: sh, width: sw, image, seg, depth }
}

/// The `h x w` window at `(oy, ox)`.
pub fn crop(sample: &SceneSample, oy: usize, ox: usize, h: usize, w: usize) -> SceneSample {
    let (sh, sw) = (sample.height, sample.width);
    let (n, m) = (sh * sw, h * w);
    let mut image = vec![0f32; 3 * m];
    let mut seg = vec![0u8; m];
    let mut depth = vec![0f32; m];
    for i in 0..h {
        let src = (oy + i) * sw + ox;
        seg[i * w..(i + 1) * w].copy_from_slice(&sample.seg[src..src + w]);
        depth[i * w..(i + 1) * w].copy_from_slice(&sample.depth[src..src + w]);
        for ch in 0..3 {
            image[ch * m + i * w..ch * m + (i + 1) * w]
                .copy_from_slice(&sample.image[ch * n + src..ch * n + src + w]);
        }
    }
    SceneSample { height: h, width: w, image, seg, depth }
}
