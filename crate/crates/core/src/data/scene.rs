//! Procedural layered scenes with aligned segmentation and depth.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::loss::VOID;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthMode {
    Raw,
    InverseDisparity,
}

impl std::str::FromStr for DepthMode {
    type Err = crate::CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(DepthMode::Raw),
            "inverse_disparity" => Ok(DepthMode::InverseDisparity),
            other => Err(config_err(format!("unknown depth mode {other:?}"))),
        }
    }
}

/// Spatial arrangement of classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Far background with randomly placed occluding shapes.
    Scene,
    /// `C` equal-width vertical bands in random class order; every class
    /// covers the same area.
    Balanced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    pub depth_mode: DepthMode,
    pub noise_std: f64,
    pub seed: u64,
    pub layout: Layout,
    /// Nearest depth any surface can have.
    pub min_depth: f64,
    /// Depth of the top background row.
    pub max_depth: f64,
    /// Probability that a pixel is marked depth-invalid.
    pub invalid_fraction: f64,
    /// Probability that a pixel is labeled void.
    pub void_fraction: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            height: 32,
            width: 64,
            num_classes: 7,
            min_shapes: 2,
            max_shapes: 6,
            depth_mode: DepthMode::InverseDisparity,
            noise_std: 0.03,
            seed: 0,
            layout: Layout::Scene,
            min_depth: 1.0,
            max_depth: 10.0,
            invalid_fraction: 0.02,
            void_fraction: 0.02,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.height % 8 != 0 || self.width % 8 != 0 {
            return Err(config_err(format!(
                "scene size {}x{} must be positive multiples of 8",
                self.height, self.width
            )));
        }
        if self.num_classes == 0 || self.num_classes > VOID as usize {
            return Err(config_err(format!("num_classes {} outside 1..=255", self.num_classes)));
        }
        if self.min_shapes > self.max_shapes {
            return Err(config_err("min_shapes exceeds max_shapes"));
        }
        if !(self.min_depth > 0.0 && self.max_depth > self.min_depth) {
            return Err(config_err("need 0 < min_depth < max_depth"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(config_err("noise_std must be nonnegative"));
        }
        for p in [self.invalid_fraction, self.void_fraction] {
            if !(0.0..1.0).contains(&p) {
                return Err(config_err(format!("mask fraction {p} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Nearest background depth (bottom row); foreground classes live below it.
    pub fn background_near(&self) -> f64 {
        self.min_depth + 0.8 * (self.max_depth - self.min_depth)
    }

    /// Center depth of a foreground class `k >= 1`. Classes occupy disjoint
    /// depth bands between `min_depth` and the background.
    pub fn class_depth(&self, k: usize) -> f64 {
        let band = self.class_band();
        self.min_depth + band * (k as f64 - 0.5)
    }

    fn class_band(&self) -> f64 {
        (self.background_near() - self.min_depth) / (self.num_classes.max(2) - 1) as f64
    }

    /// RNG for sample `index` of split `split`; distinct (split, index)
    /// pairs use disjoint ChaCha streams.
    pub fn sample_rng(&self, split: u32, index: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((u64::from(split) << 32) | u64::from(index));
        rng
    }
}

/// One scene. `depth` holds the target in the generator's depth mode.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub height: usize,
    pub width: usize,
    /// Channel-major `3 x H x W`.
    pub image: Vec<f32>,
    pub seg: Vec<u8>,
    /// Zero marks an invalid pixel.
    pub depth: Vec<f32>,
}

impl SceneSample {
    pub fn valid_depth(&self) -> Vec<bool> {
        self.depth.iter().map(|&d| d > 0.0).collect()
    }
}

/// Base colors of the first classes; later classes get hashed colors.
const PALETTE: [[f32; 3]; 8] = [
    [0.55, 0.75, 0.95],
    [0.90, 0.20, 0.20],
    [0.20, 0.80, 0.25],
    [0.25, 0.30, 0.90],
    [0.95, 0.85, 0.15],
    [0.85, 0.30, 0.85],
    [0.15, 0.85, 0.85],
    [0.95, 0.55, 0.15],
];

pub fn class_color(k: usize) -> [f32; 3] {
    if k < PALETTE.len() {
        return PALETTE[k];
    }
    let h = (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let c = |s: u32| 0.15 + 0.8 * (((h >> s) & 0xff) as f32 / 255.0);
    [c(0), c(8), c(16)]
}

enum Shape {
    Rect { y0: f64, y1: f64, x0: f64, x1: f64 },
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Rect { y0, y1, x0, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Shape::Ellipse { cy, cx, ry, rx } => {
                let (dy, dx) = ((y - cy) / ry, (x - cx) / rx);
                dy * dy + dx * dx <= 1.0
            }
        }
    }
}

fn random_shape(h: f64, w: f64, rng: &mut impl Rng) -> Shape {
    let ry = rng.gen_range(h / 8.0..h / 3.0);
    let rx = rng.gen_range(w / 10.0..w / 4.0);
    let cy = rng.gen_range(0.0..h);
    let cx = rng.gen_range(0.0..w);
    if rng.gen_bool(0.5) {
        Shape::Rect { y0: cy - ry, y1: cy + ry, x0: cx - rx, x1: cx + rx }
    } else {
        Shape::Ellipse { cy, cx, ry, rx }
    }
}

/// Draws one scene. Class 0 is the background; foreground class `k` sits at
/// [`GenConfig::class_depth`] up to a jitter that keeps class depth bands
/// disjoint.
pub fn generate_scene(cfg: &GenConfig, rng: &mut impl Rng) -> SceneSample {
    let (h, w) = (cfg.height, cfg.width);
    let n = h * w;
    let mut seg = vec![0u8; n];
    let mut depth = vec![0f64; n];
    let near_bg = cfg.background_near();
    let row_bg = |i: usize| {
        let t = if h > 1 { i as f64 / (h - 1) as f64 } else { 0.0 };
        cfg.max_depth + t * (near_bg - cfg.max_depth)
    };
    for i in 0..h {
        depth[i * w..(i + 1) * w].fill(row_bg(i));
    }
    let band = cfg.class_band();
    let fg_classes = cfg.num_classes - 1;
    match cfg.layout {
        Layout::Scene if fg_classes > 0 => {
            let k = rng.gen_range(cfg.min_shapes..=cfg.max_shapes);
            let mut shapes: Vec<(usize, f64, Shape)> = (0..k)
                .map(|_| {
                    let class = rng.gen_range(1..=fg_classes);
                    let d = cfg.class_depth(class) + rng.gen_range(-0.3..0.3) * band;
                    (class, d, random_shape(h as f64, w as f64, rng))
                })
                .collect();
            // paint far to near so nearer shapes occlude
            shapes.sort_by(|a, b| b.1.total_cmp(&a.1));
            for (class, d, shape) in &shapes {
                for i in 0..h {
                    for j in 0..w {
                        if shape.contains(i as f64 + 0.5, j as f64 + 0.5) {
                            seg[i * w + j] = *class as u8;
                            depth[i * w + j] = *d;
                        }
                    }
                }
            }
        }
        Layout::Scene => {}
        Layout::Balanced => {
            let mut order: Vec<usize> = (0..cfg.num_classes).collect();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let c = cfg.num_classes;
            for (b, &class) in order.iter().enumerate() {
                let (j0, j1) = (b * w / c, (b + 1) * w / c);
                if class == 0 {
                    continue;
                }
                let d = cfg.class_depth(class);
                for i in 0..h {
                    for j in j0..j1 {
                        seg[i * w + j] = class as u8;
                        depth[i * w + j] = d;
                    }
                }
            }
        }
    }

    let noise = Normal::new(0.0, cfg.noise_std).expect("validated noise_std");
    let mut image = vec![0f32; 3 * n];
    for p in 0..n {
        let shade = 0.35 + 0.65 * cfg.min_depth / depth[p];
        let color = class_color(seg[p] as usize);
        for ch in 0..3 {
            let v = f64::from(color[ch]) * shade + noise.sample(rng);
            image[ch * n + p] = v.clamp(0.0, 1.0) as f32;
        }
    }
    for p in 0..n {
        if rng.gen_bool(cfg.void_fraction) {
            seg[p] = VOID;
        }
        if rng.gen_bool(cfg.invalid_fraction) {
            depth[p] = 0.0;
        }
    }
    let raw: Vec<f32> = depth.iter().map(|&d| d as f32).collect();
    let depth = match cfg.depth_mode {
        DepthMode::Raw => raw,
        DepthMode::InverseDisparity => to_inverse_disparity(&raw),
    };
    SceneSample { height: h, width: w, image, seg, depth }
}

/// `1/d` on valid pixels, 0 where invalid.
pub fn to_inverse_disparity(depth: &[f32]) -> Vec<f32> {
    depth.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect()
}

/// Samples `0..count` of `split`, each drawn from its own stream.
pub fn generate_split(cfg: &GenConfig, split: u32, count: usize) -> Result<Vec<SceneSample>> {
    cfg.validate()?;
    Ok((0..count)
        .map(|i| generate_scene(cfg, &mut cfg.sample_rng(split, i as u32)))
        .collect())
}
