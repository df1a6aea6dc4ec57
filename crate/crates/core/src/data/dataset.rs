//! On-disk dataset layout: `manifest.json` plus `{idx}.img`, `{idx}.seg` and
//! `{idx}.dep` tensor files per sample.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use xtasc_tensor::io::{Payload, TensorFile};

use super::scene::{DepthMode, GenConfig, SceneSample};
use crate::error::{CoreError, Result};

pub const MANIFEST: &str = "manifest.json";

/// Per-channel image statistics over a whole dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl ChannelStats {
    pub fn compute(samples: &[SceneSample]) -> ChannelStats {
        let mut sum = [0f64; 3];
        let mut sq = [0f64; 3];
        let mut count = 0usize;
        for s in samples {
            let n = s.height * s.width;
            for ch in 0..3 {
                for &v in &s.image[ch * n..(ch + 1) * n] {
                    sum[ch] += f64::from(v);
                    sq[ch] += f64::from(v) * f64::from(v);
                }
            }
            count += n;
        }
        let mut mean = [0f32; 3];
        let mut std = [1f32; 3];
        if count > 0 {
            for ch in 0..3 {
                let m = sum[ch] / count as f64;
                let var = (sq[ch] / count as f64 - m * m).max(0.0);
                mean[ch] = m as f32;
                std[ch] = if var > 1e-12 { var.sqrt() as f32 } else { 1.0 };
            }
        }
        ChannelStats { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub depth_mode: DepthMode,
    pub generator: GenConfig,
    pub seed: u64,
    /// Stream id the samples were drawn from.
    pub split: u32,
    pub stats: ChannelStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<SceneSample>,
}

impl Dataset {
    pub fn from_generator(generator: &GenConfig, split: u32, count: usize) -> Result<Dataset> {
        let samples = super::scene::generate_split(generator, split, count)?;
        let manifest = DatasetManifest {
            count,
            height: generator.height,
            width: generator.width,
            num_classes: generator.num_classes,
            depth_mode: generator.depth_mode,
            generator: generator.clone(),
            seed: generator.seed,
            split,
            stats: ChannelStats::compute(&samples),
        };
        Ok(Dataset { manifest, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn write_dataset(dir: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    let m = &dataset.manifest;
    if m.count != dataset.samples.len() {
        return Err(CoreError::CorruptData(format!(
            "manifest count {} but {} samples",
            m.count,
            dataset.samples.len()
        )));
    }
    fs::create_dir_all(dir)?;
    for (idx, s) in dataset.samples.iter().enumerate() {
        if (s.height, s.width) != (m.height, m.width) {
            return Err(CoreError::CorruptData(format!("sample {idx} is {}x{}", s.height, s.width)));
        }
        let (h, w) = (s.height, s.width);
        TensorFile::new(vec![3, h, w], Payload::F32(s.image.clone()))?.write(dir.join(format!("{idx}.img")))?;
        TensorFile::new(vec![h, w], Payload::U8(s.seg.clone()))?.write(dir.join(format!("{idx}.seg")))?;
        TensorFile::new(vec![h, w], Payload::F32(s.depth.clone()))?.write(dir.join(format!("{idx}.dep")))?;
    }
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(m)?)?;
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = dir.as_ref().join(MANIFEST);
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map_err(|e| CoreError::CorruptData(format!("{}: {e}", path.display())))
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let (h, w) = (manifest.height, manifest.width);
    let mut samples = Vec::with_capacity(manifest.count);
    for idx in 0..manifest.count {
        let load = |ext: &str, shape: &[usize]| -> Result<Payload> {
            let f = TensorFile::read(dir.join(format!("{idx}.{ext}")))?;
            if f.shape != shape {
                return Err(CoreError::CorruptData(format!(
                    "{idx}.{ext} has shape {:?}, manifest implies {shape:?}",
                    f.shape
                )));
            }
            Ok(f.payload)
        };
        let image = match load("img", &[3, h, w])? {
            Payload::F32(v) => v,
            p => return Err(wrong_dtype(idx, "img", p)),
        };
        let seg = match load("seg", &[h, w])? {
            Payload::U8(v) => v,
            p => return Err(wrong_dtype(idx, "seg", p)),
        };
        let depth = match load("dep", &[h, w])? {
            Payload::F32(v) => v,
            p => return Err(wrong_dtype(idx, "dep", p)),
        };
        samples.push(SceneSample { height: h, width: w, image, seg, depth });
    }
    Ok(Dataset { manifest, samples })
}

fn wrong_dtype(idx: usize, ext: &str, p: Payload) -> CoreError {
    CoreError::CorruptData(format!("{idx}.{ext} has unexpected dtype {:?}", p.dtype()))
}
