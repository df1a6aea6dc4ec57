//! Synthetic scenes, augmentation, dataset files and batching.

mod augment;
mod dataset;
mod scene;

pub use augment::{augment, crop, hflip, normalize, prepare_eval, rescale, AugmentConfig};
pub use dataset::{
    read_dataset, read_manifest, write_dataset, ChannelStats, Dataset, DatasetManifest, MANIFEST,
};
pub use scene::{
    class_color, generate_scene, generate_split, to_inverse_disparity, DepthMode, GenConfig, Layout,
    SceneSample,
};

use xtasc_tensor::{Float, Tensor};

use crate::error::{CoreError, Result};

/// A stacked minibatch.
#[derive(Clone, Debug)]
pub struct Batch<T: Float = f32> {
    /// `[N, 3, H, W]`.
    pub images: Tensor<T>,
    /// `N * H * W` labels, void allowed.
    pub seg: Vec<u8>,
    /// `[N, 1, H, W]` depth targets, zero where invalid.
    pub depth: Tensor<T>,
    pub valid_depth: Vec<bool>,
}

impl<T: Float> Batch<T> {
    pub fn from_samples(samples: &[SceneSample]) -> Result<Batch<T>> {
        let first = samples
            .first()
            .ok_or_else(|| CoreError::Mismatch("empty batch".into()))?;
        let (h, w) = (first.height, first.width);
        let n = samples.len();
        let mut images = Vec::with_capacity(n * 3 * h * w);
        let mut seg = Vec::with_capacity(n * h * w);
        let mut depth = Vec::with_capacity(n * h * w);
        for s in samples {
            if (s.height, s.width) != (h, w) {
                return Err(CoreError::Mismatch(format!(
                    "batch mixes {}x{} with {h}x{w}",
                    s.height, s.width
                )));
            }
            images.extend(s.image.iter().map(|&v| T::from_f(f64::from(v))));
            seg.extend_from_slice(&s.seg);
            depth.extend(s.depth.iter().map(|&v| T::from_f(f64::from(v))));
        }
        let valid_depth = depth.iter().map(|&d| d > T::zero()).collect();
        Ok(Batch {
            images: Tensor::from_vec(&[n, 3, h, w], images)?,
            seg,
            depth: Tensor::from_vec(&[n, 1, h, w], depth)?,
            valid_depth,
        })
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
