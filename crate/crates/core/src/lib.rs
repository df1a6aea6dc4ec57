//! Cross-task consistency learning for joint segmentation and depth: models,
//! losses, task weighting, metrics, synthetic scenes and the training loop.

pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod train;
pub mod weighting;

pub use error::{CoreError, Result};
