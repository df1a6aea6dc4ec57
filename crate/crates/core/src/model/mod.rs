//! Encoder, task decoders, task-transfer networks and their composition.

mod checkpoint;
mod config;
mod decoder;
mod encoder;
mod net;
mod ttnet;

pub use checkpoint::{load_checkpoint, read_checkpoint_manifest, save_checkpoint, CheckpointManifest, CheckpointMeta, TensorEntry};
pub use config::{ModelConfig, Variant};
pub use decoder::Decoder;
pub use encoder::{Encoder, ResidualBlock};
pub use net::*;
pub use ttnet::{DoubleConv, TransferNet};
