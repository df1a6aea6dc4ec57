//! Checkpoint directory: `manifest.json` plus one tensor file per parameter
//! and buffer.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use xtasc_tensor::io::{DType, TensorFile};
use xtasc_tensor::{Float, Tensor};

use super::config::ModelConfig;
use crate::data::ChannelStats;
use super::net::XTaskNet;
use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ModelConfig,
    pub dtype: DType,
    pub step: u64,
    pub epoch: usize,
    pub params: Vec<TensorEntry>,
    pub buffers: Vec<TensorEntry>,
    /// Loss-weighting state at save time.
    #[serde(default)]
    pub weighting: serde_json::Value,
    /// Image normalization the network was trained with.
    #[serde(default)]
    pub input_stats: Option<ChannelStats>,
}

/// Training state stored alongside the weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointMeta {
    pub step: u64,
    pub epoch: usize,
    pub weighting: serde_json::Value,
    pub input_stats: Option<ChannelStats>,
}

fn write_all<T: Float>(dir: &Path, tensors: &[(String, Tensor<T>)]) -> Result<Vec<TensorEntry>> {
    tensors
        .iter()
        .map(|(name, t)| {
            let file = format!("{name}.bin");
            t.save(dir.join(&file))?;
            Ok(TensorEntry { name: name.clone(), shape: t.shape().to_vec(), file })
        })
        .collect()
}

pub fn save_checkpoint<T: Float>(
    dir: impl AsRef<Path>,
    net: &XTaskNet<T>,
    meta: &CheckpointMeta,
) -> Result<CheckpointManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let manifest = CheckpointManifest {
        config: net.config.clone(),
        dtype: T::DTYPE,
        step: meta.step,
        epoch: meta.epoch,
        params: write_all(dir, &net.parameters())?,
        buffers: write_all(dir, &net.buffers())?,
        weighting: meta.weighting.clone(),
        input_stats: meta.input_stats.clone(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn read_into<T: Float>(dir: &Path, entries: &[TensorEntry], targets: &[(String, Tensor<T>)]) -> Result<()> {
    let by_name: HashMap<&str, &TensorEntry> = entries.iter().map(|e| (e.name.as_str(), e)).collect();
    if by_name.len() != targets.len() {
        return Err(CoreError::Checkpoint(format!(
            "manifest lists {} tensors, model has {}",
            by_name.len(),
            targets.len()
        )));
    }
    for (name, t) in targets {
        let entry = by_name
            .get(name.as_str())
            .ok_or_else(|| CoreError::Checkpoint(format!("missing tensor {name}")))?;
        let file = TensorFile::read(dir.join(&entry.file))?;
        if file.shape != t.shape() || entry.shape != t.shape() {
            return Err(CoreError::Checkpoint(format!(
                "{name}: stored shape {:?}, model shape {:?}",
                file.shape,
                t.shape()
            )));
        }
        let values = file
            .payload
            .to_f64()
            .ok_or_else(|| CoreError::Checkpoint(format!("{name}: non-float payload")))?;
        let mut data = t.data_mut();
        for (d, v) in data.iter_mut().zip(values) {
            *d = T::from_f(v);
        }
    }
    Ok(())
}

pub fn read_checkpoint_manifest(dir: impl AsRef<Path>) -> Result<CheckpointManifest> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join("manifest.json"))
        .map_err(|e| CoreError::Checkpoint(format!("{}: {e}", dir.display())))?;
    serde_json::from_str(&text).map_err(|e| CoreError::Checkpoint(format!("{}: {e}", dir.display())))
}

pub fn load_checkpoint<T: Float>(dir: impl AsRef<Path>) -> Result<(XTaskNet<T>, CheckpointManifest)> {
    let dir = dir.as_ref();
    let manifest = read_checkpoint_manifest(dir)?;
    let net = XTaskNet::new(manifest.config.clone(), 0)?;
    read_into(dir, &manifest.params, &net.parameters())?;
    read_into(dir, &manifest.buffers, &net.buffers())?;
    Ok((net, manifest))
}
