//! On-disk format: a JSON manifest plus a contiguous little-endian `f32` blob.
//!
//! The manifest maps each parameter name to its shape and byte range inside
//! the blob. Tensors are laid out back to back in canonical parameter order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::forward::MomentModel;
use super::weights::{ForecastHead, LayerWeights, ModelWeights};
use crate::error::{bail, Error, Result};
use crate::numcore::Tensor;
use crate::scalar::Scalar;

pub const FORMAT: &str = "moment-mini-checkpoint/1";
/// File name used when a checkpoint path names a directory.
pub const DEFAULT_MANIFEST: &str = "model.ckpt";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
    /// Length in bytes.
    pub length: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub config: ModelConfig,
    pub forecast_horizon: Option<usize>,
    /// Blob file name, relative to the manifest's directory.
    pub blob: String,
    pub params: BTreeMap<String, TensorEntry>,
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(DEFAULT_MANIFEST)
    } else {
        path.to_path_buf()
    }
}

/// Writes `<path>` (manifest) and `<path>.bin` (blob); a directory path gets `model.ckpt` inside it.
/// Returns the manifest path.
pub fn save_checkpoint<S: Scalar>(model: &MomentModel<S>, path: &Path) -> Result<PathBuf> {
    let manifest = manifest_path(path);
    let file_name = manifest
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Checkpoint(format!("bad checkpoint path {}", manifest.display())))?;
    let blob_name = format!("{file_name}.bin");

    let mut blob = Vec::new();
    let mut params = BTreeMap::new();
    for (name, t) in model.weights.named() {
        let offset = blob.len() as u64;
        for &v in t.data() {
            blob.extend_from_slice(&v.f32().to_le_bytes());
        }
        params.insert(name, TensorEntry { shape: t.shape().to_vec(), offset, length: blob.len() as u64 - offset });
    }
    let m = CheckpointManifest {
        format: FORMAT.to_string(),
        config: model.config.clone(),
        forecast_horizon: model.forecast_horizon(),
        blob: blob_name.clone(),
        params,
    };
    if let Some(dir) = manifest.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(manifest.with_file_name(&blob_name), blob)?;
    fs::write(&manifest, serde_json::to_string_pretty(&m)?)?;
    Ok(manifest)
}

/// Loads a checkpoint, validating every tensor against the shapes its config implies.
pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<MomentModel<S>> {
    let manifest = manifest_path(path);
    let m: CheckpointManifest = serde_json::from_str(&fs::read_to_string(&manifest)?)?;
    if m.format != FORMAT {
        bail!(Checkpoint, "unsupported format {:?}", m.format);
    }
    m.config.validate()?;
    let blob = fs::read(manifest.with_file_name(&m.blob))?;

    let expected = ModelWeights::<S>::expected_shapes(&m.config, m.forecast_horizon);
    if expected.len() != m.params.len() {
        bail!(Checkpoint, "manifest lists {} tensors, config implies {}", m.params.len(), expected.len());
    }
    let mut tensors = Vec::with_capacity(expected.len());
    for (name, shape) in expected {
        let entry = m.params.get(&name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if entry.shape != shape {
            bail!(Checkpoint, "{name}: stored shape {:?}, config implies {shape:?}", entry.shape);
        }
        let numel: usize = shape.iter().product();
        let (start, len) = (entry.offset as usize, entry.length as usize);
        if len != numel * 4 || start.checked_add(len).is_none_or(|end| end > blob.len()) {
            bail!(Checkpoint, "{name}: byte range {start}+{len} invalid for {numel} values in a {}-byte blob", blob.len());
        }
        let data = blob[start..start + len]
            .chunks_exact(4)
            .map(|b| S::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        tensors.push(Tensor::new(&shape, data)?);
    }

    let mut it = tensors.into_iter();
    let mut next = || it.next().expect("tensor count checked above");
    let patch_weight = next();
    let patch_bias = next();
    let mask_token = next();
    let layers = (0..m.config.n_layers)
        .map(|_| LayerWeights {
            attn_norm: next(),
            q: next(),
            k: next(),
            v: next(),
            o: next(),
            rel_bias: next(),
            ff_norm: next(),
            w1: next(),
            w2: next(),
        })
        .collect();
    let recon_weight = next();
    let recon_bias = next();
    let forecast = m.forecast_horizon.map(|horizon| ForecastHead { horizon, weight: next(), bias: next() });
    let weights = ModelWeights { patch_weight, patch_bias, mask_token, layers, recon_weight, recon_bias, forecast };
    MomentModel::new(m.config, weights)
}
