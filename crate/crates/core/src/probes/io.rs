// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LinearProbe;
use crate::arraystore::{read_tensor, write_tensor, TensorFile};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

pub const METADATA_FILE: &str = "probe.json";

/// Contents of `probe.json`; the arrays live in sibling NPY files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetadata {
    pub rank: usize,
    pub alpha: f64,
    pub layer: usize,
    pub model_id: String,
    pub target_names: Vec<String>,
    pub n_features: usize,
    pub n_targets: usize,
    pub weights_file: String,
    pub bias_file: String,
    pub x_mean_file: String,
    pub y_mean_file: String,
}

pub fn save_probe(dir: impl AsRef<Path>, probe: &LinearProbe) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = ProbeMetadata {
        rank: probe.rank,
        alpha: probe.alpha,
        layer: probe.layer,
        model_id: probe.model_id.clone(),
        target_names: probe.target_names.clone(),
        n_features: probe.n_features(),
        n_targets: probe.n_targets(),
        weights_file: "weights.npy".into(),
        bias_file: "bias.npy".into(),
        x_mean_file: "x_mean.npy".into(),
        y_mean_file: "y_mean.npy".into(),
    };
    write_tensor(dir.join(&meta.weights_file), &TensorFile::from_matrix(&probe.weights))?;
    write_tensor(dir.join(&meta.bias_file), &TensorFile::from_vector(probe.bias.as_slice()))?;
    write_tensor(dir.join(&meta.x_mean_file), &TensorFile::from_vector(probe.x_mean.as_slice()))?;
    write_tensor(dir.join(&meta.y_mean_file), &TensorFile::from_vector(probe.y_mean.as_slice()))?;
    let path = dir.join(METADATA_FILE);
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_probe(dir: impl AsRef<Path>) -> Result<LinearProbe> {
    let dir = dir.as_ref();
    let path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: ProbeMetadata = serde_json::from_str(&text)?;

    let weights = read_tensor(dir.join(&meta.weights_file))?;
    if weights.shape != [meta.n_targets, meta.n_features] {
        return Err(Error::Shape(format!(
            "weights shape {:?} disagrees with metadata {}x{}",
            weights.shape, meta.n_targets, meta.n_features
        )));
    }
    let vector = |file: &str, len: usize| -> Result<Vector> {
        let t = read_tensor(dir.join(file))?;
        if t.len() != len {
            return Err(Error::Shape(format!("{file} has {} values, expected {len}", t.len())));
        }
        Ok(Vector::from_vec(t.to_f64()))
    };
    Ok(LinearProbe {
        weights: Matrix::from_row_slice(meta.n_targets, meta.n_features, &weights.to_f64()),
        bias: vector(&meta.bias_file, meta.n_targets)?,
        rank: meta.rank,
        alpha: meta.alpha,
        layer: meta.layer,
        model_id: meta.model_id,
        x_mean: vector(&meta.x_mean_file, meta.n_features)?,
        y_mean: vector(&meta.y_mean_file, meta.n_targets)?,
        target_names: meta.target_names,
    })
}
