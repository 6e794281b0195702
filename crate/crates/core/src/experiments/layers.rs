// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::{sweep_split, SweepSummary};
use crate::arraystore::{FeatureSet, TargetSet};
use crate::error::{Error, Result};
use crate::probes::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCurve {
    pub layers: Vec<usize>,
    pub r2: Vec<f64>,
    pub best_layer: usize,
}

impl LayerCurve {
    /// Picks the layer with the highest R²; ties go to the deeper layer.
    pub fn from_values(layers: Vec<usize>, r2: Vec<f64>) -> Result<Self> {
        if layers.is_empty() || layers.len() != r2.len() {
            return Err(Error::Shape(format!("{} layers for {} R² values", layers.len(), r2.len())));
        }
        if r2.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("layer R² values must be finite".into()));
        }
        let mut best = 0;
        for i in 1..layers.len() {
            if r2[i] > r2[best] || (r2[i] == r2[best] && layers[i] > layers[best]) {
                best = i;
            }
        }
        Ok(Self {
            best_layer: layers[best],
            layers,
            r2,
        })
    }

    pub fn best_r2(&self) -> f64 {
        let i = self.layers.iter().position(|&l| l == self.best_layer).expect("best layer is listed");
        self.r2[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSweep {
    pub curve: LayerCurve,
    pub per_layer: Vec<SweepSummary>,
}

/// Sweeps the probe grid on every layer over one fixed split.
pub fn layer_sweep(layers: &[(FeatureSet, TargetSet)], grid: &Grid) -> Result<LayerSweep> {
    let (first, first_targets) = layers
        .first()
        .ok_or_else(|| Error::InvalidArgument("layer sweep needs at least one layer".into()))?;
    for (fs, ts) in &layers[1..] {
        if fs.split != first.split {
            return Err(Error::Experiment(format!(
                "layer {} uses a different split than layer {}",
                fs.layer, first.layer
            )));
        }
        if fs.dataset_name != first.dataset_name || fs.tokens.n() != first.tokens.n() {
            return Err(Error::Experiment(format!(
                "layer {} comes from a different dataset than layer {}",
                fs.layer, first.layer
            )));
        }
        if ts.values != first_targets.values {
            return Err(Error::Experiment(format!("layer {} has different targets", fs.layer)));
        }
    }
    let mut per_layer = Vec::with_capacity(layers.len());
    for (fs, ts) in layers {
        let x = fs.pooled()?;
        let result = sweep_split(&x, &ts.values, &fs.split, grid, &ts.names)?;
        log::info!(
            "layer {}: R² {:.4} at rank {} alpha {}",
            fs.layer,
            result.best_report.r2_uniform_mean,
            result.best.0,
            result.best.1
        );
        per_layer.push(SweepSummary::from(&result));
    }
    let curve = LayerCurve::from_values(
        layers.iter().map(|(fs, _)| fs.layer).collect(),
        per_layer.iter().map(|s| s.report.r2_uniform_mean).collect(),
    )?;
    Ok(LayerSweep { curve, per_layer })
}
