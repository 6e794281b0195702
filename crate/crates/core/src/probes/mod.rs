// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear readouts on pooled features: ridge fits, SVD rank truncation,
//! hyperparameter sweeps, and the learned attention-pooling probe.

mod attention;
mod io;

pub use attention::{
    fit_attention_pool, fit_attention_pool_with, mean_pool_baseline, AttnConfig, AttnGradient, AttnProbe,
    EarlyStopping, EpochLog,
};
pub use io::{load_probe, save_probe, ProbeMetadata};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};
use crate::numerics::{self, Matrix, Vector};

/// `ŷ = W x + b`, with the training means kept so the intercept can be
/// rebuilt after truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// `K x d`
    pub weights: Matrix,
    pub bias: Vector,
    pub rank: usize,
    pub alpha: f64,
    pub layer: usize,
    pub model_id: String,
    pub x_mean: Vector,
    pub y_mean: Vector,
    pub target_names: Vec<String>,
}

impl LinearProbe {
    pub fn n_targets(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn with_identity(mut self, model_id: impl Into<String>, layer: usize) -> Self {
        self.model_id = model_id.into();
        self.layer = layer;
        self
    }

    pub fn with_target_names(mut self, names: &[String]) -> Self {
        self.target_names = names.to_vec();
        self
    }
}

/// Full-rank ridge probe on pooled features.
pub fn fit_ridge(x: &Matrix, y: &Matrix, alpha: f64) -> Result<LinearProbe> {
    let design = numerics::center(x, y)?;
    let (weights, bias) = numerics::ridge_solve(&design, alpha)?;
    Ok(LinearProbe {
        rank: weights.nrows().min(weights.ncols()),
        weights,
        bias,
        alpha,
        layer: 0,
        model_id: String::new(),
        x_mean: design.x_mean,
        y_mean: design.y_mean,
        target_names: Vec::new(),
    })
}

/// Keeps the `r` leading singular triplets of `W`.
pub fn rrr_truncate(probe: &LinearProbe, r: usize) -> Result<LinearProbe> {
    if r == 0 {
        return Err(Error::InvalidArgument("truncation rank must be at least 1".into()));
    }
    let full = probe.n_targets().min(probe.n_features());
    if r >= full {
        return Ok(probe.clone());
    }
    let dec = numerics::svd(&probe.weights)?;
    let weights = dec.reconstruct(r);
    let bias = &probe.y_mean - &weights * &probe.x_mean;
    Ok(LinearProbe {
        weights,
        bias,
        rank: r,
        ..probe.clone()
    })
}

pub fn predict(probe: &LinearProbe, x: &Matrix) -> Result<Matrix> {
    if x.ncols() != probe.n_features() {
        return Err(Error::Shape(format!(
            "probe expects {} features, got {}",
            probe.n_features(),
            x.ncols()
        )));
    }
    let mut out = x * probe.weights.transpose();
    for mut row in out.row_iter_mut() {
        row += probe.bias.transpose();
    }
    Ok(out)
}

/// Ranks and ridge strengths searched by [`sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub ranks: Vec<usize>,
    pub alphas: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            ranks: vec![3, 4, 5, 6, 8],
            alphas: vec![1.0, 10.0, 100.0, 1000.0],
        }
    }
}

impl Grid {
    pub fn new(ranks: Vec<usize>, alphas: Vec<f64>) -> Result<Self> {
        let g = Self { ranks, alphas };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ranks.is_empty() || self.alphas.is_empty() {
            return Err(Error::InvalidArgument("hyperparameter grid is empty".into()));
        }
        if self.ranks.contains(&0) {
            return Err(Error::InvalidArgument("ranks must be >= 1".into()));
        }
        if self.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidArgument("alphas must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ranks.len() * self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub rank: usize,
    pub alpha: f64,
    pub holdout_r2_uniform: Option<f64>,
    pub mae: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Rank-major: all alphas for the first rank, then the next rank.
    pub grid: Vec<SweepCell>,
    pub best: (usize, f64),
    pub best_report: EvalReport,
    pub best_probe: LinearProbe,
}

/// Strictly better under the sweep ordering: higher R², then smaller rank,
/// then larger alpha.
pub(crate) fn better_cell(a: (f64, usize, f64), b: (f64, usize, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 > b.2)))
}

/// Fits every `(rank, alpha)` cell on the training set and scores it on the
/// held-out set. Cells that fail are recorded with their error.
pub fn sweep(
    x_train: &Matrix,
    y_train: &Matrix,
    x_test: &Matrix,
    y_test: &Matrix,
    grid: &Grid,
    target_names: &[String],
) -> Result<SweepResult> {
    grid.validate()?;
    if x_test.ncols() != x_train.ncols() || y_test.ncols() != y_train.ncols() {
        return Err(Error::Shape("train and test widths differ".into()));
    }
    // One ridge fit per alpha; ranks only truncate it.
    let per_alpha: Vec<Result<LinearProbe>> = grid
        .alphas
        .par_iter()
        .map(|&alpha| fit_ridge(x_train, y_train, alpha).map(|p| p.with_target_names(target_names)))
        .collect();

    let mut cells = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, usize, f64, EvalReport, LinearProbe)> = None;
    for &rank in &grid.ranks {
        for (&alpha, full) in grid.alphas.iter().zip(&per_alpha) {
            let outcome = full
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|full| {
                    let probe = rrr_truncate(full, rank).map_err(|e| e.to_string())?;
                    let yhat = predict(&probe, x_test).map_err(|e| e.to_string())?;
                    let report = metrics::evaluate(y_test, &yhat, target_names).map_err(|e| e.to_string())?;
                    Ok((probe, report))
                });
            match outcome {
                Ok((probe, report)) => {
                    cells.push(SweepCell {
                        rank,
                        alpha,
                        holdout_r2_uniform: Some(report.r2_uniform_mean),
                        mae: Some(report.mae),
                        error: None,
                    });
                    let key = (report.r2_uniform_mean, rank, alpha);
                    if report.r2_uniform_mean.is_finite()
                        && best.as_ref().is_none_or(|b| better_cell(key, (b.0, b.1, b.2)))
                    {
                        best = Some((report.r2_uniform_mean, rank, alpha, report, probe));
                    }
                }
                Err(msg) => cells.push(SweepCell {
                    rank,
                    alpha,
                    holdout_r2_uniform: None,
                    mae: None,
                    error: Some(msg),
                }),
            }
        }
    }
    let (_, rank, alpha, best_report, best_probe) = best.ok_or_else(|| {
        let first = cells.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        Error::Experiment(format!("every grid cell failed (first error: {first})"))
    })?;
    Ok(SweepResult {
        grid: cells,
        best: (rank, alpha),
        best_report,
        best_probe,
    })
}
