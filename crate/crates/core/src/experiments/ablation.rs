// SPDX-License-Identifier: MIT OR Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sweep_split, SweepSummary};
use crate::arraystore::Split;
use crate::error::Result;
use crate::numerics::Matrix;
use crate::pooling::{ablate_top_k, mean_pool, AblationMode, TokenFeatures, TokenMask};
use crate::probes::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub baseline_r2: f64,
    pub ablated_r2: f64,
    /// `ablated_r2 − baseline_r2`
    pub delta: f64,
    pub mode: AblationMode,
    pub k: usize,
    pub ablated: SweepSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationComparison {
    pub baseline: SweepSummary,
    pub top_norm: AblationResult,
    pub random: AblationResult,
}

/// Removes `k` tokens per image under `mode`, re-pools, and re-runs the grid.
#[allow(clippy::too_many_arguments)]
pub fn ablate_and_probe(
    features: &TokenFeatures,
    mask: &TokenMask,
    targets: &Matrix,
    split: &Split,
    k: usize,
    mode: AblationMode,
    grid: &Grid,
    seed: u64,
    names: &[String],
    baseline_r2: f64,
) -> Result<AblationResult> {
    let ablated_mask = ablate_top_k(features, mask, k, mode, seed)?;
    let x = mean_pool(features, &ablated_mask)?;
    let result = sweep_split(&x, targets, split, grid, names)?;
    let ablated_r2 = result.best_report.r2_uniform_mean;
    Ok(AblationResult {
        baseline_r2,
        ablated_r2,
        delta: ablated_r2 - baseline_r2,
        mode,
        k,
        ablated: SweepSummary::from(&result),
    })
}

/// Top-norm versus random patch ablation against a shared full-mask baseline.
#[allow(clippy::too_many_arguments)]
pub fn patch_ablation_experiment(
    features: &TokenFeatures,
    mask: &TokenMask,
    targets: &Matrix,
    split: &Split,
    k: usize,
    grid: &Grid,
    seed: u64,
    names: &[String],
) -> Result<AblationComparison> {
    let x = mean_pool(features, mask)?;
    let baseline = sweep_split(&x, targets, split, grid, names)?;
    let base_r2 = baseline.best_report.r2_uniform_mean;
    let mut results: Vec<Result<AblationResult>> = [AblationMode::TopNorm, AblationMode::Random]
        .par_iter()
        .map(|&mode| ablate_and_probe(features, mask, targets, split, k, mode, grid, seed, names, base_r2))
        .collect();
    let random = results.pop().expect("two modes")?;
    let top_norm = results.pop().expect("two modes")?;
    Ok(AblationComparison {
        baseline: SweepSummary::from(&baseline),
        top_norm,
        random,
    })
}
