// SPDX-License-Identifier: MIT OR Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rows;
use crate::error::{Error, Result};
use crate::metrics;
use crate::numerics::Matrix;
use crate::probes::{better_cell, fit_ridge, predict, rrr_truncate, Grid, LinearProbe};
use crate::rng::{derive_seed, permutation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            outer_folds: 10,
            inner_folds: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// `None` for folds whose fit failed.
    pub per_fold_r2: Vec<Option<f64>>,
    /// Mean over the folds that succeeded.
    pub mean: f64,
    pub chosen_hp_per_fold: Vec<Option<(usize, f64)>>,
    pub failures: Vec<String>,
}

/// Shuffled assignment of `0..n` into `folds` near-equal test folds.
pub fn fold_assignment(n: usize, folds: usize, seed: u64, stream: u64) -> Vec<Vec<usize>> {
    let perm = permutation(n, seed, stream);
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut fold = perm[start..start + len].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += len;
    }
    out
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut held = vec![false; n];
    for &i in fold {
        held[i] = true;
    }
    (0..n).filter(|&i| !held[i]).collect()
}

fn score(probe: &LinearProbe, x: &Matrix, y: &Matrix) -> Result<f64> {
    let yhat = predict(probe, x)?;
    let report = metrics::evaluate(y, &yhat, &[])?;
    Ok(report.r2_uniform_mean)
}

/// Inner-CV choice of `(rank, alpha)` on one outer-training set.
fn select(x: &Matrix, y: &Matrix, grid: &Grid, inner_folds: usize, seed: u64) -> Result<(usize, f64)> {
    let n = x.nrows();
    let folds = fold_assignment(n, inner_folds, seed, 0);
    let cells = grid.len();
    let mut sums = vec![0.0; cells];
    let mut valid = vec![true; cells];
    for fold in &folds {
        let train = complement(n, fold);
        let (xt, yt) = (rows(x, &train), rows(y, &train));
        let (xv, yv) = (rows(x, fold), rows(y, fold));
        for (ai, &alpha) in grid.alphas.iter().enumerate() {
            let full = fit_ridge(&xt, &yt, alpha);
            for (ri, &rank) in grid.ranks.iter().enumerate() {
                let cell = ri * grid.alphas.len() + ai;
                let r2 = full
                    .as_ref()
                    .map_err(|e| Error::Numeric(e.to_string()))
                    .and_then(|p| score(&rrr_truncate(p, rank)?, &xv, &yv));
                match r2 {
                    Ok(v) if v.is_finite() => sums[cell] += v,
                    _ => valid[cell] = false,
                }
            }
        }
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for (ri, &rank) in grid.ranks.iter().enumerate() {
        for (ai, &alpha) in grid.alphas.iter().enumerate() {
            let cell = ri * grid.alphas.len() + ai;
            if !valid[cell] {
                continue;
            }
            let key = (sums[cell] / folds.len() as f64, rank, alpha);
            if best.is_none_or(|b| better_cell(key, b)) {
                best = Some(key);
            }
        }
    }
    best.map(|(_, r, a)| (r, a))
        .ok_or_else(|| Error::Experiment("every inner-CV cell failed".into()))
}

/// Nested cross-validation: an outer `outer_folds` split for evaluation and
/// an inner `inner_folds` split of each outer-training set for picking
/// `(rank, alpha)`.
pub fn nested_cv(x: &Matrix, y: &Matrix, grid: &Grid, config: &CvConfig) -> Result<CvResult> {
    grid.validate()?;
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::Shape(format!("{n} feature rows but {} target rows", y.nrows())));
    }
    if config.outer_folds < 2 || config.inner_folds < 2 {
        return Err(Error::InvalidArgument("fold counts must be >= 2".into()));
    }
    if n < 2 * config.outer_folds {
        return Err(Error::InsufficientData(format!(
            "{n} samples is too few for {} outer folds",
            config.outer_folds
        )));
    }
    let outer = fold_assignment(n, config.outer_folds, config.seed, 0);
    let outcomes: Vec<Result<(f64, (usize, f64))>> = outer
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let train = complement(n, test);
            let (xt, yt) = (rows(x, &train), rows(y, &train));
            let inner_seed = derive_seed(config.seed, &[f as u64 + 1]);
            let (rank, alpha) = select(&xt, &yt, grid, config.inner_folds, inner_seed)?;
            let probe = rrr_truncate(&fit_ridge(&xt, &yt, alpha)?, rank)?;
            let r2 = score(&probe, &rows(x, test), &rows(y, test))?;
            Ok((r2, (rank, alpha)))
        })
        .collect();

    let mut per_fold_r2 = Vec::with_capacity(outer.len());
    let mut chosen_hp_per_fold = Vec::with_capacity(outer.len());
    let mut failures = Vec::new();
    for (f, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((r2, hp)) => {
                per_fold_r2.push(Some(r2));
                chosen_hp_per_fold.push(Some(hp));
            }
            Err(e) => {
                log::warn!("outer fold {f} failed: {e}");
                failures.push(format!("fold {f}: {e}"));
                per_fold_r2.push(None);
                chosen_hp_per_fold.push(None);
            }
        }
    }
    let ok: Vec<f64> = per_fold_r2.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(Error::Experiment(format!("every outer fold failed ({})", failures.join("; "))));
    }
    Ok(CvResult {
        mean: ok.iter().sum::<f64>() / ok.len() as f64,
        per_fold_r2,
        chosen_hp_per_fold,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition() {
        for (n, k) in [(10, 3), (23, 10), (100, 10), (7, 7)] {
            let folds = fold_assignment(n, k, 4, 0);
            assert_eq!(folds.len(), k);
            let mut all: Vec<usize> = folds.concat();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn too_few_samples() {
        let x = Matrix::zeros(15, 2);
        let y = Matrix::zeros(15, 1);
        assert!(matches!(
            nested_cv(&x, &y, &Grid::default(), &CvConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
