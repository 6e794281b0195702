// SPDX-License-Identifier: MIT OR Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sweep_split, SweepSummary};
use crate::arraystore::Split;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::pooling::{mean_pool, TokenFeatures, TokenMask};
use crate::probes::Grid;
use crate::stats::spearman;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadResult {
    pub head: usize,
    pub channel_start: usize,
    pub channel_end: usize,
    pub sweep: SweepSummary,
}

/// Probes each of `heads` contiguous channel blocks on its own.
#[allow(clippy::too_many_arguments)]
pub fn per_head_probe(
    features: &TokenFeatures,
    heads: usize,
    mask: &TokenMask,
    targets: &Matrix,
    split: &Split,
    grid: &Grid,
    names: &[String],
) -> Result<Vec<HeadResult>> {
    let d = features.dim();
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::InvalidArgument(format!(
            "feature width {d} is not divisible into {heads} heads"
        )));
    }
    let width = d / heads;
    (0..heads)
        .into_par_iter()
        .map(|h| {
            let (start, end) = (h * width, (h + 1) * width);
            let block = features.slice_channels(start, end)?;
            let x = mean_pool(&block, mask)?;
            let result = sweep_split(&x, targets, split, grid, names)?;
            Ok(HeadResult {
                head: h,
                channel_start: start,
                channel_end: end,
                sweep: SweepSummary::from(&result),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCorrelation {
    /// `H x K` Spearman ρ; `None` where a column is constant.
    pub rho: Vec<Vec<Option<f64>>>,
    pub p: Vec<Vec<Option<f64>>>,
    pub max_abs_rho: Option<f64>,
    /// `(head, target)` attaining `max_abs_rho`.
    pub argmax: Option<(usize, usize)>,
}

/// Spearman correlation of every head's attention entropy with every target.
pub fn head_entropy_correlation(entropies: &Matrix, targets: &Matrix) -> Result<EntropyCorrelation> {
    if entropies.nrows() != targets.nrows() {
        return Err(Error::Shape(format!(
            "{} entropy rows but {} target rows",
            entropies.nrows(),
            targets.nrows()
        )));
    }
    let (h, k) = (entropies.ncols(), targets.ncols());
    let cols = |m: &Matrix, j: usize| m.column(j).iter().copied().collect::<Vec<f64>>();
    let ycols: Vec<Vec<f64>> = (0..k).map(|j| cols(targets, j)).collect();
    let mut rho = vec![vec![None; k]; h];
    let mut p = vec![vec![None; k]; h];
    let mut best: Option<(f64, usize, usize)> = None;
    for a in 0..h {
        let e = cols(entropies, a);
        for (b, y) in ycols.iter().enumerate() {
            if let Some(s) = spearman(&e, y)? {
                rho[a][b] = Some(s.rho);
                p[a][b] = Some(s.p);
                if best.is_none_or(|(v, _, _)| s.rho.abs() > v) {
                    best = Some((s.rho.abs(), a, b));
                }
            }
        }
    }
    Ok(EntropyCorrelation {
        rho,
        p,
        max_abs_rho: best.map(|b| b.0),
        argmax: best.map(|b| (b.1, b.2)),
    })
}
