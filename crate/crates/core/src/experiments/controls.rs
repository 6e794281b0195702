// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::{rows, sweep_split, SweepSummary};
use crate::arraystore::Split;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::probes::Grid;
use crate::rng::{derive_seed, permutation, stream_rng, Gaussian};

const SHUFFLE: u64 = 11;
const RANDOM_FEATURES: u64 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlOutcome {
    pub name: String,
    pub sweep: SweepSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub baseline: SweepSummary,
    pub shuffled_targets: ControlOutcome,
    pub random_features: ControlOutcome,
    pub pixel_baseline: Option<ControlOutcome>,
    pub notices: Vec<String>,
}

/// Re-runs the sweep with training and test targets permuted by the given
/// permutations (positions within each split).
pub fn shuffled_targets_control(
    x: &Matrix,
    y: &Matrix,
    split: &Split,
    grid: &Grid,
    train_perm: &[usize],
    test_perm: &[usize],
    names: &[String],
) -> Result<ControlOutcome> {
    split.validate(x.nrows())?;
    let check = |perm: &[usize], len: usize, which: &str| -> Result<()> {
        let mut seen = vec![false; len];
        if perm.len() != len || perm.iter().any(|&i| i >= len || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::InvalidArgument(format!("{which} permutation is not a permutation of 0..{len}")));
        }
        Ok(())
    };
    check(train_perm, split.train_indices.len(), "train")?;
    check(test_perm, split.test_indices.len(), "test")?;
    let mut shuffled = y.clone();
    for (idx, perm) in [(&split.train_indices, train_perm), (&split.test_indices, test_perm)] {
        let source = rows(y, idx);
        for (pos, &row) in idx.iter().enumerate() {
            shuffled.set_row(row, &source.row(perm[pos]));
        }
    }
    let result = sweep_split(x, &shuffled, split, grid, names)?;
    Ok(ControlOutcome {
        name: "shuffled_targets".into(),
        sweep: SweepSummary::from(&result),
    })
}

/// Unit Gaussian features of the same shape as `x`.
pub fn random_features_control(
    x: &Matrix,
    y: &Matrix,
    split: &Split,
    grid: &Grid,
    seed: u64,
    names: &[String],
) -> Result<ControlOutcome> {
    let mut g = Gaussian::new(stream_rng(derive_seed(seed, &[RANDOM_FEATURES]), 0));
    // filled row by row so the draw order does not depend on storage layout
    let mut noise = Matrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            noise[(i, j)] = g.next();
        }
    }
    let result = sweep_split(&noise, y, split, grid, names)?;
    Ok(ControlOutcome {
        name: "random_features".into(),
        sweep: SweepSummary::from(&result),
    })
}

/// Shuffled-target, random-feature and (when pixels are given) pixel-feature
/// controls next to the real-feature baseline.
pub fn validity_controls(
    x: &Matrix,
    y: &Matrix,
    split: &Split,
    grid: &Grid,
    pixels: Option<&Matrix>,
    seed: u64,
    names: &[String],
) -> Result<ValidityReport> {
    let baseline = SweepSummary::from(&sweep_split(x, y, split, grid, names)?);
    let shuffle_seed = derive_seed(seed, &[SHUFFLE]);
    let train_perm = permutation(split.train_indices.len(), shuffle_seed, 0);
    let test_perm = permutation(split.test_indices.len(), shuffle_seed, 1);
    let shuffled_targets = shuffled_targets_control(x, y, split, grid, &train_perm, &test_perm, names)?;
    let random_features = random_features_control(x, y, split, grid, seed, names)?;
    let mut notices = Vec::new();
    let pixel_baseline = match pixels {
        Some(p) => {
            let result = sweep_split(p, y, split, grid, names)?;
            Some(ControlOutcome {
                name: "pixel_baseline".into(),
                sweep: SweepSummary::from(&result),
            })
        }
        None => {
            let msg = "no pixel tensor supplied; pixel baseline skipped".to_string();
            log::warn!("{msg}");
            notices.push(msg);
            None
        }
    };
    Ok(ValidityReport {
        baseline,
        shuffled_targets,
        random_features,
        pixel_baseline,
        notices,
    })
}
