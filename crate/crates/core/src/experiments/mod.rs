// SPDX-License-Identifier: MIT OR Apache-2.0

//! Composite procedures built from the probes and statistics: layer sweeps,
//! nested cross-validation, equivalence clustering, patch and head
//! ablations, and validity controls.

mod ablation;
mod cluster;
mod controls;
mod cv;
mod heads;
mod layers;

pub use ablation::{ablate_and_probe, patch_ablation_experiment, AblationComparison, AblationResult};
pub use cluster::{equivalence_cluster, ClusterReport, PairTest};
pub use controls::{
    random_features_control, shuffled_targets_control, validity_controls, ControlOutcome, ValidityReport,
};
pub use cv::{fold_assignment, nested_cv, CvConfig, CvResult};
pub use heads::{head_entropy_correlation, per_head_probe, EntropyCorrelation, HeadResult};
pub use layers::{layer_sweep, LayerCurve, LayerSweep};

use serde::{Deserialize, Serialize};

use crate::arraystore::Split;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::numerics::Matrix;
use crate::probes::{sweep, Grid, SweepCell, SweepResult};

/// Serializable digest of a [`SweepResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub best_rank: usize,
    pub best_alpha: f64,
    pub report: EvalReport,
    pub grid: Vec<SweepCell>,
}

impl From<&SweepResult> for SweepSummary {
    fn from(s: &SweepResult) -> Self {
        Self {
            best_rank: s.best.0,
            best_alpha: s.best.1,
            report: s.best_report.clone(),
            grid: s.grid.clone(),
        }
    }
}

pub(crate) fn rows(m: &Matrix, idx: &[usize]) -> Matrix {
    m.select_rows(idx)
}

/// Runs [`sweep`] on the train/test partition of `x` and `y`.
pub fn sweep_split(x: &Matrix, y: &Matrix, split: &Split, grid: &Grid, names: &[String]) -> Result<SweepResult> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!("{} feature rows but {} target rows", x.nrows(), y.nrows())));
    }
    split.validate(x.nrows())?;
    sweep(
        &rows(x, &split.train_indices),
        &rows(y, &split.train_indices),
        &rows(x, &split.test_indices),
        &rows(y, &split.test_indices),
        grid,
        names,
    )
}
