// SPDX-License-Identifier: MIT OR Apache-2.0

//! R² and MAE scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Scores of one set of predictions against held-out targets.
///
/// `r2_per_target` holds `None` for targets with zero variance on the
/// evaluation set; those are left out of `r2_uniform_mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub r2_per_target: Vec<Option<f64>>,
    pub r2_uniform_mean: f64,
    pub mae: f64,
    pub n_test: usize,
    pub target_names: Vec<String>,
}

fn check_shapes(y: &Matrix, yhat: &Matrix) -> Result<()> {
    if y.shape() != yhat.shape() {
        return Err(Error::Shape(format!(
            "targets are {:?} but predictions are {:?}",
            y.shape(),
            yhat.shape()
        )));
    }
    Ok(())
}

/// Coefficient of determination of each target column.
pub fn r2_per_target(y: &Matrix, yhat: &Matrix) -> Result<Vec<Option<f64>>> {
    check_shapes(y, yhat)?;
    let n = y.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!("R² needs at least 2 samples, got {n}")));
    }
    Ok(y.column_iter()
        .zip(yhat.column_iter())
        .map(|(col, pred)| {
            let mean = col.mean();
            let ss_tot: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
            let ss_res: f64 = col.iter().zip(pred.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            let floor = n as f64 * (1e-12 * mean.abs().max(1.0)).powi(2);
            (ss_tot > floor).then(|| 1.0 - ss_res / ss_tot)
        })
        .collect())
}

/// Mean of the defined entries, `None` when every target is undefined.
pub fn uniform_mean(r2: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = r2.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Mean absolute error over all samples and targets jointly.
pub fn mae(y: &Matrix, yhat: &Matrix) -> Result<f64> {
    check_shapes(y, yhat)?;
    if y.is_empty() {
        return Err(Error::InsufficientData("MAE of an empty matrix".into()));
    }
    Ok(y.iter().zip(yhat.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn evaluate(y: &Matrix, yhat: &Matrix, target_names: &[String]) -> Result<EvalReport> {
    let r2 = r2_per_target(y, yhat)?;
    let names = if target_names.len() == y.ncols() {
        target_names.to_vec()
    } else {
        (0..y.ncols()).map(|k| format!("target_{k}")).collect()
    };
    for (k, v) in r2.iter().enumerate() {
        if v.is_none() {
            log::warn!("target {} has zero variance; R² undefined and excluded", names[k]);
        }
    }
    let r2_uniform_mean = uniform_mean(&r2).ok_or_else(|| {
        Error::InsufficientData("every target has zero variance on the evaluation set".into())
    })?;
    Ok(EvalReport {
        r2_per_target: r2,
        r2_uniform_mean,
        mae: mae(y, yhat)?,
        n_test: y.nrows(),
        target_names: names,
    })
}
