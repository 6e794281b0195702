// SPDX-License-Identifier: MIT OR Apache-2.0

//! Inferential statistics for comparing probes: paired TOST equivalence,
//! Holm–Bonferroni, Friedman and Nemenyi, BCa bootstrap intervals and
//! Spearman correlation.

mod bootstrap;
mod correlation;
pub mod dist;
mod friedman;
mod tost;

pub use bootstrap::{bca_ci, percentile_interval, quantile_sorted, BootstrapCI, BootstrapConfig};
pub use correlation::{average_ranks, pearson, spearman, Spearman};
pub use friedman::{friedman, nemenyi_cd, nemenyi_q, FriedmanResult};
pub use tost::{holm_bonferroni, paired_tost, TostResult};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-fold scores: one row per model, one column per fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTable {
    pub model_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl FoldTable {
    pub fn new(model_names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if model_names.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} model names for {} rows",
                model_names.len(),
                values.len()
            )));
        }
        let folds = values.first().map_or(0, Vec::len);
        if folds < 2 {
            return Err(Error::InsufficientData("a fold table needs at least 2 folds".into()));
        }
        if values.iter().any(|r| r.len() != folds) {
            return Err(Error::Shape("fold table rows have different lengths".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("fold table contains non-finite values".into()));
        }
        Ok(Self { model_names, values })
    }

    pub fn models(&self) -> usize {
        self.values.len()
    }

    pub fn folds(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn mean(&self, model: usize) -> f64 {
        self.values[model].iter().sum::<f64>() / self.folds() as f64
    }

    /// Reads `model,fold_0,fold_1,...` rows; the first row is a header.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => Error::Manifest(format!("{}: {other:?}", path.display())),
            })?;
        let mut names = Vec::new();
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record?;
            let mut fields = record.iter();
            let name = fields
                .next()
                .ok_or_else(|| Error::Manifest("empty fold-table row".into()))?;
            names.push(name.to_string());
            values.push(
                fields
                    .map(|f| {
                        f.parse::<f64>()
                            .map_err(|_| Error::Manifest(format!("bad fold value '{f}' for {name}")))
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Self::new(names, values)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Manifest(format!("{other:?}")),
        })?;
        let mut header = vec!["model".to_string()];
        header.extend((0..self.folds()).map(|f| format!("fold_{f}")));
        w.write_record(&header)?;
        for (name, row) in self.model_names.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
