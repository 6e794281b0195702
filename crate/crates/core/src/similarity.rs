// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear CKA between representations and its relation to probe accuracy.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::stats::{spearman, Spearman};

fn column_centered(x: &Matrix) -> Matrix {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    c
}

/// Linear CKA of two `n`-row representations. `Ok(None)` when either is
/// constant across rows.
pub fn linear_cka(x: &Matrix, y: &Matrix) -> Result<Option<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::Alignment(format!(
            "CKA inputs have {} and {} rows",
            x.nrows(),
            y.nrows()
        )));
    }
    let n = x.nrows();
    if n < 3 {
        return Err(Error::InsufficientData(format!("CKA needs n >= 3, got {n}")));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("CKA inputs must be finite".into()));
    }
    let xc = column_centered(x);
    let yc = column_centered(y);
    let (num, dx, dy) = if n < x.ncols() + y.ncols() {
        // Gram form: tr(Kx Ky) = ‖XᵀY‖²
        let kx = &xc * xc.transpose();
        let ky = &yc * yc.transpose();
        (kx.dot(&ky), kx.norm(), ky.norm())
    } else {
        let cross = xc.transpose() * &yc;
        (cross.norm_squared(), (xc.transpose() * &xc).norm(), (yc.transpose() * &yc).norm())
    };
    let denom = dx * dy;
    if !(denom > 0.0) || denom < 1e-300 {
        return Ok(None);
    }
    Ok(Some((num / denom).clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaMatrix {
    pub models: Vec<String>,
    /// Row-major `M x M`.
    pub values: Vec<Vec<f64>>,
}

impl CkaMatrix {
    pub fn new(models: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let m = models.len();
        if values.len() != m || values.iter().any(|r| r.len() != m) {
            return Err(Error::Shape(format!("CKA matrix must be {m} x {m}")));
        }
        for i in 0..m {
            if (values[i][i] - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "CKA diagonal entry {} is {}, expected 1",
                    models[i], values[i][i]
                )));
            }
            for j in 0..i {
                if (values[i][j] - values[j][i]).abs() > 1e-10 {
                    return Err(Error::InvalidArgument(format!(
                        "CKA matrix is not symmetric at ({}, {})",
                        models[i], models[j]
                    )));
                }
            }
        }
        Ok(Self { models, values })
    }

    /// Pairwise CKA of pooled representations sharing the same sample order.
    pub fn from_features(models: Vec<String>, features: &[Matrix]) -> Result<Self> {
        let m = features.len();
        if models.len() != m {
            return Err(Error::Shape(format!("{} names for {m} feature sets", models.len())));
        }
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
        let entries: Vec<Result<f64>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                linear_cka(&features[i], &features[j])?.ok_or_else(|| {
                    Error::Numeric(format!("CKA undefined for {} vs {} (constant features)", models[i], models[j]))
                })
            })
            .collect();
        let mut values = vec![vec![0.0; m]; m];
        for i in 0..m {
            values[i][i] = 1.0;
        }
        for (&(i, j), v) in pairs.iter().zip(entries) {
            let v = v?;
            values[i][j] = v;
            values[j][i] = v;
        }
        Self::new(models, values)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// CSV with a header row `model,<names...>` and one row per model.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["model".to_string()];
        header.extend(self.models.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.models.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    /// Reads the CSV layout written by [`CkaMatrix::to_csv`]. Lines starting
    /// with `#` are ignored. Only the upper triangle needs to be filled in;
    /// blank cells are mirrored from the transpose and the diagonal defaults
    /// to one.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        let models: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let m = models.len();
        let mut cells: Vec<Vec<Option<f64>>> = Vec::with_capacity(m);
        for (row_idx, rec) in r.records().enumerate() {
            let rec = rec?;
            let name = rec.get(0).unwrap_or_default();
            if models.get(row_idx).map(String::as_str) != Some(name) {
                return Err(Error::Format(format!(
                    "CKA row {row_idx} is {name:?}; rows must follow the header order"
                )));
            }
            let row = (1..=m)
                .map(|c| match rec.get(c).unwrap_or("") {
                    "" => Ok(None),
                    s => s
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::Format(format!("bad CKA value {s:?} in row {name}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            cells.push(row);
        }
        if cells.len() != m {
            return Err(Error::Format(format!("CKA CSV has {} rows for {m} models", cells.len())));
        }
        let mut values = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                values[i][j] = match (cells[i][j], cells[j][i]) {
                    (Some(v), _) | (None, Some(v)) => v,
                    (None, None) if i == j => 1.0,
                    (None, None) => {
                        return Err(Error::Format(format!("CKA entry ({}, {}) missing", models[i], models[j])))
                    }
                };
            }
        }
        Self::new(models, values)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaPair {
    pub model_a: String,
    pub model_b: String,
    pub cka: f64,
    pub abs_delta_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapAnalysis {
    pub pairs: Vec<CkaPair>,
    /// `None` when either column of the pair list is constant.
    pub spearman: Option<Spearman>,
}

/// Pairs each upper-triangle CKA entry with the models' absolute R² gap and
/// rank-correlates the two.
pub fn cka_gap_analysis(cka: &CkaMatrix, r2: &[f64]) -> Result<GapAnalysis> {
    let m = cka.len();
    if m < 3 {
        return Err(Error::InsufficientData(format!("gap analysis needs >= 3 models, got {m}")));
    }
    if r2.len() != m {
        return Err(Error::Shape(format!("{} R² values for {m} models", r2.len())));
    }
    let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            pairs.push(CkaPair {
                model_a: cka.models[i].clone(),
                model_b: cka.models[j].clone(),
                cka: cka.values[i][j],
                abs_delta_r2: (r2[i] - r2[j]).abs(),
            });
        }
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.cka).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.abs_delta_r2).collect();
    Ok(GapAnalysis {
        spearman: spearman(&xs, &ys)?,
        pairs,
    })
}
