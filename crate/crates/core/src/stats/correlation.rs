// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::dist;
use crate::error::{Error, Result};

/// 1-based ranks, tied values sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation, `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// Two-sided, from `t = ρ √((n−2)/(1−ρ²))` on `n − 2` degrees of freedom.
    pub p: f64,
    pub n: usize,
}

/// Spearman rank correlation. `Ok(None)` when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<Spearman>> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("spearman inputs have lengths {} and {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("spearman needs n >= 3, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("spearman inputs must be finite".into()));
    }
    let Some(rho) = pearson(&average_ranks(x), &average_ranks(y)) else {
        return Ok(None);
    };
    let df = (n - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        (2.0 * dist::t_sf(t.abs(), df)).min(1.0)
    };
    Ok(Some(Spearman { rho, p, n }))
}
