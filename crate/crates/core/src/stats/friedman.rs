// SPDX-License-Identifier: MIT OR Apache-2.0

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::correlation::average_ranks;
use super::dist;
use super::FoldTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    /// Average rank of each model across folds (rank 1 = lowest score).
    pub mean_ranks: Vec<f64>,
}

/// Friedman rank test with models as treatments and folds as blocks.
pub fn friedman(table: &FoldTable) -> Result<FriedmanResult> {
    let m = table.models();
    let f = table.folds();
    if m < 3 {
        return Err(Error::InsufficientData(format!("Friedman needs at least 3 models, got {m}")));
    }
    if f < 2 {
        return Err(Error::InsufficientData(format!("Friedman needs at least 2 folds, got {f}")));
    }
    let mut rank_sums = vec![0.0; m];
    let mut tie_sum = 0.0;
    for fold in 0..f {
        let column: Vec<f64> = table.values.iter().map(|row| row[fold]).collect();
        let ranks = average_ranks(&column);
        for (s, r) in rank_sums.iter_mut().zip(&ranks) {
            *s += r;
        }
        let mut sorted = column.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < m {
            let mut j = i;
            while j + 1 < m && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_sum += t * t * t - t;
            i = j + 1;
        }
    }
    let (mf, ff) = (m as f64, f as f64);
    let mean_ranks: Vec<f64> = rank_sums.iter().map(|s| s / ff).collect();
    let centre = (mf + 1.0) / 2.0;
    let spread: f64 = mean_ranks.iter().map(|r| (r - centre).powi(2)).sum();
    let correction = 1.0 - tie_sum / (ff * mf * (mf * mf - 1.0));
    let df = m - 1;
    if correction <= 1e-12 {
        return Ok(FriedmanResult {
            chi2: 0.0,
            df,
            p: 1.0,
            mean_ranks,
        });
    }
    let chi2 = 12.0 * ff / (mf * (mf + 1.0)) * spread / correction;
    Ok(FriedmanResult {
        chi2,
        df,
        p: dist::chi2_sf(chi2, df as f64),
        mean_ranks,
    })
}

const Q_TABLE: &str = include_str!("../../fixtures/nemenyi_q.csv");

fn q_table() -> &'static Vec<(usize, f64, f64)> {
    static TABLE: OnceLock<Vec<(usize, f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        Q_TABLE
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("models"))
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (
                    f[0].parse().expect("nemenyi table: model count"),
                    f[1].parse().expect("nemenyi table: q_0.05"),
                    f[2].parse().expect("nemenyi table: q_0.10"),
                )
            })
            .collect()
    })
}

/// Critical value `q_α` for `models` treatments (α ∈ {0.05, 0.10}).
pub fn nemenyi_q(models: usize, level: f64) -> Result<f64> {
    let row = q_table()
        .iter()
        .find(|r| r.0 == models)
        .ok_or_else(|| Error::Unsupported(format!("Nemenyi table covers 2..=20 models, got {models}")))?;
    if (level - 0.05).abs() < 1e-12 {
        Ok(row.1)
    } else if (level - 0.10).abs() < 1e-12 {
        Ok(row.2)
    } else {
        Err(Error::Unsupported(format!("Nemenyi table covers levels 0.05 and 0.10, got {level}")))
    }
}

/// Critical difference in average ranks: `q_α √(M(M+1) / (6F))`.
pub fn nemenyi_cd(models: usize, folds: usize, level: f64) -> Result<f64> {
    if folds == 0 {
        return Err(Error::InvalidArgument("fold count must be positive".into()));
    }
    let q = nemenyi_q(models, level)?;
    let m = models as f64;
    Ok(q * (m * (m + 1.0) / (6.0 * folds as f64)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(values: Vec<Vec<f64>>) -> FoldTable {
        let names = (0..values.len()).map(|i| format!("m{i}")).collect();
        FoldTable::new(names, values).unwrap()
    }

    #[test]
    fn identical_models() {
        let t = table(vec![vec![0.5, 0.6, 0.7]; 4]);
        let r = friedman(&t).unwrap();
        assert_eq!(r.chi2, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn consistent_ranking_by_hand() {
        let t = table(vec![vec![0.1, 0.2, 0.3], vec![0.4, 0.5, 0.6], vec![0.7, 0.8, 0.9]]);
        let r = friedman(&t).unwrap();
        assert!((r.chi2 - 6.0).abs() < 1e-9);
        assert!((r.p - (-3.0f64).exp()).abs() < 1e-12);
        assert_eq!(r.df, 2);
        assert_eq!(r.mean_ranks, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn too_few_models() {
        let t = table(vec![vec![0.1, 0.2], vec![0.3, 0.4]]);
        assert!(matches!(friedman(&t), Err(Error::InsufficientData(_))));
    }

    /// Direct transcription: rank each fold, sum, apply the tie-corrected formula.
    fn loop_oracle(values: &[Vec<f64>]) -> f64 {
        let m = values.len();
        let f = values[0].len();
        let mut sums = vec![0.0; m];
        let mut ties = 0.0;
        for fold in 0..f {
            for i in 0..m {
                let x = values[i][fold];
                let below = (0..m).filter(|&j| values[j][fold] < x).count() as f64;
                let equal = (0..m).filter(|&j| values[j][fold] == x).count() as f64;
                sums[i] += below + (equal + 1.0) / 2.0;
                ties += (equal * equal * equal - equal) / equal;
            }
        }
        let (mf, ff) = (m as f64, f as f64);
        let s: f64 = sums.iter().map(|r| (r / ff - (mf + 1.0) / 2.0).powi(2)).sum();
        12.0 * ff / (mf * (mf + 1.0)) * s / (1.0 - ties / (ff * mf * (mf * mf - 1.0)))
    }

    #[test]
    fn matches_loop_oracle_with_ties() {
        let mut g = crate::rng::Gaussian::new(crate::rng::stream_rng(12, 0));
        for _ in 0..25 {
            // rounding to one decimal forces ties
            let values: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..10).map(|_| (g.next() * 3.0).round() / 10.0).collect())
                .collect();
            let r = friedman(&table(values.clone())).unwrap();
            let oracle = loop_oracle(&values);
            if oracle.is_finite() {
                assert!((r.chi2 - oracle).abs() < 1e-10, "{} vs {oracle}", r.chi2);
            }
        }
    }

    #[test]
    fn nemenyi_values() {
        for f in [1usize, 4, 10, 25] {
            assert!((nemenyi_cd(2, f, 0.05).unwrap() - 1.960 / (f as f64).sqrt()).abs() < 1e-3);
        }
        let cd = nemenyi_cd(11, 10, 0.05).unwrap();
        assert!((cd - nemenyi_q(11, 0.05).unwrap() * 2.2f64.sqrt()).abs() < 1e-12);
        assert!((cd - 4.774).abs() < 1e-3);
        assert!(matches!(nemenyi_cd(21, 10, 0.05), Err(Error::Unsupported(_))));
        assert!(matches!(nemenyi_cd(1, 10, 0.05), Err(Error::Unsupported(_))));
        assert!(matches!(nemenyi_cd(5, 10, 0.01), Err(Error::Unsupported(_))));
        let mut last = f64::INFINITY;
        for f in 1..200 {
            let cd = nemenyi_cd(7, f, 0.10).unwrap();
            assert!(cd < last);
            last = cd;
        }
    }

    proptest! {
        #[test]
        fn invariant_under_monotone_transform(seed in 0u64..500) {
            let mut g = crate::rng::Gaussian::new(crate::rng::stream_rng(seed, 0));
            let values: Vec<Vec<f64>> = (0..5).map(|_| (0..8).map(|_| g.next()).collect()).collect();
            let transformed: Vec<Vec<f64>> = values.iter().map(|r| r.iter().map(|v| v.exp() * 2.0 + 1.0).collect()).collect();
            let a = friedman(&table(values)).unwrap();
            let b = friedman(&table(transformed)).unwrap();
            prop_assert!((a.chi2 - b.chi2).abs() < 1e-10);
        }
    }
}
