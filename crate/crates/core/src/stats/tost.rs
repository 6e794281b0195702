// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::dist;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TostResult {
    pub mean_diff: f64,
    /// H₀: mean ≤ −Δ
    pub p_lower: f64,
    /// H₀: mean ≥ +Δ
    pub p_upper: f64,
    pub p_tost: f64,
    pub equivalent_at: f64,
    pub df: usize,
    pub level: f64,
    pub equivalent: bool,
}

/// Two one-sided paired t-tests on `a − b` against the margin `±delta`.
///
/// A zero-variance difference is equivalent (`p_tost = 0`) when its mean
/// lies strictly inside the margin and not equivalent (`p_tost = 1`)
/// otherwise.
pub fn paired_tost(a: &[f64], b: &[f64], delta: f64, level: f64) -> Result<TostResult> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("paired samples have lengths {} and {}", a.len(), b.len())));
    }
    let f = a.len();
    if f < 2 {
        return Err(Error::InsufficientData(format!("TOST needs at least 2 pairs, got {f}")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("equivalence margin must be > 0, got {delta}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must be in (0, 1), got {level}")));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / f as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (f - 1) as f64;
    let sd = var.sqrt();
    let df = f - 1;

    let (p_lower, p_upper) = if sd <= 1e-14 * (1.0 + mean.abs()) {
        if mean.abs() < delta {
            (0.0, 0.0)
        } else if mean >= delta {
            (0.0, 1.0)
        } else {
            (1.0, 0.0)
        }
    } else {
        let se = sd / (f as f64).sqrt();
        let t_lower = (mean + delta) / se;
        let t_upper = (mean - delta) / se;
        (dist::t_sf(t_lower, df as f64), dist::t_cdf(t_upper, df as f64))
    };
    let p_tost = p_lower.max(p_upper);
    Ok(TostResult {
        mean_diff: mean,
        p_lower,
        p_upper,
        p_tost,
        equivalent_at: delta,
        df,
        level,
        equivalent: p_tost < level,
    })
}

/// Holm step-down adjusted p-values, returned in input order.
pub fn holm_bonferroni(pvals: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (j, &idx) in order.iter().enumerate() {
        running = running.max(((m - j) as f64 * pvals[idx]).min(1.0));
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn identical_folds_are_equivalent() {
        let a = [0.55, 0.56, 0.54, 0.57];
        let r = paired_tost(&a, &a, 0.03, 0.05).unwrap();
        assert_eq!(r.p_tost, 0.0);
        assert!(r.equivalent);
    }

    #[test]
    fn constant_shift_outside_margin() {
        let a = [0.6, 0.7, 0.5];
        let b = [0.5, 0.6, 0.4];
        let r = paired_tost(&a, &b, 0.03, 0.05).unwrap();
        assert_eq!(r.p_tost, 1.0);
        assert!(!r.equivalent);
    }

    #[test]
    fn mean_outside_margin_never_equivalent() {
        let a = [0.61, 0.72, 0.55, 0.68, 0.64];
        let b = [0.50, 0.63, 0.47, 0.55, 0.55];
        let r = paired_tost(&a, &b, 0.03, 0.05).unwrap();
        assert!((r.mean_diff - 0.10).abs() < 1e-12);
        assert!(r.p_upper >= 0.5);
        assert!(!r.equivalent);
    }

    #[test]
    fn matches_hand_t_evaluation() {
        // ten folds, differences with mean 0.005 and sd ≈ 0.01
        let z = [-1.4, -1.1, -0.7, -0.3, 0.0, 0.1, 0.4, 0.6, 1.0, 1.4];
        let zm = z.iter().sum::<f64>() / 10.0;
        let zs = (z.iter().map(|v| (v - zm).powi(2)).sum::<f64>() / 9.0).sqrt();
        let d: Vec<f64> = z.iter().map(|v| 0.005 + 0.01 * (v - zm) / zs).collect();
        let b = vec![0.5; 10];
        let a: Vec<f64> = d.iter().map(|x| 0.5 + x).collect();
        let r = paired_tost(&a, &b, 0.03, 0.05).unwrap();

        let m = 0.005;
        let se = 0.01 / 10f64.sqrt();
        let t = StudentsT::new(0.0, 1.0, 9.0).unwrap();
        let p_lower = 1.0 - t.cdf((m + 0.03) / se);
        let p_upper = t.cdf((m - 0.03) / se);
        assert!((r.p_lower - p_lower).abs() < 1e-8);
        assert!((r.p_upper - p_upper).abs() < 1e-8);
        assert!((r.p_tost - p_lower.max(p_upper)).abs() < 1e-8);
        assert!(r.equivalent);
        assert_eq!(r.df, 9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(paired_tost(&[1.0, 2.0], &[1.0], 0.03, 0.05).is_err());
        assert!(paired_tost(&[1.0, 2.0], &[1.0, 2.0], 0.0, 0.05).is_err());
        assert!(paired_tost(&[1.0], &[1.0], 0.03, 0.05).is_err());
    }

    #[test]
    fn holm_by_hand() {
        assert_eq!(holm_bonferroni(&[0.2]).unwrap(), vec![0.2]);
        assert_eq!(holm_bonferroni(&[0.01, 0.04]).unwrap(), vec![0.02, 0.04]);
        assert_eq!(holm_bonferroni(&[0.03, 0.04]).unwrap(), vec![0.06, 0.06]);
        assert_eq!(holm_bonferroni(&[0.04, 0.03]).unwrap(), vec![0.06, 0.06]);
        assert_eq!(holm_bonferroni(&[0.9, 0.8, 0.01]).unwrap(), vec![1.0, 1.0, 0.03]);
        assert!(holm_bonferroni(&[0.5, 1.2]).is_err());
        assert!(holm_bonferroni(&[f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn holm_is_monotone_and_conservative(p in proptest::collection::vec(0.0f64..=1.0, 1..30)) {
            let adj = holm_bonferroni(&p).unwrap();
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
            for w in order.windows(2) {
                prop_assert!(adj[w[0]] <= adj[w[1]]);
            }
            for (a, r) in adj.iter().zip(&p) {
                prop_assert!(a >= r && *a <= 1.0);
            }
        }

        #[test]
        fn tost_decision_is_symmetric(seed in 0u64..1000, delta in 0.005f64..0.1) {
            let mut g = crate::rng::Gaussian::new(crate::rng::stream_rng(seed, 0));
            let a: Vec<f64> = (0..10).map(|_| 0.5 + 0.02 * g.next()).collect();
            let b: Vec<f64> = (0..10).map(|_| 0.5 + 0.02 * g.next()).collect();
            let ab = paired_tost(&a, &b, delta, 0.05).unwrap();
            let ba = paired_tost(&b, &a, delta, 0.05).unwrap();
            prop_assert_eq!(ab.equivalent, ba.equivalent);
            prop_assert!((ab.p_tost - ba.p_tost).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p_lower) && (0.0..=1.0).contains(&ab.p_upper));
        }
    }
}
