// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dist::{normal_cdf, normal_quantile};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub b: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            b: 10_000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub z0: f64,
    pub accel: f64,
    /// Resamples dropped because the statistic was not finite.
    pub excluded: usize,
    pub percentile_lower: f64,
    pub percentile_upper: f64,
}

impl BootstrapCI {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Linear-interpolated quantile of ascending `sorted` at `q ∈ [0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Equal-tailed percentile interval of ascending `sorted`.
pub fn percentile_interval(sorted: &[f64], level: f64) -> (f64, f64) {
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(sorted, tail), quantile_sorted(sorted, 1.0 - tail))
}

/// BCa interval for `statistic` over `n` items resampled with replacement.
///
/// The statistic receives the indices of a resample (duplicates included).
/// Resample `b` draws from RNG stream `b`, so results do not depend on
/// thread scheduling.
pub fn bca_ci<F>(n: usize, statistic: F, config: &BootstrapConfig) -> Result<BootstrapCI>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    if n < 2 {
        return Err(Error::InsufficientData(format!("bootstrap needs at least 2 items, got {n}")));
    }
    if config.b < 100 {
        return Err(Error::InvalidArgument(format!("bootstrap needs B >= 100, got {}", config.b)));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must be in (0, 1), got {}", config.level)));
    }
    let all: Vec<usize> = (0..n).collect();
    let point = statistic(&all);
    if !point.is_finite() {
        return Err(Error::Bootstrap(format!("statistic is not finite on the full sample ({point})")));
    }

    let draws: Vec<f64> = (0..config.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(config.seed, b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            statistic(&idx)
        })
        .collect();
    let mut stats: Vec<f64> = draws.into_iter().filter(|v| v.is_finite()).collect();
    let excluded = config.b - stats.len();
    if excluded * 100 > config.b {
        return Err(Error::Bootstrap(format!(
            "{excluded} of {} resamples gave a non-finite statistic",
            config.b
        )));
    }
    if excluded > 0 {
        log::warn!("bootstrap: excluded {excluded} non-finite resamples");
    }
    stats.sort_by(f64::total_cmp);
    let (percentile_lower, percentile_upper) = percentile_interval(&stats, config.level);

    let spread = stats[stats.len() - 1] - stats[0];
    if spread <= 1e-14 * (1.0 + point.abs()) {
        return Ok(BootstrapCI {
            point,
            lower: stats[0],
            upper: stats[0],
            level: config.level,
            b: config.b,
            z0: 0.0,
            accel: 0.0,
            excluded,
            percentile_lower,
            percentile_upper,
        });
    }

    let kept = stats.len() as f64;
    let below = stats.iter().filter(|&&v| v < point).count() as f64;
    let equal = stats.iter().filter(|&&v| v == point).count() as f64;
    // mid-rank for ties, clamped away from 0 and 1
    let frac = ((below + 0.5 * equal) / kept).clamp(0.5 / kept, 1.0 - 0.5 / kept);
    let z0 = normal_quantile(frac);
    let accel = jackknife_acceleration(n, &statistic)?;

    let tail = (1.0 - config.level) / 2.0;
    let adjust = |z: f64| {
        let num = z0 + z;
        normal_cdf(z0 + num / (1.0 - accel * num))
    };
    let lo_q = adjust(normal_quantile(tail));
    let hi_q = adjust(normal_quantile(1.0 - tail));
    Ok(BootstrapCI {
        point,
        lower: quantile_sorted(&stats, lo_q),
        upper: quantile_sorted(&stats, hi_q),
        level: config.level,
        b: config.b,
        z0,
        accel,
        excluded,
        percentile_lower,
        percentile_upper,
    })
}

fn jackknife_acceleration<F>(n: usize, statistic: &F) -> Result<f64>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    let loo: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            statistic(&idx)
        })
        .collect();
    let finite: Vec<f64> = loo.into_iter().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return Err(Error::Bootstrap("jackknife statistic is not finite".into()));
    }
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    let (mut s2, mut s3) = (0.0, 0.0);
    for v in &finite {
        let d = mean - v;
        s2 += d * d;
        s3 += d * d * d;
    }
    if s2 <= 0.0 {
        return Ok(0.0);
    }
    Ok(s3 / (6.0 * s2.powf(1.5)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{uniform, Gaussian};

    fn mean_of(data: &[f64]) -> impl Fn(&[usize]) -> f64 + Sync + '_ {
        move |idx: &[usize]| idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64
    }

    #[test]
    fn constant_data_zero_width() {
        let data = vec![2.5; 30];
        let ci = bca_ci(data.len(), mean_of(&data), &BootstrapConfig { b: 500, ..Default::default() }).unwrap();
        assert_eq!(ci.lower, 2.5);
        assert_eq!(ci.upper, 2.5);
        assert_eq!(ci.width(), 0.0);
    }

    #[test]
    fn symmetric_data_close_to_percentile() {
        let mut g = Gaussian::new(stream_rng(3, 0));
        let data: Vec<f64> = (0..2000).map(|_| g.next()).collect();
        let cfg = BootstrapConfig { b: 2000, level: 0.95, seed: 5 };
        let ci = bca_ci(data.len(), mean_of(&data), &cfg).unwrap();
        let width = ci.percentile_upper - ci.percentile_lower;
        assert!((ci.lower - ci.percentile_lower).abs() < 0.1 * width);
        assert!((ci.upper - ci.percentile_upper).abs() < 0.1 * width);
        assert!(ci.lower <= ci.point && ci.point <= ci.upper);
    }

    #[test]
    fn skewed_data_asymmetric() {
        let mut rng = stream_rng(11, 0);
        let data: Vec<f64> = (0..40).map(|_| -(1.0 - uniform(&mut rng)).ln()).collect();
        let cfg = BootstrapConfig { b: 4000, level: 0.95, seed: 2 };
        let ci = bca_ci(data.len(), mean_of(&data), &cfg).unwrap();

        // jackknife skewness oracle: positive skew gives positive acceleration
        let n = data.len() as f64;
        let total: f64 = data.iter().sum();
        let loo: Vec<f64> = data.iter().map(|x| (total - x) / (n - 1.0)).collect();
        let m = loo.iter().sum::<f64>() / n;
        let s3: f64 = loo.iter().map(|v| (m - v).powi(3)).sum();
        assert!(s3 > 0.0);
        assert!(ci.accel > 0.0);
        assert!(ci.z0 != 0.0);
        assert!(ci.upper - ci.point > ci.point - ci.lower);
    }

    #[test]
    fn reproducible_under_seed() {
        let mut g = Gaussian::new(stream_rng(8, 0));
        let data: Vec<f64> = (0..60).map(|_| g.next()).collect();
        let cfg = BootstrapConfig { b: 300, level: 0.9, seed: 77 };
        let a = bca_ci(data.len(), mean_of(&data), &cfg).unwrap();
        let b = bca_ci(data.len(), mean_of(&data), &cfg).unwrap();
        assert_eq!(a, b);
        let c = bca_ci(data.len(), mean_of(&data), &BootstrapConfig { seed: 78, ..cfg }).unwrap();
        assert_ne!(a.lower, c.lower);
    }

    #[test]
    fn non_finite_resamples() {
        let data: Vec<f64> = (0..50).map(|i| i as f64).collect();
        // statistic is NaN whenever item 0 is drawn: far more than 1% of resamples
        let stat = |idx: &[usize]| if idx.contains(&0) { f64::NAN } else { idx.len() as f64 };
        let r = bca_ci(data.len(), stat, &BootstrapConfig { b: 200, ..Default::default() });
        assert!(matches!(r, Err(Error::Bootstrap(_))));
    }

    #[test]
    fn rejects_small_inputs() {
        let data = vec![1.0, 2.0];
        assert!(bca_ci(1, mean_of(&data), &BootstrapConfig::default()).is_err());
        assert!(bca_ci(2, mean_of(&data), &BootstrapConfig { b: 50, ..Default::default() }).is_err());
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 5.0);
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.125), 1.5);
    }
}
