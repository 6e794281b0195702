// SPDX-License-Identifier: MIT OR Apache-2.0

//! Probe behavior on planted-linear data whose answer is known.

use probekit::experiments::sweep_split;
use probekit::metrics::evaluate;
use probekit::pooling::{mean_pool, TokenMask};
use probekit::probes::{fit_ridge, load_probe, predict, rrr_truncate, save_probe, Grid};
use probekit::synth::{gen_low_variance_target, gen_planted_linear, SynthData, SynthSpec};
use probekit::Matrix;

fn pooled(data: &SynthData) -> Matrix {
    mean_pool(&data.features, &TokenMask::all(data.spec.t)).unwrap()
}

fn rank_r2(data: &SynthData, rank: usize, alpha: f64) -> f64 {
    let x = pooled(data);
    let s = &data.split;
    let full = fit_ridge(&x.select_rows(&s.train_indices), &data.targets.select_rows(&s.train_indices), alpha).unwrap();
    let probe = rrr_truncate(&full, rank).unwrap();
    let yhat = predict(&probe, &x.select_rows(&s.test_indices)).unwrap();
    evaluate(&data.targets.select_rows(&s.test_indices), &yhat, &[]).unwrap().r2_uniform_mean
}

#[test]
fn noiseless_planted_is_recovered_at_every_sufficient_rank() {
    let spec = SynthSpec {
        n: 1000,
        t: 8,
        d: 16,
        k: 5,
        rank: 5,
        noise_sigma: 0.0,
        seed: 1,
        ..Default::default()
    };
    let data = gen_planted_linear(&spec).unwrap();
    let result = sweep_split(&pooled(&data), &data.targets, &data.split, &Grid::default(), &data.target_names()).unwrap();
    assert!(result.best_report.r2_uniform_mean >= 0.999);
    for rank in [5, 6, 8] {
        let best = result
            .grid
            .iter()
            .filter(|c| c.rank == rank)
            .filter_map(|c| c.holdout_r2_uniform)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best >= 0.999, "rank {rank}: {best}");
    }
}

#[test]
fn planted_rank_two_regimes() {
    let spec = SynthSpec {
        n: 2000,
        t: 8,
        d: 32,
        k: 5,
        rank: 2,
        noise_sigma: 0.1,
        seed: 21,
        ..Default::default()
    };
    let data = gen_planted_linear(&spec).unwrap();
    let full = rank_r2(&data, 5, 1.0);
    let r2 = rank_r2(&data, 2, 1.0);
    let r1 = rank_r2(&data, 1, 1.0);
    assert!((full - r2).abs() < 0.01, "rank 2 {r2} vs full {full}");
    assert!(full - r1 >= 0.05, "rank 1 {r1} vs full {full}");
}

#[test]
fn empirical_r2_tracks_analytic_value() {
    let spec = SynthSpec {
        n: 4000,
        t: 8,
        d: 32,
        k: 4,
        rank: 4,
        noise_sigma: 0.5,
        seed: 2,
        ..Default::default()
    };
    let data = gen_planted_linear(&spec).unwrap();
    let analytic = data.analytic_r2().iter().sum::<f64>() / 4.0;
    assert!((analytic - 0.8).abs() < 1e-12);
    let result = sweep_split(&pooled(&data), &data.targets, &data.split, &Grid::default(), &[]).unwrap();
    assert!((result.best_report.r2_uniform_mean - analytic).abs() < 0.05);
}

#[test]
fn low_variance_target_is_hardest() {
    let stds = vec![1.0, 1.0, 1.0, 1.0, 0.35];
    let spec = SynthSpec {
        n: 4000,
        t: 8,
        d: 32,
        k: 5,
        rank: 3,
        noise_sigma: 0.3,
        target_stds: Some(stds.clone()),
        seed: 5,
        ..Default::default()
    };
    let data = gen_low_variance_target(&spec).unwrap();
    let weak = data.targets.column(4);
    let mean = weak.mean();
    let sd = (weak.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (weak.len() - 1) as f64).sqrt();
    assert!((sd / 0.35 - 1.0).abs() < 0.05, "weak target sd {sd}");

    let result = sweep_split(&pooled(&data), &data.targets, &data.split, &Grid::default(), &data.target_names()).unwrap();
    let per: Vec<f64> = result.best_report.r2_per_target.iter().map(|v| v.unwrap()).collect();
    assert!(per[..4].iter().all(|&r| r > per[4]));
    let mean_r2 = per.iter().sum::<f64>() / 5.0;
    assert!((mean_r2 - result.best_report.r2_uniform_mean).abs() < 1e-12);
    assert!(result.best_report.r2_uniform_mean < per[..4].iter().sum::<f64>() / 4.0);
}

#[test]
fn saved_probe_predicts_identically() {
    let spec = SynthSpec {
        n: 300,
        t: 4,
        d: 10,
        k: 3,
        rank: 2,
        seed: 8,
        ..Default::default()
    };
    let data = gen_planted_linear(&spec).unwrap();
    let x = pooled(&data);
    let result = sweep_split(&x, &data.targets, &data.split, &Grid::new(vec![1, 2], vec![1.0]).unwrap(), &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_probe(dir.path(), &result.best_probe).unwrap();
    let loaded = load_probe(dir.path()).unwrap();
    assert_eq!(predict(&loaded, &x).unwrap(), predict(&result.best_probe, &x).unwrap());
}
