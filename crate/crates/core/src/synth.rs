// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic datasets with a known linear answer.
//!
//! All generators are pure functions of a [`SynthSpec`]. Sample `i` draws its
//! tokens and its target noise from dedicated ChaCha8 streams, so output is
//! bitwise identical across runs and thread counts. Target signal variance is
//! fixed exactly by construction, which makes the population R² of every
//! target known in closed form (see [`SynthData::analytic_r2`]).

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arraystore::{write_tensor, DatasetManifest, Split, TensorFile};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::pooling::TokenFeatures;
use crate::rng::{derive_seed, permutation, stream_rng, uniform, Gaussian};

const TOKENS: u64 = 1;
const NOISE: u64 = 2;
const WEIGHTS: u64 = 3;
const LATENT: u64 = 4;
const SPLIT: u64 = 5;
const PIXELS: u64 = 6;

/// Ratio between consecutive singular values of the planted map.
pub const SPECTRUM_DECAY: f64 = 0.6;
/// Norm multiplier applied to signal-carrying patches.
pub const SIGNAL_SCALE: f64 = 3.0;
/// Per-patch jitter around the shared latent on signal patches.
pub const PATCH_JITTER: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub t: usize,
    pub d: usize,
    pub k: usize,
    pub rank: usize,
    pub noise_sigma: f64,
    #[serde(default)]
    pub signal_patches: Option<Vec<usize>>,
    /// Total standard deviation of each target (signal and noise together).
    #[serde(default)]
    pub target_stds: Option<Vec<f64>>,
    pub seed: u64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_test_fraction() -> f64 {
    0.2
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            t: 16,
            d: 32,
            k: 5,
            rank: 2,
            noise_sigma: 0.1,
            signal_patches: None,
            target_stds: None,
            seed: 0,
            test_fraction: default_test_fraction(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n < 4 || self.t == 0 || self.d == 0 || self.k == 0 {
            return bad(format!(
                "synthetic dims must be positive with n >= 4 (n={}, T={}, d={}, K={})",
                self.n, self.t, self.d, self.k
            ));
        }
        if self.rank == 0 || self.rank > self.k.min(self.d) {
            return bad(format!("rank {} must be in 1..={}", self.rank, self.k.min(self.d)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test fraction must be in (0, 1), got {}", self.test_fraction));
        }
        if let Some(p) = &self.signal_patches {
            if let Some(bad_idx) = p.iter().find(|&&i| i >= self.t) {
                return bad(format!("signal patch {bad_idx} outside 0..{}", self.t));
            }
            let mut sorted = p.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != p.len() {
                return bad("signal patches contain duplicates".into());
            }
        }
        if let Some(s) = &self.target_stds {
            if s.len() != self.k {
                return bad(format!("{} target stds for K = {}", s.len(), self.k));
            }
            if let Some(v) = s.iter().find(|&&v| !(v > self.noise_sigma) || !v.is_finite()) {
                return bad(format!(
                    "target std {v} must exceed the noise sigma {}",
                    self.noise_sigma
                ));
            }
        }
        Ok(())
    }

    /// Signal variance of each target.
    pub fn signal_variances(&self) -> Vec<f64> {
        match &self.target_stds {
            Some(s) => s.iter().map(|v| v * v - self.noise_sigma * self.noise_sigma).collect(),
            None => vec![1.0; self.k],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub features: TokenFeatures,
    /// `n x K`
    pub targets: Matrix,
    /// `K x d` map from the signal source to targets.
    pub true_w: Matrix,
    pub signal_var: Vec<f64>,
    pub split: Split,
}

impl SynthData {
    /// Population R² per target: `1 − σ² / var(y_k)`.
    pub fn analytic_r2(&self) -> Vec<f64> {
        let s2 = self.spec.noise_sigma.powi(2);
        self.signal_var.iter().map(|v| 1.0 - s2 / (v + s2)).collect()
    }

    pub fn target_names(&self) -> Vec<String> {
        (0..self.spec.k).map(|k| format!("target_{k}")).collect()
    }
}

/// `K x d` matrix of the requested rank with singular values decaying by
/// [`SPECTRUM_DECAY`], rows rescaled so that `‖w_k‖² · source_var` equals
/// the requested signal variance. Columns outside `channels` are zero.
fn planted_map(spec: &SynthSpec, channels: (usize, usize), source_var: f64) -> Matrix {
    let (lo, hi) = channels;
    let width = hi - lo;
    let r = spec.rank.min(width);
    let mut g = Gaussian::new(stream_rng(derive_seed(spec.seed, &[WEIGHTS]), 0));
    let left = Matrix::from_fn(spec.k, r, |_, _| g.next()).qr().q();
    let right = Matrix::from_fn(width, r, |_, _| g.next()).qr().q();
    let spectrum = Matrix::from_diagonal(&nalgebra::DVector::from_fn(r, |j, _| SPECTRUM_DECAY.powi(j as i32)));
    let core = &left * spectrum * right.transpose();

    let mut w = Matrix::zeros(spec.k, spec.d);
    let targets = spec.signal_variances();
    for k in 0..spec.k {
        let row = core.row(k);
        let norm2 = row.norm_squared();
        // a row can vanish only if the random basis is degenerate
        let scale = if norm2 > 0.0 { (targets[k] / (norm2 * source_var)).sqrt() } else { 0.0 };
        for c in 0..width {
            w[(k, lo + c)] = row[c] * scale;
        }
    }
    w
}

fn make_split(spec: &SynthSpec) -> Split {
    let perm = permutation(spec.n, derive_seed(spec.seed, &[SPLIT]), 0);
    let n_test = ((spec.n as f64 * spec.test_fraction).round() as usize).clamp(1, spec.n - 1);
    let mut test_indices = perm[..n_test].to_vec();
    let mut train_indices = perm[n_test..].to_vec();
    test_indices.sort_unstable();
    train_indices.sort_unstable();
    Split {
        train_indices,
        test_indices,
    }
}

fn add_noise(spec: &SynthSpec, clean: &Matrix) -> Matrix {
    let mut y = clean.clone();
    if spec.noise_sigma == 0.0 {
        return y;
    }
    let noise_seed = derive_seed(spec.seed, &[NOISE]);
    for i in 0..spec.n {
        let mut g = Gaussian::new(stream_rng(noise_seed, i as u64));
        for k in 0..spec.k {
            y[(i, k)] += spec.noise_sigma * g.next();
        }
    }
    y
}

fn pooled_mean(features: &TokenFeatures) -> Matrix {
    let (t, d) = (features.tokens(), features.dim());
    Matrix::from_fn(features.n(), d, |i, c| {
        (0..t).map(|tok| features.token(i, tok)[c]).sum::<f64>() / t as f64
    })
}

/// I.i.d. Gaussian tokens; targets are a planted low-rank map of the
/// mean-pooled tokens plus Gaussian noise.
pub fn gen_planted_linear(spec: &SynthSpec) -> Result<SynthData> {
    gen_planted_channels(spec, 0, spec.d)
}

/// As [`gen_planted_linear`] with the planted map confined to channels
/// `start..end`; other channels are pure noise.
pub fn gen_planted_channels(spec: &SynthSpec, start: usize, end: usize) -> Result<SynthData> {
    spec.validate()?;
    if start >= end || end > spec.d {
        return Err(Error::InvalidArgument(format!("channel range {start}..{end} outside 0..{}", spec.d)));
    }
    let (n, t, d) = (spec.n, spec.t, spec.d);
    let token_seed = derive_seed(spec.seed, &[TOKENS]);
    let mut data = vec![0.0; n * t * d];
    data.par_chunks_mut(t * d).enumerate().for_each(|(i, chunk)| {
        Gaussian::new(stream_rng(token_seed, i as u64)).fill(chunk);
    });
    let features = TokenFeatures::new(n, t, d, data)?;
    // pooled tokens have per-channel variance 1/T
    let true_w = planted_map(spec, (start, end), 1.0 / t as f64);
    let clean = pooled_mean(&features) * true_w.transpose();
    Ok(SynthData {
        targets: add_noise(spec, &clean),
        features,
        true_w,
        signal_var: spec.signal_variances(),
        split: make_split(spec),
        spec: spec.clone(),
    })
}

/// Task signal confined to `signal_patches`.
///
/// Each image has a latent `s ~ N(0, I_d)`. Signal patches carry
/// `SIGNAL_SCALE · (s + PATCH_JITTER · η)` with channel 0 replaced by the
/// constant marker `SIGNAL_SCALE`; every other patch is unit Gaussian noise,
/// so signal patches have roughly three times the norm. Targets are
/// `W s + noise` with `W` ignoring channel 0.
pub fn gen_concentrated(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let patches = match &spec.signal_patches {
        Some(p) if !p.is_empty() => p.clone(),
        _ => return Err(Error::InvalidArgument("concentrated generator needs signal patches".into())),
    };
    if spec.d < 2 {
        return Err(Error::InvalidArgument("concentrated generator needs d >= 2".into()));
    }
    let (n, t, d) = (spec.n, spec.t, spec.d);
    let mut is_signal = vec![false; t];
    for &p in &patches {
        is_signal[p] = true;
    }
    let latent_seed = derive_seed(spec.seed, &[LATENT]);
    let token_seed = derive_seed(spec.seed, &[TOKENS]);
    let mut latent = vec![0.0; n * d];
    latent.par_chunks_mut(d).enumerate().for_each(|(i, s)| {
        Gaussian::new(stream_rng(latent_seed, i as u64)).fill(s);
    });
    let mut data = vec![0.0; n * t * d];
    data.par_chunks_mut(t * d).enumerate().for_each(|(i, chunk)| {
        let s = &latent[i * d..(i + 1) * d];
        let mut g = Gaussian::new(stream_rng(token_seed, i as u64));
        for (tok, row) in chunk.chunks_mut(d).enumerate() {
            g.fill(row);
            if is_signal[tok] {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = SIGNAL_SCALE * (s[c] + PATCH_JITTER * *v);
                }
                row[0] = SIGNAL_SCALE;
            }
        }
    });
    let features = TokenFeatures::new(n, t, d, data)?;
    let true_w = planted_map(spec, (1, d), 1.0);
    let source = Matrix::from_row_slice(n, d, &latent);
    let clean = source * true_w.transpose();
    Ok(SynthData {
        targets: add_noise(spec, &clean),
        features,
        true_w,
        signal_var: spec.signal_variances(),
        split: make_split(spec),
        spec: spec.clone(),
    })
}

/// Planted linear data where targets have the requested total standard
/// deviations; the smallest entry plays the weak, low-variance target.
pub fn gen_low_variance_target(spec: &SynthSpec) -> Result<SynthData> {
    if spec.target_stds.is_none() {
        return Err(Error::InvalidArgument("low-variance generator needs target stds".into()));
    }
    gen_planted_linear(spec)
}

/// Uniform `[0, 1)` stand-ins for flattened pixels, independent of targets.
pub fn gen_pixels(n: usize, dim: usize, seed: u64) -> Matrix {
    let pixel_seed = derive_seed(seed, &[PIXELS]);
    let mut data = vec![0.0; n * dim];
    data.par_chunks_mut(dim).enumerate().for_each(|(i, row)| {
        let mut rng = stream_rng(pixel_seed, i as u64);
        for v in row {
            *v = uniform(&mut rng);
        }
    });
    Matrix::from_row_slice(n, dim, &data)
}

/// Writes `features.npy`, `targets.npy`, optional `pixels.npy` and a
/// manifest into `dir`; returns the manifest path.
pub fn write_dataset(
    dir: impl AsRef<Path>,
    data: &SynthData,
    model_id: &str,
    layer: usize,
    pixels: Option<&Matrix>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let f = &data.features;
    write_tensor(
        dir.join("features.npy"),
        &TensorFile::f64(vec![f.n(), f.tokens(), f.dim()], f.as_slice().to_vec())?,
    )?;
    write_tensor(dir.join("targets.npy"), &TensorFile::from_matrix(&data.targets))?;
    let pixel_file = match pixels {
        Some(p) => {
            if p.nrows() != f.n() {
                return Err(Error::Shape(format!("{} pixel rows for {} samples", p.nrows(), f.n())));
            }
            write_tensor(dir.join("pixels.npy"), &TensorFile::from_matrix(p))?;
            Some(PathBuf::from("pixels.npy"))
        }
        None => None,
    };
    let manifest = DatasetManifest {
        model_id: model_id.to_string(),
        layer,
        dataset_name: "synthetic".into(),
        pooling_hint: "mean".into(),
        feature_file: "features.npy".into(),
        target_file: "targets.npy".into(),
        token_mask_file: None,
        attention_entropy_file: None,
        pixel_file,
        target_names: data.target_names(),
        target_units: "a.u.".into(),
        split: data.split.clone(),
        seed: data.spec.seed,
        num_special_tokens: 0,
    };
    let path = dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            n: 200,
            t: 8,
            d: 12,
            k: 4,
            rank: 2,
            noise_sigma: 0.2,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = gen_planted_linear(&small()).unwrap();
        let b = gen_planted_linear(&small()).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.targets, b.targets);
        let c = gen_planted_linear(&SynthSpec { seed: 4, ..small() }).unwrap();
        assert_ne!(a.targets, c.targets);
    }

    #[test]
    fn planted_rank_and_signal_variance() {
        let data = gen_planted_linear(&small()).unwrap();
        let sv = data.true_w.clone().svd(false, false).singular_values;
        assert!(sv[1] > 1e-8 && sv[2] < 1e-10);
        // ‖w_k‖² / T is the per-target signal variance
        for k in 0..4 {
            assert!((data.true_w.row(k).norm_squared() / 8.0 - 1.0).abs() < 1e-12);
        }
        let r2 = data.analytic_r2();
        assert!((r2[0] - 1.0 / 1.04).abs() < 1e-12);
    }

    #[test]
    fn noiseless_targets_are_exact() {
        let spec = SynthSpec { noise_sigma: 0.0, ..small() };
        let data = gen_planted_linear(&spec).unwrap();
        let pooled = pooled_mean(&data.features);
        let resid = &data.targets - pooled * data.true_w.transpose();
        assert!(resid.amax() < 1e-12);
    }

    #[test]
    fn concentrated_layout() {
        let spec = SynthSpec {
            t: 10,
            signal_patches: Some(vec![2, 7]),
            ..small()
        };
        let data = gen_concentrated(&spec).unwrap();
        let f = &data.features;
        for i in 0..5 {
            assert_eq!(f.token(i, 2)[0], SIGNAL_SCALE);
            assert_eq!(f.token(i, 7)[0], SIGNAL_SCALE);
        }
        assert!(data.true_w.column(0).iter().all(|&v| v == 0.0));
        let norm = |tok: usize| (0..spec.n).map(|i| f.token(i, tok).iter().map(|v| v * v).sum::<f64>()).sum::<f64>();
        assert!(norm(2) > 4.0 * norm(0));
        assert!(gen_concentrated(&small()).is_err());
    }

    #[test]
    fn split_partitions_samples() {
        let data = gen_planted_linear(&small()).unwrap();
        data.split.validate(200).unwrap();
        assert_eq!(data.split.test_indices.len(), 40);
        assert_eq!(data.split.train_indices.len(), 160);
    }

    #[test]
    fn spec_validation() {
        assert!(SynthSpec { rank: 5, ..small() }.validate().is_err());
        assert!(SynthSpec { signal_patches: Some(vec![8]), ..small() }.validate().is_err());
        assert!(SynthSpec { target_stds: Some(vec![1.0, 1.0, 0.1, 1.0]), ..small() }.validate().is_err());
        assert!(gen_low_variance_target(&small()).is_err());
    }

    #[test]
    fn pixels_in_unit_interval() {
        let p = gen_pixels(10, 30, 1);
        assert!(p.iter().all(|v| (0.0..1.0).contains(v)));
        assert_eq!(p, gen_pixels(10, 30, 1));
    }
}
