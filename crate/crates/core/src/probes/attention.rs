// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention-pooling probe.
//!
//! A single learned query scores every included token,
//! `a_t = softmax_t(q·h_t / (τ √d))`, the pooled vector `Σ_t a_t h_t` feeds a
//! linear head, and the whole thing is trained on mean squared error with
//! Adam. With `q = 0` the weights are uniform and the model is exactly a
//! mean-pool linear probe, which is how the head is initialized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::pooling::{mean_pool, TokenFeatures, TokenMask};
use crate::probes::{fit_ridge, predict};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnConfig {
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub temperature: f64,
    /// Ridge strength of the mean-pool fit that initializes the head.
    pub init_alpha: f64,
}

impl Default for AttnConfig {
    fn default() -> Self {
        Self {
            lr: 0.02,
            epochs: 300,
            patience: 30,
            val_fraction: 0.2,
            seed: 0,
            batch_size: 64,
            temperature: 1.0,
            init_alpha: 1.0,
        }
    }
}

/// Which data drives early stopping.
#[derive(Debug, Clone, Copy)]
pub enum EarlyStopping<'a> {
    /// Hold out `val_fraction` of the training images.
    Validation,
    /// Stop on a caller-supplied set, e.g. the test split when reproducing a
    /// protocol that early-stopped on test data.
    External {
        features: &'a TokenFeatures,
        mask: &'a TokenMask,
        targets: &'a Matrix,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnProbe {
    pub query: Vector,
    pub temperature: f64,
    /// `K x d`
    pub weights: Matrix,
    pub bias: Vector,
    pub train_log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Gradient of the mean squared error with respect to every parameter.
#[derive(Debug, Clone)]
pub struct AttnGradient {
    pub query: Vector,
    pub weights: Matrix,
    pub bias: Vector,
}

impl AttnProbe {
    /// Uniform attention over a given linear head.
    pub fn uniform(weights: Matrix, bias: Vector, temperature: f64) -> Self {
        Self {
            query: Vector::zeros(weights.ncols()),
            temperature,
            weights,
            bias,
            train_log: Vec::new(),
            best_epoch: 0,
        }
    }

    fn scale(&self) -> f64 {
        1.0 / (self.temperature * (self.query.len() as f64).sqrt())
    }

    /// Attention weights over the tokens of one image (zero where masked).
    pub fn attention(&self, features: &TokenFeatures, mask: &TokenMask, image: usize) -> Vec<f64> {
        let scale = self.scale();
        let row = mask.row(image);
        let mut logits: Vec<f64> = (0..features.tokens())
            .map(|t| {
                if row[t] {
                    scale * dot(self.query.as_slice(), features.token(image, t))
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logits.iter_mut() {
            *l = if l.is_finite() { (*l - max).exp() } else { 0.0 };
            total += *l;
        }
        logits.iter_mut().for_each(|l| *l /= total);
        logits
    }

    fn pooled(&self, features: &TokenFeatures, mask: &TokenMask, image: usize) -> (Vec<f64>, Vec<f64>) {
        let a = self.attention(features, mask, image);
        let mut p = vec![0.0; features.dim()];
        for (t, &w) in a.iter().enumerate().filter(|(_, &w)| w > 0.0) {
            for (acc, v) in p.iter_mut().zip(features.token(image, t)) {
                *acc += w * v;
            }
        }
        (a, p)
    }

    pub fn predict(&self, features: &TokenFeatures, mask: &TokenMask) -> Result<Matrix> {
        self.check(features, mask)?;
        let k = self.weights.nrows();
        let mut out = Matrix::zeros(features.n(), k);
        for i in 0..features.n() {
            let (_, p) = self.pooled(features, mask, i);
            let y = &self.weights * Vector::from_vec(p) + &self.bias;
            out.row_mut(i).copy_from(&y.transpose());
        }
        Ok(out)
    }

    fn check(&self, features: &TokenFeatures, mask: &TokenMask) -> Result<()> {
        if features.dim() != self.query.len() {
            return Err(Error::Shape(format!(
                "probe expects {} channels, got {}",
                self.query.len(),
                features.dim()
            )));
        }
        if mask.len() != features.tokens() {
            return Err(Error::Shape("mask length does not match token count".into()));
        }
        Ok(())
    }

    /// Mean squared error over the listed images, averaged over images and targets.
    pub fn loss(&self, features: &TokenFeatures, mask: &TokenMask, targets: &Matrix, images: &[usize]) -> f64 {
        let k = self.weights.nrows();
        let mut total = 0.0;
        for &i in images {
            let (_, p) = self.pooled(features, mask, i);
            let yhat = &self.weights * Vector::from_vec(p) + &self.bias;
            for j in 0..k {
                total += (yhat[j] - targets[(i, j)]).powi(2);
            }
        }
        total / (images.len() * k) as f64
    }

    pub fn loss_and_gradient(
        &self,
        features: &TokenFeatures,
        mask: &TokenMask,
        targets: &Matrix,
        images: &[usize],
    ) -> (f64, AttnGradient) {
        let (k, d) = self.weights.shape();
        let norm = 1.0 / (images.len() * k) as f64;
        let scale = self.scale();
        let mut grad = AttnGradient {
            query: Vector::zeros(d),
            weights: Matrix::zeros(k, d),
            bias: Vector::zeros(k),
        };
        let mut total = 0.0;
        for &i in images {
            let (a, p) = self.pooled(features, mask, i);
            let p = Vector::from_vec(p);
            let resid = &self.weights * &p + &self.bias - targets.row(i).transpose();
            total += resid.norm_squared();
            let g = resid * (2.0 * norm);
            grad.weights += &g * p.transpose();
            grad.bias += &g;
            // dL/dp, then through the softmax: dL/dlogit_t = a_t (u·h_t − u·p)
            let u = self.weights.tr_mul(&g);
            let up = u.dot(&p);
            for (t, &w) in a.iter().enumerate().filter(|(_, &w)| w > 0.0) {
                let h = features.token(i, t);
                let coeff = w * (dot(u.as_slice(), h) - up) * scale;
                for (gq, v) in grad.query.iter_mut().zip(h) {
                    *gq += coeff * v;
                }
            }
        }
        (total * norm, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn flatten(probe: &AttnProbe) -> Vec<f64> {
    probe
        .query
        .iter()
        .chain(probe.weights.iter())
        .chain(probe.bias.iter())
        .copied()
        .collect()
}

fn unflatten(probe: &mut AttnProbe, flat: &[f64]) {
    let d = probe.query.len();
    let kd = probe.weights.len();
    probe.query.copy_from_slice(&flat[..d]);
    probe.weights.copy_from_slice(&flat[d..d + kd]);
    probe.bias.copy_from_slice(&flat[d + kd..]);
}

fn flatten_grad(g: &AttnGradient) -> Vec<f64> {
    g.query.iter().chain(g.weights.iter()).chain(g.bias.iter()).copied().collect()
}

pub fn fit_attention_pool(
    features: &TokenFeatures,
    mask: &TokenMask,
    targets: &Matrix,
    config: &AttnConfig,
) -> Result<AttnProbe> {
    fit_attention_pool_with(features, mask, targets, config, EarlyStopping::Validation)
}

/// Trains with mini-batch Adam, keeping the parameters of the epoch with the
/// lowest stopping loss. Epoch 0 in the log is the initialization.
pub fn fit_attention_pool_with(
    features: &TokenFeatures,
    mask: &TokenMask,
    targets: &Matrix,
    config: &AttnConfig,
    stopping: EarlyStopping<'_>,
) -> Result<AttnProbe> {
    let n = features.n();
    if features.tokens() < 2 {
        return Err(Error::InvalidArgument("attention pooling needs at least 2 tokens".into()));
    }
    if targets.nrows() != n {
        return Err(Error::Shape(format!("{n} images but {} target rows", targets.nrows())));
    }
    if !(config.temperature > 0.0) || !(config.lr > 0.0) || config.batch_size == 0 {
        return Err(Error::InvalidArgument("temperature, lr and batch_size must be positive".into()));
    }

    let (fit_idx, stop_idx): (Vec<usize>, Vec<usize>) = match stopping {
        EarlyStopping::Validation => {
            if !(config.val_fraction > 0.0 && config.val_fraction <= 0.5) {
                return Err(Error::InvalidArgument(format!(
                    "val_fraction must be in (0, 0.5], got {}",
                    config.val_fraction
                )));
            }
            let perm = rng::permutation(n, config.seed, 0);
            let n_val = ((n as f64 * config.val_fraction).round() as usize).clamp(1, n - 1);
            let mut val = perm[..n_val].to_vec();
            let mut fit = perm[n_val..].to_vec();
            val.sort_unstable();
            fit.sort_unstable();
            (fit, val)
        }
        EarlyStopping::External { features: sf, .. } => ((0..n).collect(), (0..sf.n()).collect()),
    };
    if fit_idx.len() < 2 {
        return Err(Error::InsufficientData("too few training images".into()));
    }

    let fit_features = features.select_images(&fit_idx);
    let fit_mask = mask.select_images(&fit_idx);
    let pooled = mean_pool(&fit_features, &fit_mask)?;
    let fit_targets = targets.select_rows(&fit_idx);
    let head = fit_ridge(&pooled, &fit_targets, config.init_alpha)?;
    let mut probe = AttnProbe::uniform(head.weights, head.bias, config.temperature);
    probe.check(features, mask)?;

    let stop_loss = |p: &AttnProbe| match stopping {
        EarlyStopping::Validation => p.loss(features, mask, targets, &stop_idx),
        EarlyStopping::External {
            features: sf,
            mask: sm,
            targets: st,
        } => p.loss(sf, sm, st, &stop_idx),
    };

    let mut flat = flatten(&probe);
    let mut adam = Adam::new(flat.len());
    let mut best_flat = flat.clone();
    let mut best_loss = stop_loss(&probe);
    let mut log = vec![EpochLog {
        epoch: 0,
        train_loss: probe.loss(features, mask, targets, &fit_idx),
        val_loss: best_loss,
    }];
    let mut best_epoch = 0;
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        let order = rng::permutation(fit_idx.len(), config.seed, epoch as u64);
        let shuffled: Vec<usize> = order.iter().map(|&j| fit_idx[j]).collect();
        for batch in shuffled.chunks(config.batch_size) {
            let (_, grad) = probe.loss_and_gradient(features, mask, targets, batch);
            adam.update(&mut flat, &flatten_grad(&grad), config.lr);
            unflatten(&mut probe, &flat);
        }
        let train_loss = probe.loss(features, mask, targets, &fit_idx);
        let val_loss = stop_loss(&probe);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                reason: format!("non-finite loss (train {train_loss}, stop {val_loss})"),
            });
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_loss {
            best_loss = val_loss;
            best_flat.copy_from_slice(&flat);
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    unflatten(&mut probe, &best_flat);
    probe.train_log = log;
    probe.best_epoch = best_epoch;
    Ok(probe)
}

/// Mean-pool ridge predictions, for comparison with an attention probe.
pub fn mean_pool_baseline(
    train: (&TokenFeatures, &TokenMask, &Matrix),
    test: (&TokenFeatures, &TokenMask),
    alpha: f64,
) -> Result<Matrix> {
    let probe = fit_ridge(&mean_pool(train.0, train.1)?, train.2, alpha)?;
    predict(&probe, &mean_pool(test.0, test.1)?)
}
