// SPDX-License-Identifier: MIT OR Apache-2.0

//! Token-level feature tensors, token masks, mean pooling and patch ablation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng;

/// Row-major `n x t x d` hidden states: image, token, channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatures {
    n: usize,
    t: usize,
    d: usize,
    data: Vec<f64>,
}

impl TokenFeatures {
    pub fn new(n: usize, t: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || t == 0 || d == 0 {
            return Err(Error::Shape(format!("empty feature tensor {n}x{t}x{d}")));
        }
        if data.len() != n * t * d {
            return Err(Error::Shape(format!(
                "feature buffer has {} values, expected {n}x{t}x{d}",
                data.len()
            )));
        }
        Ok(Self { n, t, d, data })
    }

    /// Wraps already-pooled `n x d` features as a single-token tensor.
    pub fn from_pooled(pooled: &Matrix) -> Result<Self> {
        let (n, d) = pooled.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend(pooled.row(i).iter());
        }
        Self::new(n, 1, d, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tokens(&self) -> usize {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn token(&self, image: usize, token: usize) -> &[f64] {
        let start = (image * self.t + token) * self.d;
        &self.data[start..start + self.d]
    }

    pub fn image(&self, image: usize) -> &[f64] {
        let start = image * self.t * self.d;
        &self.data[start..start + self.t * self.d]
    }

    /// Keeps images in the given order.
    pub fn select_images(&self, indices: &[usize]) -> TokenFeatures {
        let mut data = Vec::with_capacity(indices.len() * self.t * self.d);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        TokenFeatures {
            n: indices.len(),
            t: self.t,
            d: self.d,
            data,
        }
    }

    /// Channel slice `[start, end)` of every token.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<TokenFeatures> {
        if start >= end || end > self.d {
            return Err(Error::Shape(format!(
                "channel range {start}..{end} outside 0..{}",
                self.d
            )));
        }
        let width = end - start;
        let mut data = Vec::with_capacity(self.n * self.t * width);
        for chunk in self.data.chunks_exact(self.d) {
            data.extend_from_slice(&chunk[start..end]);
        }
        Ok(TokenFeatures {
            n: self.n,
            t: self.t,
            d: width,
            data,
        })
    }
}

/// Which token positions take part in pooling.
///
/// A mask is either shared by every image (one row of length `t`) or holds
/// one row per image, which is what patch ablation produces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenMask {
    t: usize,
    rows: usize,
    included: Vec<bool>,
}

impl TokenMask {
    pub fn shared(included: Vec<bool>) -> Result<Self> {
        if !included.iter().any(|&b| b) {
            return Err(Error::EmptyPool { image: 0 });
        }
        Ok(Self {
            t: included.len(),
            rows: 1,
            included,
        })
    }

    pub fn all(t: usize) -> Self {
        Self {
            t,
            rows: 1,
            included: vec![true; t],
        }
    }

    /// All tokens except the first `special` (CLS and register tokens).
    pub fn excluding_leading(t: usize, special: usize) -> Result<Self> {
        Self::shared((0..t).map(|i| i >= special).collect())
    }

    pub fn per_image(n: usize, t: usize, included: Vec<bool>) -> Result<Self> {
        if included.len() != n * t {
            return Err(Error::Shape(format!(
                "per-image mask has {} entries, expected {n}x{t}",
                included.len()
            )));
        }
        for (image, row) in included.chunks_exact(t.max(1)).enumerate() {
            if !row.iter().any(|&b| b) {
                return Err(Error::EmptyPool { image });
            }
        }
        Ok(Self {
            t,
            rows: n,
            included,
        })
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn is_per_image(&self) -> bool {
        self.rows > 1
    }

    pub fn row(&self, image: usize) -> &[bool] {
        let r = if self.rows == 1 { 0 } else { image };
        &self.included[r * self.t..(r + 1) * self.t]
    }

    pub fn included_count(&self, image: usize) -> usize {
        self.row(image).iter().filter(|&&b| b).count()
    }

    fn check(&self, features: &TokenFeatures) -> Result<()> {
        if self.t != features.tokens() {
            return Err(Error::Shape(format!(
                "mask length {} does not match {} tokens",
                self.t,
                features.tokens()
            )));
        }
        if self.rows != 1 && self.rows != features.n() {
            return Err(Error::Shape(format!(
                "mask has {} rows for {} images",
                self.rows,
                features.n()
            )));
        }
        Ok(())
    }

    /// Restricts a per-image mask to the given images; shared masks pass through.
    pub fn select_images(&self, indices: &[usize]) -> TokenMask {
        if self.rows == 1 {
            return self.clone();
        }
        let mut included = Vec::with_capacity(indices.len() * self.t);
        for &i in indices {
            included.extend_from_slice(self.row(i));
        }
        TokenMask {
            t: self.t,
            rows: indices.len(),
            included,
        }
    }

    /// Expands to one row per image.
    pub fn to_per_image(&self, n: usize) -> TokenMask {
        if self.rows == n {
            return self.clone();
        }
        let mut included = Vec::with_capacity(n * self.t);
        for i in 0..n {
            included.extend_from_slice(self.row(i));
        }
        TokenMask {
            t: self.t,
            rows: n,
            included,
        }
    }
}

/// Mean of the included token vectors of each image.
pub fn mean_pool(features: &TokenFeatures, mask: &TokenMask) -> Result<Matrix> {
    mask.check(features)?;
    let (n, d) = (features.n(), features.dim());
    let mut out = Matrix::zeros(n, d);
    let mut acc = vec![0.0; d];
    for i in 0..n {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let mut count = 0usize;
        for (t, _) in mask.row(i).iter().enumerate().filter(|(_, &inc)| inc) {
            for (a, v) in acc.iter_mut().zip(features.token(i, t)) {
                *a += v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyPool { image: i });
        }
        let inv = 1.0 / count as f64;
        for (j, a) in acc.iter().enumerate() {
            out[(i, j)] = a * inv;
        }
    }
    Ok(out)
}

/// Euclidean token norms; `selectable` is false for tokens the mask excludes.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchNorms {
    pub n: usize,
    pub t: usize,
    pub norms: Vec<f64>,
    pub selectable: Vec<bool>,
}

impl PatchNorms {
    pub fn norm(&self, image: usize, token: usize) -> f64 {
        self.norms[image * self.t + token]
    }

    pub fn is_selectable(&self, image: usize, token: usize) -> bool {
        self.selectable[image * self.t + token]
    }
}

pub fn patch_norms(features: &TokenFeatures, mask: &TokenMask) -> Result<PatchNorms> {
    mask.check(features)?;
    let (n, t) = (features.n(), features.tokens());
    let mut norms = Vec::with_capacity(n * t);
    let mut selectable = Vec::with_capacity(n * t);
    for i in 0..n {
        let row = mask.row(i);
        for (tok, &inc) in row.iter().enumerate() {
            norms.push(features.token(i, tok).iter().map(|v| v * v).sum::<f64>().sqrt());
            selectable.push(inc);
        }
    }
    Ok(PatchNorms {
        n,
        t,
        norms,
        selectable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// The `k` highest-norm included tokens of each image.
    TopNorm,
    /// `k` included tokens drawn uniformly per image.
    Random,
    /// The `k` positions with the highest norm averaged over images, removed
    /// from every image alike.
    GlobalTopNorm,
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AblationMode::TopNorm => "top_norm",
            AblationMode::Random => "random",
            AblationMode::GlobalTopNorm => "global_top_norm",
        })
    }
}

/// Returns a per-image mask with `k` more tokens excluded per image.
///
/// Norm ties are broken by lower token index. Random mode draws image `i`
/// from stream `i` under `seed`.
pub fn ablate_top_k(
    features: &TokenFeatures,
    mask: &TokenMask,
    k: usize,
    mode: AblationMode,
    seed: u64,
) -> Result<TokenMask> {
    mask.check(features)?;
    let (n, t) = (features.n(), features.tokens());
    let min_included = (0..n).map(|i| mask.included_count(i)).min().unwrap_or(0);
    if k >= min_included {
        return Err(Error::Ablation(format!(
            "cannot remove {k} tokens when an image has only {min_included} included"
        )));
    }
    let mut out = mask.to_per_image(n);
    if k == 0 {
        return Ok(out);
    }
    let norms = patch_norms(features, mask)?;
    let by_norm_desc = |scores: &[(usize, f64)]| -> Vec<usize> {
        let mut s = scores.to_vec();
        s.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        s.into_iter().take(k).map(|(tok, _)| tok).collect()
    };

    let global_choice = if mode == AblationMode::GlobalTopNorm {
        let mut sums = vec![0.0; t];
        let mut counts = vec![0usize; t];
        for i in 0..n {
            for tok in 0..t {
                if norms.is_selectable(i, tok) {
                    sums[tok] += norms.norm(i, tok);
                    counts[tok] += 1;
                }
            }
        }
        let scores: Vec<(usize, f64)> = (0..t)
            .filter(|&tok| counts[tok] > 0)
            .map(|tok| (tok, sums[tok] / counts[tok] as f64))
            .collect();
        Some(by_norm_desc(&scores))
    } else {
        None
    };

    for i in 0..n {
        let candidates: Vec<usize> = (0..t).filter(|&tok| norms.is_selectable(i, tok)).collect();
        let removed = match mode {
            AblationMode::TopNorm => {
                let scores: Vec<(usize, f64)> =
                    candidates.iter().map(|&tok| (tok, norms.norm(i, tok))).collect();
                by_norm_desc(&scores)
            }
            AblationMode::Random => {
                let mut r = rng::stream_rng(seed, i as u64);
                rng::sample_without_replacement(&candidates, k, &mut r)
            }
            AblationMode::GlobalTopNorm => global_choice.clone().unwrap_or_default(),
        };
        for tok in removed {
            out.included[i * t + tok] = false;
        }
        if !out.row(i).iter().any(|&b| b) {
            return Err(Error::Ablation(format!("image {i} has no tokens left")));
        }
    }
    Ok(out)
}
