// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded, counter-based random streams.
//!
//! Every unit of work (a sample, a bootstrap resample, a grid cell) draws
//! from its own ChaCha8 stream selected by `(seed, stream)`. Results are
//! therefore independent of evaluation order and thread count.
//!
//! Gaussian draws use the Box-Muller transform on two 53-bit uniforms so the
//! sequence can be reproduced outside Rust from the ChaCha8 keystream alone.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with a list of labels (SplitMix64 finalizer).
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    let mut state = splitmix(base);
    for &label in labels {
        state = splitmix(state ^ splitmix(label.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    state
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A ChaCha8 generator positioned at the start of stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform in `[0, 1)` with 53 bits of precision.
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draws via Box-Muller, both outputs used.
pub struct Gaussian<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> Gaussian<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - uniform(&mut self.rng);
        let u2 = uniform(&mut self.rng);
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(radius * theta.sin());
        radius * theta.cos()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next();
        }
    }

    pub fn inner(&mut self) -> &mut R {
        &mut self.rng
    }
}

/// Uniformly random permutation of `0..n`.
pub fn permutation(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, stream));
    idx
}

/// `k` distinct values drawn uniformly from `pool`.
pub fn sample_without_replacement(pool: &[usize], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    pool.choose_multiple(rng, k).copied().collect()
}
