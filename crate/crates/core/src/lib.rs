// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear probing toolkit for frozen feature tensors.
//!
//! The crate reads token-level hidden states (NPY tensors plus a JSON
//! manifest), pools them, fits reduced-rank ridge probes onto continuous
//! targets and runs the comparison machinery around them: equivalence
//! testing, rank statistics, bootstrap intervals, linear CKA, patch and
//! head ablations, and validity controls.
//!
//! Everything is computed in `f64`. Randomness is always derived from an
//! explicit seed through counter-based streams, so results do not depend on
//! thread scheduling.

pub mod arraystore;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod numerics;
pub mod pooling;
pub mod probes;
pub mod rng;
pub mod similarity;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use numerics::Matrix;
