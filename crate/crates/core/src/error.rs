// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("npy format error: {0}")]
    Format(String),
    #[error("unsupported array layout: {0}")]
    UnsupportedLayout(String),
    #[error("unsupported dtype: {0}")]
    Dtype(String),
    #[error("byte length mismatch: header implies {expected} bytes, payload has {actual}")]
    ByteLength { expected: usize, actual: usize },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("token mask selects no tokens for image {image}")]
    EmptyPool { image: usize },
    #[error("ablation error: {0}")]
    Ablation(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("singular system at alpha = {alpha}; use alpha > 0")]
    Singular { alpha: f64 },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("bootstrap error: {0}")]
    Bootstrap(String),
    #[error("experiment error: {0}")]
    Experiment(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs or configuration rather than by
    /// the computation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Format(_)
                | Error::UnsupportedLayout(_)
                | Error::Dtype(_)
                | Error::ByteLength { .. }
                | Error::Manifest(_)
                | Error::Split(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::InvalidArgument(_)
                | Error::Alignment(_)
        )
    }
}
