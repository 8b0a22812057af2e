use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the localization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index ({q}, {p}) outside grid of {radial} radii x {angular} angles")]
    IndexOutOfRange {
        q: usize,
        p: usize,
        radial: usize,
        angular: usize,
    },

    #[error("radius {radius} m is outside the grid range [{min}, {max}] m")]
    OutOfGrid { radius: f64, min: f64, max: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("output length {n_h} too short for linear convolution (need at least {required})")]
    InsufficientPadding { n_h: usize, required: usize },

    #[error("dense operator would have {columns} columns, above the cap of {cap}")]
    DenseTooLarge { columns: usize, cap: usize },

    #[error("echo at {delay:.3} samples does not fit in {n_h} output samples")]
    EchoBeyondWindow { delay: f64, n_h: usize },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
