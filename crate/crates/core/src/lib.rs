//! Localization of acoustic image sources, and hence nearby reflecting
//! walls, from impulse responses measured on a uniform circular microphone
//! array around a loudspeaker of known directivity.
//!
//! The pipeline:
//!
//! - [`grid`]: polar grid of candidate image-source positions,
//! - [`directivity`]: sampled loudspeaker response per emission angle,
//! - [`forward_model`]: FFT-based measurement operator and its adjoint,
//! - [`simulator`]: ground-truth channels from wall scenes plus noise,
//! - [`estimators`]: delay-and-sum, sparse (lasso) and GCC-PHAT localizers,
//! - [`experiments`]: Monte Carlo harness producing CSV results.

pub mod delay;
pub mod directivity;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod forward_model;
pub mod grid;
pub mod simulator;

pub use error::{Error, Result};
