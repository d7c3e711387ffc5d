//! Reconstruction of high-resolution tri-axial accelerometer windows from
//! dyadically downsampled ones, and leave-one-subject-out evaluation of
//! classical fall detectors with and without that enhancement front end.
//!
//! Pipeline: [`ingest`] trials → [`preprocess`] impact window, downsample,
//! frame, normalize → [`ase`] enhancement → [`features`] → [`classify`] →
//! [`eval`] metrics. [`cost`] estimates the embedded cost of a model.

pub mod ase;
pub mod classify;
pub mod cost;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod preprocess;

pub use error::{Error, Result};
