//! Scenario engine for epidemic spread under non-pharmaceutical interventions
//! (NPIs) and weather.
//!
//! The pipeline has three learned/mechanistic stages:
//!
//! 1. [`reff`]: neural regressors map a daily feature matrix (Fourier-upsampled
//!    weather, engineered weather transforms, NPI levels) to lower/mean/upper
//!    effective reproduction number bands.
//! 2. [`seirfv`]: an age-stratified S/E/I/R/F/V compartmental engine is driven
//!    by each band.
//! 3. [`correction`]: ensembles of small MLPs map raw compartmental output to
//!    historical-scale series with confidence bands.
//!
//! [`scenario`] orchestrates counterfactual ("take one out") and forecast runs
//! on top of a trained [`pipeline::TrainedPipeline`].
//!
//! The crate is `no_std` and only needs `alloc`. File formats, persistence,
//! the HTTP service and the CLI live in the `pansim` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod collateral;
pub mod correction;
pub mod data;
mod error;
pub mod features;
pub mod fourier;
pub mod matrix;
pub mod neural;
pub mod pipeline;
pub mod reff;
pub mod scenario;
pub mod seirfv;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use matrix::Matrix;

/// Calendar date used throughout the crate.
pub use chrono::NaiveDate as Date;
