//! Pairwise spoofing detection from short-term RSS vector estimates.
//!
//! Two transmissions are compared through their RSS vectors `f` and `f'`
//! measured over `M` receive channels. H0 means both came from the same
//! location, H1 that they did not. The crate provides:
//!
//! - [`signal_model`]: a log-distance synthetic channel and the windowed RSS
//!   estimator,
//! - [`dataset`]: measurement files and labeled pair construction,
//! - [`neural`] and [`detector`]: the commutative network detector,
//! - [`benchmarks`]: distance-threshold and k-means baselines,
//! - [`eval`]: the Monte Carlo harness behind the CLI.

pub mod benchmarks;
pub mod config;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod eval;
pub mod model_file;
pub mod neural;
pub mod seed;
pub mod selfcheck;
pub mod signal_model;

pub use config::ExperimentConfig;
pub use dataset::{LabeledPair, MeasurementSet, PairLabel, PairSet};
pub use detector::{Decision, DetectorModel, Hypothesis};
pub use error::{Error, Result};
pub use eval::{Algorithm, EvalReport};
