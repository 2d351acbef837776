//! Neural collapse measurement, feature-space L2 normalization and
//! Gaussian-mixture out-of-distribution scoring for small classifiers.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: dense matrices, SVD, pseudoinverse, row normalization
//! - [`stats`]: labeled feature banks and class statistics
//! - [`metrics`]: the seven collapse metrics and [`NcReport`]
//! - [`model`]: the MLP classifier, cross-entropy and collapse losses, SGD
//! - [`ddu`]: class-conditional Gaussian mixture density scoring
//! - [`eval`]: AUROC, false positives, softmax baseline, spectra, correlation
//! - [`datagen`]: seeded synthetic clusters and OoD probes
//! - [`harness`]: experiment protocols, result files and reports
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod datagen;
pub mod ddu;
pub mod error;
pub mod eval;
pub mod formats;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::RealMatrix;
pub use metrics::NcReport;
pub use stats::{ClassStatistics, FeatureBank};
