//! Dynamic supervised principal component analysis (DSPCA).
//!
//! Binary classification where class means and covariances drift with a
//! scalar index variable `u`. At each query index the class moments are
//! re-estimated by Gaussian-kernel smoothing, the data are projected onto the
//! top eigenvectors of the local total covariance `Σ̂(u) + ρ δ̂(u) δ̂(u)ᵀ`, and
//! an LDA or QDA rule is applied in the reduced space.
//!
//! Modules, bottom-up:
//! - [`dataset`]: observations, CSV I/O, screening and splitting
//! - [`kernel`]: Nadaraya-Watson moments and leave-one-out bandwidths
//! - [`spectral`]: total covariance, factor trick, projection bases
//! - [`classifier`]: local discriminant rules and batch prediction
//! - [`tuning`]: cross-validated choice of `ρ` and `K`
//! - [`simulation`]: synthetic models, Bayes oracle and benchmark runner

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod simulation;
pub mod spectral;
pub mod tuning;

pub use error::{DspcaError, Result};
