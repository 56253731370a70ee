//! Differential-privacy budgeting toolkit.
//!
//! The crate is organised around the quantities a practitioner needs when
//! training with differential privacy:
//!
//! * [`mechanisms`]: noise scales for the Laplace and Gaussian mechanisms,
//!   the exponential mechanism, report-noisy-max and per-vector clipping.
//! * [`accountant`]: (ε, δ) guarantees, composition rules, Rényi-DP and
//!   privacy-loss-distribution accounting of the Poisson-subsampled Gaussian
//!   mechanism, noise calibration and the batch-size tradeoff curve.
//! * [`tuning`]: the privacy cost of hyperparameter tuning under several
//!   accounting schemes.
//! * [`train`]: small reference implementations of DP-SGD, microbatched
//!   DP-SGD, gradient accumulation and DP-FedAvg on analytic-gradient models.
//! * [`report`]: structured guarantee reports.
//!
//! Data-parallel loops (per-example gradients, batch-size sweeps, scheme
//! comparison rows) run on rayon when the `parallel` feature is enabled and
//! fall back to plain iterators otherwise. Results are identical either way.

pub mod accountant;
pub mod config;
pub mod error;
pub mod exec;
pub mod mechanisms;
pub mod numeric;
pub mod report;
pub mod rng;
pub mod train;
pub mod tuning;

pub use accountant::{AdjacencyKind, PrivacyGuarantee};
pub use error::{Error, Result};
pub use exec::Execution;
