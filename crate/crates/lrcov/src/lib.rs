//! Sparse covariance estimation for high-dimensional time series.
//!
//! Sample covariance entries of weakly dependent series fluctuate on the
//! scale of their *long-run* variance, not their contemporaneous variance.
//! This crate thresholds the sample covariance matrix with entry-specific
//! thresholds built from kernel long-run-variance estimates, alongside the
//! universal and contemporaneous-variance (Cai-Liu style) thresholding rules
//! it is benchmarked against.
//!
//! The main pipeline is
//!
//! ```text
//! panel --> sample covariance --> entrywise thresholds --> sparse estimate
//!                 |                     ^
//!                 +--- long-run variance (HAC kernel, Andrews bandwidth)
//! ```
//!
//! with the threshold constant selected by block cross-validation over
//! consecutive time blocks. Additional modules provide the VAR(1) simulation
//! designs used for benchmarking, support-recovery metrics, and Markowitz
//! portfolio backtesting.

pub mod cli;
pub mod covariance;
pub mod error;
pub mod linalg;
pub mod lrv;
pub mod metrics;
pub mod panel;
pub mod portfolio;
pub mod report;
pub mod simulate;
pub mod threshold;
pub mod tuning;

pub use error::{Error, Result};
