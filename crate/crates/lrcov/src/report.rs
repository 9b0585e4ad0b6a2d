//! Serializable run reports. Every JSON document carries a top-level
//! `schema` tag so downstream tooling can detect format drift.

use crate::error::{Error, Result};
use crate::metrics::ReplicationSummary;
use crate::tuning::CvResult;
use serde::Serialize;
use std::path::Path;

pub const SCHEMA: &str = "lrcov/1";

/// Spread of the per-entry kernel bandwidths of a fitted long-run variance
/// matrix.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BandwidthStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl BandwidthStats {
    pub fn from_values(values: impl Iterator<Item = f64>) -> Option<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut count = 0usize;
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            count += 1;
        }
        if count == 0 {
            None
        } else {
            Some(BandwidthStats {
                min,
                max,
                mean: sum / count as f64,
            })
        }
    }
}

/// Report written by the estimate command.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub schema: &'static str,
    pub input: String,
    pub n: usize,
    pub p: usize,
    pub method: String,
    pub rule: String,
    pub delta: f64,
    /// "fixed" or "cross-validation".
    pub delta_source: String,
    pub kernel: Option<String>,
    pub cv: Option<CvResult>,
    pub bandwidths: Option<BandwidthStats>,
    /// Entries whose product series was constant; their thresholds are zero.
    pub degenerate_entries: Vec<(usize, usize)>,
    /// Count of entries whose long-run variance was clamped from below.
    pub clamped_entries: usize,
    pub support_nonzeros: usize,
}

/// One estimator's aggregate inside a benchmark configuration.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkEstimatorReport {
    pub estimator: String,
    pub method: String,
    pub rule: String,
    pub summary: ReplicationSummary,
    pub mean_delta: f64,
    pub exact_recovery_failures: usize,
}

/// Report written per benchmark configuration.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkConfigReport {
    pub schema: &'static str,
    pub model: String,
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    /// Model constructions rejected (and redrawn) for failing positive
    /// definiteness.
    pub construction_retries: usize,
    pub estimators: Vec<BenchmarkEstimatorReport>,
}

/// One (window, estimator, portfolio) cell of a backtest run.
#[derive(Debug, Clone, Serialize)]
pub struct BacktestCell {
    pub window: usize,
    pub estimator: String,
    pub portfolio: String,
    pub annualized_risk: f64,
    pub sharpe: Option<f64>,
    pub rebalances: usize,
    pub gmvp_fallbacks: usize,
    pub mean_delta: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BacktestReport {
    pub schema: &'static str,
    pub input: String,
    pub hold: usize,
    pub target_annual_return: f64,
    pub trading_days: usize,
    pub cells: Vec<BacktestCell>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub schema: &'static str,
    pub input: String,
    pub method: String,
    pub top: usize,
    pub bottom: usize,
    /// (column index, score) in rank order, best first.
    pub ranking: Vec<(usize, f64)>,
    /// Columns of the reduced panel, top block then bottom block.
    pub selected: Vec<usize>,
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("report serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
