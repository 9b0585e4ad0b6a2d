//! Entrywise thresholding of the sample covariance matrix.
//!
//! Three estimators share one code path and differ only in the threshold:
//!
//!   proposed   lambda_ij = delta * sqrt(theta_ij   * log p / n)
//!   universal  lambda    = delta * sqrt(             log p / n)
//!   cai-liu    lambda_ij = delta * sqrt(theta_c_ij * log p / n)
//!
//! where theta_ij is the long-run variance of the product series and
//! theta_c_ij the entrywise variance of the cross products. Every rule
//! satisfies the shrinkage conditions: |s(z)| <= |z|, s(z) = 0 for
//! |z| <= lambda, and |s(z) - z| <= lambda.

use crate::covariance::CovEstimate;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::lrv::{KernelSpec, LrvMatrix};
use serde::{Deserialize, Serialize};

/// Shrinkage rule applied entrywise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ThresholdRule {
    Hard,
    Soft,
    AdaptiveLasso { eta: f64 },
}

impl ThresholdRule {
    pub fn validate(&self) -> Result<()> {
        if let ThresholdRule::AdaptiveLasso { eta } = self {
            if eta.is_nan() || *eta < 1.0 {
                return Err(Error::Config(format!(
                    "adaptive-lasso eta must be at least 1, got {eta}"
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        match self {
            ThresholdRule::Hard => "hard".into(),
            ThresholdRule::Soft => "soft".into(),
            ThresholdRule::AdaptiveLasso { eta } => format!("adaptive-lasso({eta})"),
        }
    }
}

/// Which threshold family an estimator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Long-run-variance-adaptive thresholds.
    Proposed,
    /// One universal threshold for all entries.
    Universal,
    /// Entrywise thresholds from the cross-product variance.
    CaiLiu,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Universal => "universal",
            Method::CaiLiu => "cai-liu",
        }
    }
}

/// Full description of a thresholding estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub method: Method,
    pub rule: ThresholdRule,
    pub delta: f64,
    /// Long-run variance settings; only the proposed method reads it.
    pub kernel: KernelSpec,
    /// Threshold the diagonal too (off by default).
    pub threshold_diagonal: bool,
}

impl EstimatorSpec {
    pub fn new(method: Method, rule: ThresholdRule, delta: f64) -> Self {
        EstimatorSpec {
            method,
            rule,
            delta,
            kernel: KernelSpec::qs_andrews(),
            threshold_diagonal: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        self.kernel.validate()?;
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::Config(format!(
                "delta must be finite and nonnegative, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Symmetric boolean mask, packed like SymMatrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportMask {
    dim: usize,
    data: Vec<bool>,
}

impl SupportMask {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        SupportMask {
            dim,
            data: vec![false; dim * (dim + 1) / 2],
        }
    }

    #[inline]
    fn idx(i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        i * (i + 1) / 2 + j
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[Self::idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[Self::idx(i, j)] = v;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Count of true entries over the full matrix (off-diagonal pairs count
    /// twice).
    pub fn count_full(&self) -> usize {
        let mut c = 0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                if self.get(i, j) {
                    c += 1;
                }
            }
        }
        c
    }

    pub fn from_matrix(m: &SymMatrix) -> Self {
        let mut mask = SupportMask::new(m.dim());
        for i in 0..m.dim() {
            for j in 0..=i {
                mask.set(i, j, m.get(i, j) != 0.0);
            }
        }
        mask
    }
}

/// Thresholded covariance estimate with its realized thresholds and support.
#[derive(Debug, Clone)]
pub struct ThresholdedCov {
    pub estimate: SymMatrix,
    pub thresholds: SymMatrix,
    pub support: SupportMask,
    pub spec: EstimatorSpec,
}

/// Exact sum residual: `a + b - fl(a + b)`, computed without error
/// (Knuth two-sum).
fn two_sum_residual(a: f64, b: f64, sum: f64) -> f64 {
    let bv = sum - a;
    let av = sum - bv;
    (a - av) + (b - bv)
}

/// Decide `|s - z| <= lambda` in real arithmetic. The difference of two
/// doubles is `fl(s - z)` plus an exactly representable residual; comparing
/// both parts against lambda settles the inequality without rounding slack.
fn within_band(s: f64, z: f64, lambda: f64) -> bool {
    let d = s - z;
    if d.abs() < lambda {
        // The residual is below half an ulp of d, smaller than the gap to
        // the next double at or above lambda.
        return true;
    }
    if d.abs() > lambda {
        return false;
    }
    let e = two_sum_residual(s, -z, d);
    e == 0.0 || e.signum() != d.signum()
}

/// Apply one shrinkage rule to a single entry.
///
/// Tie at |z| = lambda: the hard rule keeps z (its indicator is >=); soft
/// and adaptive-lasso are zero there by their formulas.
///
/// The shrinkage conditions |s| <= |z| and |s - z| <= lambda hold for the
/// returned double in real arithmetic, not merely up to rounding: where the
/// true difference sits exactly at lambda, the rounded formula value can
/// overshoot the band by an ulp, so the result is walked back toward z
/// until the exactly-evaluated difference is inside.
pub fn apply_rule(rule: &ThresholdRule, z: f64, lambda: f64) -> Result<f64> {
    if lambda < 0.0 || lambda.is_nan() {
        return Err(Error::Config(format!(
            "threshold must be nonnegative, got {lambda}"
        )));
    }
    rule.validate()?;
    let mut s = match rule {
        ThresholdRule::Hard => {
            if z.abs() >= lambda {
                z
            } else {
                0.0
            }
        }
        ThresholdRule::Soft => z.signum() * (z.abs() - lambda).max(0.0),
        ThresholdRule::AdaptiveLasso { eta } => {
            if z == 0.0 || z.abs() <= lambda {
                0.0
            } else {
                z * (1.0 - (lambda / z).abs().powf(*eta)).max(0.0)
            }
        }
    };
    while s != z && !within_band(s, z, lambda) {
        s = if s < z { s.next_up() } else { s.next_down() };
    }
    Ok(s)
}

/// Threshold a sample covariance matrix.
///
/// `p_for_logp` is the full panel dimension entering log p, which stays
/// fixed even when the estimate itself is built on a sub-panel. Degenerate
/// long-run variance entries carry theta = 0 and therefore lambda = 0: a
/// noiseless sample entry is kept as is.
pub fn threshold_matrix(
    cov: &CovEstimate,
    spec: &EstimatorSpec,
    theta: Option<&LrvMatrix>,
    theta_c: Option<&SymMatrix>,
    p_for_logp: usize,
) -> Result<ThresholdedCov> {
    spec.validate()?;
    if p_for_logp < 2 {
        return Err(Error::Config(format!(
            "thresholding needs log p > 0; dimension {p_for_logp} collapses all thresholds"
        )));
    }
    let p = cov.sigma.dim();
    let n = cov.n;
    let log_term = (p_for_logp as f64).ln() / n as f64;
    let base = spec.delta * log_term.sqrt();

    let lambda_of = |i: usize, j: usize| -> Result<f64> {
        match spec.method {
            Method::Universal => Ok(base),
            Method::Proposed => {
                let th = theta.ok_or_else(|| {
                    Error::Config(
                        "proposed thresholds need the long-run variance matrix".into(),
                    )
                })?;
                Ok(base * th.theta.get(i, j).max(0.0).sqrt())
            }
            Method::CaiLiu => {
                let tc = theta_c.ok_or_else(|| {
                    Error::Config(
                        "cai-liu thresholds need the cross-product variance matrix".into(),
                    )
                })?;
                Ok(base * tc.get(i, j).max(0.0).sqrt())
            }
        }
    };

    let mut estimate = SymMatrix::zeros(p);
    let mut thresholds = SymMatrix::zeros(p);
    for i in 0..p {
        for j in 0..=i {
            let z = cov.sigma.get(i, j);
            if i == j && !spec.threshold_diagonal {
                estimate.set(i, j, z);
                continue;
            }
            let lambda = lambda_of(i, j)?;
            thresholds.set(i, j, lambda);
            estimate.set(i, j, apply_rule(&spec.rule, z, lambda)?);
        }
    }
    let support = SupportMask::from_matrix(&estimate);
    Ok(ThresholdedCov {
        estimate,
        thresholds,
        support,
        spec: *spec,
    })
}

/// Nonzero pattern of the thresholded estimate.
pub fn support_of(t: &ThresholdedCov) -> SupportMask {
    SupportMask::from_matrix(&t.estimate)
}
