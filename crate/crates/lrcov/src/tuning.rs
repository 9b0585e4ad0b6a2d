//! Threshold-constant selection by cross-validation.
//!
//! The block scheme splits time into K consecutive blocks. Each block in
//! turn is the validation set; the estimator is refitted on the remaining
//! observations (optionally separated by a buffer), with every statistic,
//! including lag pairs of the long-run variance, restricted to the training
//! set. The selected constant minimizes the averaged squared Frobenius
//! distance to the validation covariance, ties going to the larger (sparser)
//! candidate.
//!
//! The ordinary scheme partitions rows at random instead; it is the tuning
//! rule paired with the universal and cross-product-variance competitors.

use crate::covariance::{cai_liu_variance, sample_cov_centered, CovEstimate};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::lrv::{lrv_matrix_masked, LrvMatrix};
use crate::panel::TimeSeriesPanel;
use crate::threshold::{threshold_matrix, EstimatorSpec, Method};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Settings for block cross-validation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BlockCvConfig {
    /// Number of consecutive blocks K.
    pub k_blocks: usize,
    /// Buffer length between a validation block and its training set.
    pub buffer: usize,
    /// Grid resolution M: candidates are j/M for 0 <= j <= 4M.
    pub grid_m: usize,
    /// Seed for the ordinary scheme's random row split; the block scheme
    /// draws nothing.
    pub seed: u64,
}

impl Default for BlockCvConfig {
    fn default() -> Self {
        BlockCvConfig {
            k_blocks: 5,
            buffer: 0,
            grid_m: 10,
            seed: 0,
        }
    }
}

impl BlockCvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_blocks < 2 {
            return Err(Error::Config(format!(
                "cross-validation needs at least 2 blocks, got {}",
                self.k_blocks
            )));
        }
        if self.grid_m == 0 {
            return Err(Error::Config("grid resolution must be positive".into()));
        }
        Ok(())
    }
}

/// Candidate thresholds j/M for 0 <= j <= 4M, spanning [0, 4].
pub fn delta_grid(m: usize) -> Vec<f64> {
    (0..=4 * m).map(|j| j as f64 / m as f64).collect()
}

/// Outcome of a cross-validation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvResult {
    pub best_delta: f64,
    /// (delta, averaged loss) pairs over the grid.
    pub losses: Vec<(f64, f64)>,
    /// Fold-by-grid squared Frobenius losses; skipped folds hold NaN.
    pub per_fold: Vec<Vec<f64>>,
    /// One entry per skipped fold.
    pub warnings: Vec<String>,
}

/// Consecutive-block partition. Returns (train, validation) index lists,
/// one pair per block; block lengths differ by at most one, longer blocks
/// first. Training indices are those farther than `buffer` from the block.
pub fn block_partition(
    n: usize,
    k: usize,
    buffer: usize,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || n < 2 * k {
        return Err(Error::Config(format!(
            "cannot split {n} observations into {k} blocks of at least 2"
        )));
    }
    let base = n / k;
    let rem = n % k;
    let max_len = base + usize::from(rem > 0);
    if 2 * buffer + max_len >= n {
        return Err(Error::Config(format!(
            "buffer {buffer} leaves no training data for blocks of {max_len} in {n} observations"
        )));
    }
    let mut folds = Vec::with_capacity(k);
    let mut start = 0usize;
    for b in 0..k {
        let len = base + usize::from(b < rem);
        let end = start + len;
        let valid: Vec<usize> = (start..end).collect();
        let keep_before = start.saturating_sub(buffer);
        let keep_after = end + buffer;
        let train: Vec<usize> = (0..n)
            .filter(|&t| t < keep_before || t >= keep_after)
            .collect();
        folds.push((train, valid));
        start = end;
    }
    Ok(folds)
}

/// Random row partition for the ordinary scheme, deterministic in the seed.
fn random_partition(n: usize, folds: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut rows: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    let base = n / folds;
    let rem = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0usize;
    for b in 0..folds {
        let len = base + usize::from(b < rem);
        let mut valid: Vec<usize> = rows[start..start + len].to_vec();
        valid.sort_unstable();
        let mut train: Vec<usize> = rows[..start]
            .iter()
            .chain(&rows[start + len..])
            .copied()
            .collect();
        train.sort_unstable();
        out.push((train, valid));
        start += len;
    }
    out
}

/// Covariance of a row subset with its own mean and 1/m normalization.
/// A single row yields the zero matrix.
fn cov_of_rows(data: &Array2<f64>, rows: &[usize]) -> SymMatrix {
    let p = data.ncols();
    let m = rows.len();
    let mf = m as f64;
    let mut means = vec![0.0; p];
    for &t in rows {
        for i in 0..p {
            means[i] += data[(t, i)];
        }
    }
    for mean in &mut means {
        *mean /= mf;
    }
    let mut cov = SymMatrix::zeros(p);
    for &t in rows {
        for i in 0..p {
            let ci = data[(t, i)] - means[i];
            for j in 0..=i {
                let v = cov.get(i, j) + ci * (data[(t, j)] - means[j]);
                cov.set(i, j, v);
            }
        }
    }
    cov.scale(1.0 / mf)
}

/// Everything a fold needs that does not depend on delta.
struct FoldFit {
    cov_t: CovEstimate,
    theta: Option<LrvMatrix>,
    theta_c: Option<SymMatrix>,
    sigma_v: SymMatrix,
}

fn fit_fold(
    panel: &TimeSeriesPanel,
    spec: &EstimatorSpec,
    train: &[usize],
    valid: &[usize],
) -> Result<FoldFit> {
    let n = panel.n_obs();
    let train_panel = panel.select_rows(train)?;
    let centered = train_panel.center();
    let cov_t = sample_cov_centered(&centered);
    let theta = if spec.method == Method::Proposed {
        let mut mask = vec![false; n];
        for &t in train {
            mask[t] = true;
        }
        Some(lrv_matrix_masked(panel.data(), &mask, &spec.kernel)?)
    } else {
        None
    };
    let theta_c = if spec.method == Method::CaiLiu {
        Some(cai_liu_variance(&centered, &cov_t.sigma))
    } else {
        None
    };
    let sigma_v = cov_of_rows(panel.data(), valid);
    Ok(FoldFit {
        cov_t,
        theta,
        theta_c,
        sigma_v,
    })
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("empty threshold grid".into()));
    }
    for w in grid.windows(2) {
        if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Config(
                "threshold grid must be strictly increasing".into(),
            ));
        }
    }
    if !grid.iter().all(|d| d.is_finite() && *d >= 0.0) {
        return Err(Error::Config(
            "threshold grid entries must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

/// Shared loss engine: fit each fold once, sweep the grid, average over the
/// folds that fit, pick the argmin with ties to the larger delta.
fn cv_engine(
    panel: &TimeSeriesPanel,
    spec: &EstimatorSpec,
    folds: &[(Vec<usize>, Vec<usize>)],
    grid: &[f64],
) -> Result<CvResult> {
    validate_grid(grid)?;
    spec.rule.validate()?;
    spec.kernel.validate()?;
    let p = panel.n_series();

    let rows: Vec<Result<Vec<f64>>> = folds
        .par_iter()
        .map(|(train, valid)| -> Result<Vec<f64>> {
            let fit = fit_fold(panel, spec, train, valid)?;
            let mut row = Vec::with_capacity(grid.len());
            for &delta in grid {
                let mut d_spec = *spec;
                d_spec.delta = delta;
                let est = threshold_matrix(
                    &fit.cov_t,
                    &d_spec,
                    fit.theta.as_ref(),
                    fit.theta_c.as_ref(),
                    p,
                )?;
                let diff = est.estimate.sub(&fit.sigma_v)?;
                row.push(diff.frob_norm().powi(2));
            }
            Ok(row)
        })
        .collect();

    let mut per_fold = Vec::with_capacity(folds.len());
    let mut warnings = Vec::new();
    for (k, row) in rows.into_iter().enumerate() {
        match row {
            Ok(r) => per_fold.push(r),
            Err(e) => {
                warnings.push(format!("fold {} skipped: {e}", k + 1));
                per_fold.push(vec![f64::NAN; grid.len()]);
            }
        }
    }
    let used = per_fold.iter().filter(|r| r[0].is_finite()).count();
    if used == 0 {
        return Err(Error::Numerical(format!(
            "cross-validation failed in every fold: {}",
            warnings.join("; ")
        )));
    }

    let mut losses = Vec::with_capacity(grid.len());
    let mut best_delta = grid[0];
    let mut best = f64::INFINITY;
    for (j, &delta) in grid.iter().enumerate() {
        let mut s = 0.0;
        for row in &per_fold {
            if row[j].is_finite() {
                s += row[j];
            }
        }
        let r = s / used as f64;
        losses.push((delta, r));
        if r <= best {
            best = r;
            best_delta = delta;
        }
    }

    Ok(CvResult {
        best_delta,
        losses,
        per_fold,
        warnings,
    })
}

/// Block cross-validation over consecutive time blocks. The delta field of
/// `spec` is ignored; every grid candidate is swept.
pub fn block_cv_delta(
    panel: &TimeSeriesPanel,
    spec: &EstimatorSpec,
    cfg: &BlockCvConfig,
) -> Result<CvResult> {
    cfg.validate()?;
    let folds = block_partition(panel.n_obs(), cfg.k_blocks, cfg.buffer)?;
    for (train, _) in &folds {
        if train.len() < 4 {
            return Err(Error::Config(format!(
                "training segments of {} observations are too short",
                train.len()
            )));
        }
    }
    cv_engine(panel, spec, &folds, &delta_grid(cfg.grid_m))
}

/// Ordinary cross-validation with a seeded random row partition and a
/// caller-supplied grid. The delta field of `spec` is ignored.
pub fn ordinary_cv_delta(
    panel: &TimeSeriesPanel,
    spec: &EstimatorSpec,
    folds: usize,
    grid: &[f64],
    seed: u64,
) -> Result<CvResult> {
    let n = panel.n_obs();
    if folds < 2 || folds > n {
        return Err(Error::Config(format!(
            "fold count must be between 2 and {n}, got {folds}"
        )));
    }
    let parts = random_partition(n, folds, seed);
    cv_engine(panel, spec, &parts, grid)
}
