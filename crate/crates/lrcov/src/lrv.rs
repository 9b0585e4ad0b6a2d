//! Kernel-weighted long-run variance estimation for the product series
//! z_t = y_it * y_jt of centered coordinates.
//!
//! The pairwise estimator is
//!
//!   theta_ij = sum_{|k| < n} K(k / b_n) * gamma_ij(k),
//!   gamma_ij(k) = (1/n) sum_{t=k+1}^n (z_t - zbar)(z_{t-k} - zbar),
//!
//! with zbar the full-series product mean and b_n the bandwidth from the
//! Andrews AR(1) plug-in (or a fixed value). Autocovariances divide by n at
//! every lag, and gamma(k) = gamma(-k), so the two-sided sum collapses to
//! gamma(0) + 2 sum_{k>=1} K(k/b_n) gamma(k).
//!
//! Cross-validation refits the same estimator on a training index set that
//! has a block removed; the masked entry points restrict every sum (means,
//! lag pairs, AR(1) fit) to indices inside the set, keeping the 1/|T|
//! normalization.

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::panel::CenteredPanel;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Smallest admissible theta after clamping a non-positive kernel sum.
pub const THETA_EPS: f64 = 1e-12;

/// Floor for automatic bandwidths so k/b stays finite.
const BANDWIDTH_FLOOR: f64 = 1e-8;

/// Lag-window kernels. All satisfy K(0) = 1, |K| <= 1, K(-x) = K(x).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    QuadraticSpectral,
    Bartlett,
    Parzen,
    TukeyHanning,
}

impl KernelKind {
    /// Kernel weight at scaled lag x.
    pub fn value(self, x: f64) -> f64 {
        if !x.is_finite() {
            return 0.0;
        }
        let a = x.abs();
        match self {
            KernelKind::QuadraticSpectral => {
                let u = 1.2 * std::f64::consts::PI * a;
                if u < 0.1 {
                    // Series expansion; the direct formula cancels
                    // catastrophically near zero. Error < 1e-14 at the
                    // branch point.
                    let u2 = u * u;
                    1.0 - u2 / 10.0 + u2 * u2 / 280.0 - u2 * u2 * u2 / 15120.0
                } else {
                    let c = 25.0 / (12.0 * std::f64::consts::PI.powi(2) * a * a);
                    c * (u.sin() / u - u.cos())
                }
            }
            KernelKind::Bartlett => (1.0 - a).max(0.0),
            KernelKind::Parzen => {
                if a <= 0.5 {
                    1.0 - 6.0 * a * a + 6.0 * a * a * a
                } else if a <= 1.0 {
                    2.0 * (1.0 - a).powi(3)
                } else {
                    0.0
                }
            }
            KernelKind::TukeyHanning => {
                if a <= 1.0 {
                    (1.0 + (std::f64::consts::PI * a).cos()) / 2.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Whether the kernel vanishes outside a bounded support.
    fn compact_support(self) -> bool {
        !matches!(self, KernelKind::QuadraticSpectral)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::QuadraticSpectral => "quadratic-spectral",
            KernelKind::Bartlett => "bartlett",
            KernelKind::Parzen => "parzen",
            KernelKind::TukeyHanning => "tukey-hanning",
        }
    }
}

/// Bandwidth selection for the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// AR(1) plug-in recomputed per product series.
    Andrews,
    /// One fixed bandwidth for every pair.
    Fixed(f64),
}

/// Kernel kind plus bandwidth policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: Bandwidth,
}

impl KernelSpec {
    pub fn qs_andrews() -> Self {
        KernelSpec {
            kind: KernelKind::QuadraticSpectral,
            bandwidth: Bandwidth::Andrews,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(b) = self.bandwidth {
            if !b.is_finite() || b <= 0.0 {
                return Err(Error::Config(format!(
                    "fixed bandwidth must be positive and finite, got {b}"
                )));
            }
        }
        Ok(())
    }
}

/// Kernel weight under a spec (bandwidth plays no role here).
pub fn kernel_value(spec: &KernelSpec, x: f64) -> f64 {
    spec.kind.value(x)
}

/// Lag-k autocovariance with the full-series mean and 1/n normalization.
pub fn autocovariance(z: &[f64], k: isize) -> Result<f64> {
    let n = z.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "autocovariance needs at least 2 observations, got {n}"
        )));
    }
    let ka = k.unsigned_abs();
    if ka >= n {
        return Err(Error::Config(format!(
            "lag {k} out of range for series of length {n}"
        )));
    }
    let mean = z.iter().sum::<f64>() / n as f64;
    let mut s = 0.0;
    for t in ka..n {
        s += (z[t] - mean) * (z[t - ka] - mean);
    }
    Ok(s / n as f64)
}

/// Plug-in bandwidth from a given AR(1) coefficient (already clamped).
pub fn plug_in_bandwidth(kind: KernelKind, rho: f64, n: usize) -> f64 {
    let nf = n as f64;
    let b = match kind {
        KernelKind::Bartlett => {
            let a1 = 4.0 * rho * rho / ((1.0 - rho).powi(2) * (1.0 + rho).powi(2));
            1.1447 * (a1 * nf).powf(1.0 / 3.0)
        }
        KernelKind::QuadraticSpectral => {
            let a2 = 4.0 * rho * rho / (1.0 - rho).powi(4);
            1.3221 * (a2 * nf).powf(0.2)
        }
        KernelKind::Parzen => {
            let a2 = 4.0 * rho * rho / (1.0 - rho).powi(4);
            2.6614 * (a2 * nf).powf(0.2)
        }
        KernelKind::TukeyHanning => {
            let a2 = 4.0 * rho * rho / (1.0 - rho).powi(4);
            1.7462 * (a2 * nf).powf(0.2)
        }
    };
    b.max(BANDWIDTH_FLOOR)
}

/// Lag-1 autoregression coefficient of a centered series, restricted to
/// consecutive index pairs that are both selected, clamped to [-0.97, 0.97].
fn rho_hat(w: &[f64], mask: Option<&[bool]>) -> Option<f64> {
    let n = w.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 1..n {
        let keep = mask.is_none_or(|m| m[t] && m[t - 1]);
        if keep {
            num += w[t] * w[t - 1];
            den += w[t - 1] * w[t - 1];
        }
    }
    if den == 0.0 {
        None
    } else {
        Some((num / den).clamp(-0.97, 0.97))
    }
}

/// Andrews automatic bandwidth from an AR(1) fit of the series itself.
pub fn andrews_bandwidth(z: &[f64], kind: KernelKind) -> Result<f64> {
    let n = z.len();
    if n < 4 {
        return Err(Error::Config(format!(
            "bandwidth selection needs at least 4 observations, got {n}"
        )));
    }
    let mean = z.iter().sum::<f64>() / n as f64;
    let w: Vec<f64> = z.iter().map(|v| v - mean).collect();
    match rho_hat(&w, None) {
        Some(rho) => Ok(plug_in_bandwidth(kind, rho, n)),
        None => Err(Error::Numerical(
            "bandwidth selection needs a non-constant series".into(),
        )),
    }
}

/// Per-entry outcome of the long-run variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrvStatus {
    Ok,
    /// Kernel sum was non-positive; theta clamped to THETA_EPS.
    Clamped,
    /// Product series constant; theta = 0 and the entry carries no noise.
    Degenerate,
}

/// One pair's estimate with the realized bandwidth.
#[derive(Debug, Clone, Copy)]
pub struct PairLrv {
    pub theta: f64,
    pub bandwidth: f64,
    pub status: LrvStatus,
}

/// Core kernel sum over an already-centered (and mask-zeroed) product
/// series. `m` is the number of selected observations.
fn theta_from_centered(
    w: &[f64],
    mask: Option<&[bool]>,
    m: usize,
    spec: &KernelSpec,
) -> Result<PairLrv> {
    let n = w.len();
    let bandwidth = match spec.bandwidth {
        Bandwidth::Fixed(b) => b,
        Bandwidth::Andrews => match rho_hat(w, mask) {
            Some(rho) => plug_in_bandwidth(spec.kind, rho, m),
            // Selected set has no usable consecutive pair: fall back to a
            // white-noise bandwidth.
            None => plug_in_bandwidth(spec.kind, 0.0, m),
        },
    };

    let k_max = if spec.kind.compact_support() {
        (n - 1).min((6.0 * bandwidth).ceil() as usize)
    } else {
        n - 1
    };

    let mf = m as f64;
    let mut theta = w.iter().map(|v| v * v).sum::<f64>() / mf;
    for k in 1..=k_max {
        let weight = spec.kind.value(k as f64 / bandwidth);
        if weight == 0.0 {
            continue;
        }
        let mut g = 0.0;
        for t in k..n {
            g += w[t] * w[t - k];
        }
        theta += 2.0 * weight * g / mf;
    }

    if theta <= 0.0 {
        Ok(PairLrv {
            theta: THETA_EPS,
            bandwidth,
            status: LrvStatus::Clamped,
        })
    } else {
        Ok(PairLrv {
            theta,
            bandwidth,
            status: LrvStatus::Ok,
        })
    }
}

/// Long-run variance of the product of two centered coordinate series.
pub fn lrv_pair(zi: &[f64], zj: &[f64], spec: &KernelSpec) -> Result<PairLrv> {
    spec.validate()?;
    if zi.len() != zj.len() {
        return Err(Error::Config(format!(
            "series lengths differ: {} vs {}",
            zi.len(),
            zj.len()
        )));
    }
    let n = zi.len();
    if n < 4 {
        return Err(Error::Config(format!(
            "long-run variance needs at least 4 observations, got {n}"
        )));
    }
    let z: Vec<f64> = zi.iter().zip(zj).map(|(a, b)| a * b).collect();
    if z.iter().all(|&v| v == z[0]) {
        return Ok(PairLrv {
            theta: 0.0,
            bandwidth: 0.0,
            status: LrvStatus::Degenerate,
        });
    }
    let zbar = z.iter().sum::<f64>() / n as f64;
    let w: Vec<f64> = z.iter().map(|v| v - zbar).collect();
    theta_from_centered(&w, None, n, spec)
}

/// Pairwise long-run variances with realized bandwidths and per-entry
/// status flags.
#[derive(Debug, Clone)]
pub struct LrvMatrix {
    pub theta: SymMatrix,
    pub bandwidths: SymMatrix,
    status: Vec<LrvStatus>,
}

impl LrvMatrix {
    pub fn status(&self, i: usize, j: usize) -> LrvStatus {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.status[i * (i + 1) / 2 + j]
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    /// Count of entries per status over the packed triangle.
    pub fn status_counts(&self) -> (usize, usize, usize) {
        let mut ok = 0;
        let mut clamped = 0;
        let mut degenerate = 0;
        for s in &self.status {
            match s {
                LrvStatus::Ok => ok += 1,
                LrvStatus::Clamped => clamped += 1,
                LrvStatus::Degenerate => degenerate += 1,
            }
        }
        (ok, clamped, degenerate)
    }

    fn from_pairs(p: usize, pairs: Vec<PairLrv>) -> Self {
        let mut theta = SymMatrix::zeros(p);
        let mut bandwidths = SymMatrix::zeros(p);
        let mut status = Vec::with_capacity(pairs.len());
        let mut idx = 0;
        for i in 0..p {
            for j in 0..=i {
                theta.set(i, j, pairs[idx].theta);
                bandwidths.set(i, j, pairs[idx].bandwidth);
                status.push(pairs[idx].status);
                idx += 1;
            }
        }
        LrvMatrix {
            theta,
            bandwidths,
            status,
        }
    }
}

/// Long-run variance matrix over all coordinate pairs of a centered panel.
/// Pairs are independent, so the fill parallelizes over the packed triangle
/// with a deterministic result.
pub fn lrv_matrix(panel: &CenteredPanel, spec: &KernelSpec) -> Result<LrvMatrix> {
    spec.validate()?;
    let n = panel.n_obs();
    if n < 4 {
        return Err(Error::Config(format!(
            "long-run variance needs at least 4 observations, got {n}"
        )));
    }
    let p = panel.n_series();
    let x = panel.data();
    let pair_indices: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (0..=i).map(move |j| (i, j)))
        .collect();
    let pairs: Result<Vec<PairLrv>> = pair_indices
        .par_iter()
        .map(|&(i, j)| {
            let zi: Vec<f64> = x.column(i).to_vec();
            let zj: Vec<f64> = x.column(j).to_vec();
            lrv_pair(&zi, &zj, spec)
        })
        .collect();
    Ok(LrvMatrix::from_pairs(p, pairs?))
}

/// Long-run variance matrix restricted to an index set. Means, product
/// centering, lag pairs, and the AR(1) fit all use only selected indices;
/// sums divide by the selected count.
pub(crate) fn lrv_matrix_masked(
    data: &Array2<f64>,
    mask: &[bool],
    spec: &KernelSpec,
) -> Result<LrvMatrix> {
    spec.validate()?;
    let (n, p) = data.dim();
    if mask.len() != n {
        return Err(Error::Config(format!(
            "mask length {} does not match {n} observations",
            mask.len()
        )));
    }
    let m = mask.iter().filter(|&&b| b).count();
    if m < 4 {
        return Err(Error::Config(format!(
            "long-run variance needs at least 4 selected observations, got {m}"
        )));
    }
    let mf = m as f64;

    // Column means over the selected set.
    let mut means = vec![0.0; p];
    for (i, mean) in means.iter_mut().enumerate() {
        let mut s = 0.0;
        for t in 0..n {
            if mask[t] {
                s += data[(t, i)];
            }
        }
        *mean = s / mf;
    }

    let pair_indices: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (0..=i).map(move |j| (i, j)))
        .collect();
    let pairs: Result<Vec<PairLrv>> = pair_indices
        .par_iter()
        .map(|&(i, j)| {
            // Product of selected-set-centered coordinates, zero off-set so
            // lag sums only see pairs fully inside the set.
            let mut z = vec![0.0; n];
            let mut zsum = 0.0;
            for t in 0..n {
                if mask[t] {
                    z[t] = (data[(t, i)] - means[i]) * (data[(t, j)] - means[j]);
                    zsum += z[t];
                }
            }
            let first = z
                .iter()
                .zip(mask)
                .find(|(_, &keep)| keep)
                .map(|(v, _)| *v)
                .unwrap_or(0.0);
            let constant = z
                .iter()
                .zip(mask)
                .all(|(v, &keep)| !keep || *v == first);
            if constant {
                return Ok(PairLrv {
                    theta: 0.0,
                    bandwidth: 0.0,
                    status: LrvStatus::Degenerate,
                });
            }
            let zbar = zsum / mf;
            let mut w = vec![0.0; n];
            for t in 0..n {
                if mask[t] {
                    w[t] = z[t] - zbar;
                }
            }
            theta_from_centered(&w, Some(mask), m, spec)
        })
        .collect();
    Ok(LrvMatrix::from_pairs(p, pairs?))
}
