//! Sample covariance and the entrywise variance proxy of the sample
//! covariances.
//!
//! Conventions, fixed across the crate:
//!   sigma_ij   = (1/n) sum_t (y_it - ybar_i)(y_jt - ybar_j)
//!   theta_c_ij = (1/n) sum_t ((y_it - ybar_i)(y_jt - ybar_j) - sigma_ij)^2
//!
//! Both divide by n, not n - 1.

use crate::linalg::SymMatrix;
use crate::panel::{CenteredPanel, TimeSeriesPanel};

/// Sample covariance with the sample size it was computed from.
#[derive(Debug, Clone)]
pub struct CovEstimate {
    pub sigma: SymMatrix,
    pub n: usize,
}

/// Sample covariance matrix, 1/n normalization.
pub fn sample_cov(panel: &TimeSeriesPanel) -> CovEstimate {
    sample_cov_centered(&panel.center())
}

/// Sample covariance of an already-centered panel.
pub fn sample_cov_centered(panel: &CenteredPanel) -> CovEstimate {
    let x = panel.data();
    let n = panel.n_obs();
    let gram = x.t().dot(x);
    // Only the lower triangle is read, so the packed result is symmetric
    // regardless of rounding asymmetries in the matrix product.
    let sigma = SymMatrix::from_fn(panel.n_series(), |i, j| gram[(i, j)] / n as f64);
    CovEstimate { sigma, n }
}

/// Entrywise variance proxy: the average squared deviation of the cross
/// products from their mean.
pub fn cai_liu_variance(panel: &CenteredPanel, sigma: &SymMatrix) -> SymMatrix {
    let x = panel.data();
    let n = panel.n_obs();
    let nf = n as f64;
    SymMatrix::from_fn(panel.n_series(), |i, j| {
        let s = sigma.get(i, j);
        let mut acc = 0.0;
        for t in 0..n {
            let d = x[(t, i)] * x[(t, j)] - s;
            acc += d * d;
        }
        acc / nf
    })
}
