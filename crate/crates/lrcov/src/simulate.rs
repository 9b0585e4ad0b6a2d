//! Simulated covariance designs and the stationary Gaussian VAR(1) sampler.
//!
//! All designs fix a target covariance Sigma_y and a diagonal coefficient
//! matrix C, then back out the innovation covariance from stationarity:
//!
//!   Sigma_eps = Sigma_y - C Sigma_y C'.
//!
//! Sampling starts from the exact stationary law y_0 ~ N(0, Sigma_y) (no
//! burn-in) and iterates y_t = C y_{t-1} + eps_t. Panels are bitwise
//! reproducible from their seed: the generator is ChaCha20 and every draw
//! order is fixed.

use crate::error::{Error, Result};
use crate::linalg::{cholesky, lower_tri_matvec, SymMatrix};
use crate::panel::TimeSeriesPanel;
use crate::threshold::SupportMask;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// A simulation design: target covariance, diagonal VAR coefficient, implied
/// innovation covariance, and the true support.
#[derive(Debug, Clone)]
pub struct SimInstance {
    pub name: String,
    pub sigma_true: SymMatrix,
    /// Diagonal of the coefficient matrix.
    pub coeff: Vec<f64>,
    pub sigma_eps: SymMatrix,
    pub support_true: SupportMask,
    /// Common long-run variance of the identity-block entries of the
    /// adversarial design, when applicable.
    pub theta_zero_block: Option<f64>,
    /// Off-diagonal level of the adversarial signal block.
    pub a_n: Option<f64>,
}

/// Derive a substream seed from a master seed, a configuration string, and a
/// replication index. SHA-256 keeps streams independent and insensitive to
/// unrelated configuration additions.
pub fn derive_seed(master: u64, config: &str, rep: u64, stream: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update([0x1f]);
    h.update(config.as_bytes());
    h.update([0x1f]);
    h.update(rep.to_le_bytes());
    h.update([0x1f]);
    h.update(stream.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn finish_instance(
    name: String,
    sigma_true: SymMatrix,
    coeff: Vec<f64>,
    theta_zero_block: Option<f64>,
    a_n: Option<f64>,
) -> Result<SimInstance> {
    let p = sigma_true.dim();
    // Sigma_eps = Sigma_y - C Sigma_y C', diagonal C.
    let sigma_eps = SymMatrix::from_fn(p, |i, j| {
        sigma_true.get(i, j) * (1.0 - coeff[i] * coeff[j])
    });
    // Positive definiteness check; the Cholesky factor is recomputed cheaply
    // at sampling time.
    cholesky(&sigma_eps).map_err(|_| {
        Error::Numerical(format!(
            "innovation covariance of {name} is not positive definite"
        ))
    })?;
    cholesky(&sigma_true).map_err(|_| {
        Error::Numerical(format!(
            "target covariance of {name} is not positive definite"
        ))
    })?;
    let support_true = SupportMask::from_matrix(&sigma_true);
    Ok(SimInstance {
        name,
        sigma_true,
        coeff,
        sigma_eps,
        support_true,
        theta_zero_block,
        a_n,
    })
}

fn check_even_dim(p: usize) -> Result<()> {
    if p < 4 || !p.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "two-block designs need an even dimension of at least 4, got {p}"
        )));
    }
    Ok(())
}

/// Sparse-without-ordering design: the first block is a random sparse
/// matrix shifted to positive definiteness, the second is 4I.
///
/// B has entries unif(0.3, 0.8) * Bernoulli(0.2) for i >= j (diagonal
/// included), mirrored; A1 = B + eps I where eps = max(-lambda_min(B), 0) +
/// 0.01. Both draws are consumed for every entry, so the panel layout is
/// independent of which entries end up zero.
pub fn build_model1(p: usize, seed: u64) -> Result<SimInstance> {
    check_even_dim(p)?;
    let half = p / 2;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut b = SymMatrix::zeros(half);
    for i in 0..half {
        for j in 0..=i {
            let u: f64 = rng.gen_range(0.3..0.8);
            let keep = rng.gen_bool(0.2);
            b.set(i, j, if keep { u } else { 0.0 });
        }
    }
    let eigs = crate::linalg::eigh(&b)?;
    let lambda_min = *eigs.values.last().expect("non-empty spectrum");
    let eps = (-lambda_min).max(0.0) + 0.01;
    let sigma_true = SymMatrix::from_fn(p, |i, j| {
        if i < half && j < half {
            b.get(i, j) + if i == j { eps } else { 0.0 }
        } else if i >= half && j >= half {
            if i == j {
                4.0
            } else {
                0.0
            }
        } else {
            0.0
        }
    });
    let coeff: Vec<f64> = (0..p).map(|i| if i < half { 0.5 } else { 0.8 }).collect();
    finish_instance(format!("model1(p={p})"), sigma_true, coeff, None, None)
}

/// Build a Model-1 instance, redrawing on infeasible draws. The redraw
/// stream is keyed by the retry count, so the path seed of replication
/// `rep` never depends on how many draws were discarded before it.
pub fn build_model1_retrying(
    p: usize,
    master: u64,
    config: &str,
    rep: u64,
) -> Result<(SimInstance, usize)> {
    let mut retries = 0usize;
    loop {
        let s = derive_seed(master, config, rep, &format!("model-{retries}"));
        match build_model1(p, s) {
            Ok(inst) => return Ok((inst, retries)),
            Err(Error::Numerical(_)) if retries < 64 => retries += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Banded-with-ordering design: the first block decays linearly to zero at
/// distance 10, the second is 4I. Deterministic.
pub fn build_model2(p: usize) -> Result<SimInstance> {
    check_even_dim(p)?;
    let half = p / 2;
    let sigma_true = SymMatrix::from_fn(p, |i, j| {
        if i < half && j < half {
            let d = (i as f64 - j as f64).abs();
            (1.0 - d / 10.0).max(0.0)
        } else if i >= half && j >= half && i == j {
            4.0
        } else {
            0.0
        }
    });
    let coeff: Vec<f64> = (0..p).map(|i| if i < half { 0.5 } else { 0.8 }).collect();
    finish_instance(format!("model2(p={p})"), sigma_true, coeff, None, None)
}

/// Design where the contemporaneous covariance alone misleads: a small
/// equicorrelated signal block with white-noise dynamics sits next to a big
/// identity block with strong autocorrelation. The signal level a_n =
/// c_a sqrt(log p / n) shrinks with the sample size.
pub fn build_adversarial(
    p: usize,
    n: usize,
    rho: f64,
    c_a: f64,
    s1: usize,
) -> Result<SimInstance> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Config(format!(
            "autoregressive level must be in (0,1), got {rho}"
        )));
    }
    if s1 < 8 {
        return Err(Error::Config(format!(
            "signal size s1 must be at least 8, got {s1}"
        )));
    }
    let s0 = s1 / 4;
    if p <= s0 {
        return Err(Error::Config(format!(
            "dimension {p} too small for a signal block of {s0}"
        )));
    }
    if c_a.is_nan() || c_a <= 0.0 {
        return Err(Error::Config(format!(
            "signal constant must be positive, got {c_a}"
        )));
    }
    let a_n = c_a * ((p as f64).ln() / n as f64).sqrt();
    if a_n >= 1.0 {
        return Err(Error::Config(format!(
            "signal level a_n = {a_n:.4} must be below 1; increase n or decrease c_a"
        )));
    }
    let sigma_true = SymMatrix::from_fn(p, |i, j| {
        if i < s0 && j < s0 {
            if i == j {
                1.0
            } else {
                a_n
            }
        } else if i == j {
            1.0
        } else {
            0.0
        }
    });
    let coeff: Vec<f64> = (0..p).map(|i| if i < s0 { 0.0 } else { rho }).collect();
    let theta0 = (1.0 + rho * rho) / (1.0 - rho * rho);
    finish_instance(
        format!("adversarial(p={p},s1={s1})"),
        sigma_true,
        coeff,
        Some(theta0),
        Some(a_n),
    )
}

/// Draw n observations of the stationary VAR(1) path. Returns rows
/// y_1 .. y_n; y_0 is drawn from the stationary law and not returned.
pub fn sample_var1(inst: &SimInstance, n: usize, seed: u64) -> Result<TimeSeriesPanel> {
    if n < 2 {
        return Err(Error::Config(format!(
            "sample length must be at least 2, got {n}"
        )));
    }
    let p = inst.sigma_true.dim();
    let l_y = cholesky(&inst.sigma_true)?;
    let l_eps = cholesky(&inst.sigma_eps)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut draw = |l: &Array2<f64>| -> Vec<f64> {
        let g: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        lower_tri_matvec(l, &g)
    };

    let mut prev = draw(&l_y);
    let mut out = Array2::zeros((n, p));
    for t in 0..n {
        let eps = draw(&l_eps);
        for i in 0..p {
            prev[i] = inst.coeff[i] * prev[i] + eps[i];
        }
        for i in 0..p {
            out[(t, i)] = prev[i];
        }
    }
    TimeSeriesPanel::new(out)
}
