//! Dense symmetric linear algebra: eigendecomposition, spectral norm,
//! eigenvalue flooring, and SPD solves.
//!
//! Matrices here are a few hundred rows at most, so the solver choices favor
//! robustness: a Householder tridiagonalization followed by implicit-shift QL
//! iteration (the classic tred2/tql2 pair) with a global iteration cap, and a
//! plain Cholesky factorization for SPD systems.

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Symmetric `p x p` matrix stored as a packed lower triangle.
///
/// Storage holds one copy of each `(i, j)` pair, so `a[i][j] == a[j][i]`
/// exactly by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    /// Row-major lower triangle: entry (i, j) with i >= j lives at i(i+1)/2 + j.
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        SymMatrix {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = SymMatrix::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Build from a function of (i, j); only pairs with i >= j are queried.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Convert a dense matrix, requiring exact symmetry and finite entries.
    pub fn from_dense(a: &Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c || r == 0 {
            return Err(Error::Config(format!(
                "expected a square matrix, got {r}x{c}"
            )));
        }
        for i in 0..r {
            for j in 0..=i {
                if a[(i, j)] != a[(j, i)] {
                    return Err(Error::Config(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
                if !a[(i, j)].is_finite() {
                    return Err(Error::Config(format!(
                        "matrix has a non-finite entry at ({i},{j})"
                    )));
                }
            }
        }
        Ok(SymMatrix::from_fn(r, |i, j| a[(i, j)]))
    }

    #[inline]
    fn idx(i: usize, j: usize) -> usize {
        debug_assert!(i >= j);
        i * (i + 1) / 2 + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.data[Self::idx(i, j)]
        } else {
            self.data[Self::idx(j, i)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if i >= j {
            self.data[Self::idx(i, j)] = v;
        } else {
            self.data[Self::idx(j, i)] = v;
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.dim, self.dim), |(i, j)| self.get(i, j))
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius norm over the full (unpacked) matrix.
    pub fn frob_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..=i {
                let v = self.get(i, j);
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        if self.dim != other.dim {
            return Err(Error::Config(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= c;
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, xj) in x.iter().enumerate() {
                s += self.get(i, j) * xj;
            }
            *yi = s;
        }
        y
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors; column k pairs with `values[k]`.
    pub vectors: Array2<f64>,
}

/// Full eigendecomposition via Householder tridiagonalization + implicit QL.
///
/// The QL stage deflates an off-diagonal entry once it drops below machine
/// epsilon relative to the neighboring diagonal scale; total QL iterations are
/// capped at `100 p^2`.
pub fn eigh(a: &SymMatrix) -> Result<EigenDecomposition> {
    if !a.is_finite() {
        return Err(Error::Numerical(
            "eigendecomposition input has non-finite entries".into(),
        ));
    }
    let n = a.dim();
    let mut v = a.to_dense();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];

    if n == 1 {
        return Ok(EigenDecomposition {
            values: vec![a.get(0, 0)],
            vectors: Array2::from_elem((1, 1), 1.0),
        });
    }

    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e)?;

    // Sort eigenpairs descending.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&k| d[k]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| v[(i, order[j])]);
    Ok(EigenDecomposition { values, vectors })
}

/// Householder reduction to tridiagonal form (JAMA tred2 scheme).
/// On exit `v` holds the accumulated orthogonal transform, `d` the diagonal,
/// `e[1..]` the subdiagonal.
fn tred2(n: usize, v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate transformations.
    for i in 0..(n - 1) {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL iteration on the tridiagonal form (JAMA tql2 scheme).
fn tql2(n: usize, v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let max_iter = 100 * n * n;
    let mut iter = 0usize;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m >= n {
            m = n - 1;
        }

        if m > l {
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::Numerical(format!(
                        "eigendecomposition did not converge for a {n}x{n} matrix \
                         within {max_iter} iterations"
                    )));
                }

                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    for k in 0..n {
                        h = v[(k, i + 1)];
                        v[(k, i + 1)] = s * v[(k, i)] + c * h;
                        v[(k, i)] = c * v[(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Operator norm of a symmetric matrix: the largest absolute eigenvalue.
pub fn spectral_norm(a: &SymMatrix) -> Result<f64> {
    let dec = eigh(a)?;
    let hi = dec.values.first().copied().unwrap_or(0.0);
    let lo = dec.values.last().copied().unwrap_or(0.0);
    Ok(hi.abs().max(lo.abs()))
}

/// Replace every eigenvalue below `floor` by `floor`, keeping eigenvectors.
///
/// Returns the input unchanged when its smallest eigenvalue already clears
/// the floor.
pub fn floor_eigenvalues(a: &SymMatrix, floor: f64) -> Result<SymMatrix> {
    if floor <= 0.0 {
        return Err(Error::Config(format!(
            "eigenvalue floor must be positive, got {floor}"
        )));
    }
    let dec = eigh(a)?;
    let p = a.dim();
    if dec.values[p - 1] >= floor {
        return Ok(a.clone());
    }
    let clamped: Vec<f64> = dec.values.iter().map(|&l| l.max(floor)).collect();
    // Rebuild the lower triangle of V diag(clamped) V' directly so the result
    // is symmetric by storage.
    let mut out = SymMatrix::zeros(p);
    for i in 0..p {
        for j in 0..=i {
            let mut s = 0.0;
            for (k, &lam) in clamped.iter().enumerate() {
                s += lam * dec.vectors[(i, k)] * dec.vectors[(j, k)];
            }
            out.set(i, j, s);
        }
    }
    Ok(out)
}

/// Lower-triangular Cholesky factor of an SPD matrix: `a = L L'`.
pub fn cholesky(a: &SymMatrix) -> Result<Array2<f64>> {
    let p = a.dim();
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut s = a.get(j, j);
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite (pivot {s:e} at column {j}); \
                 floor its eigenvalues first"
            )));
        }
        let ljj = s.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..p {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solve `a x = b` for SPD `a` via Cholesky.
pub fn solve_spd(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let p = a.dim();
    if b.len() != p {
        return Err(Error::Config(format!(
            "right-hand side length {} does not match dimension {p}",
            b.len()
        )));
    }
    let l = cholesky(a)?;
    // Forward: L y = b
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    // Backward: L' x = y
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

/// Multiply a dense lower-triangular factor by a vector: `L g`.
pub(crate) fn lower_tri_matvec(l: &Array2<f64>, g: &[f64]) -> Vec<f64> {
    let p = g.len();
    let mut out = vec![0.0; p];
    for i in 0..p {
        let mut s = 0.0;
        for j in 0..=i {
            s += l[(i, j)] * g[j];
        }
        out[i] = s;
    }
    out
}
