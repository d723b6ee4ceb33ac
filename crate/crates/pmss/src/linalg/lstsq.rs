//! Moore-Penrose pseudoinverse and multi-right-hand-side least squares.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::qr::pivoted_qr;
use super::svd::svd;

/// Relative factor in the default singular-value cutoff
/// `1e-12 * max(m, n) * sigma_max`.
const PINV_TOL: f64 = 1e-12;

/// Default pseudoinverse cutoff for a matrix of shape `(m, n)` with largest
/// singular value `sigma_max`.
pub fn default_pinv_tol(m: usize, n: usize, sigma_max: f64) -> f64 {
    PINV_TOL * m.max(n) as f64 * sigma_max
}

/// Moore-Penrose pseudoinverse via the SVD. Singular values at or below
/// `tol` (default `1e-12 * max(m, n) * sigma_max`) are treated as zero.
pub fn pinv(w: &DenseMatrix, tol: Option<f64>) -> Result<DenseMatrix> {
    let (m, n) = w.shape();
    let s = svd(w)?;
    let sigma_max = s.sigma.first().copied().unwrap_or(0.0);
    let cut = tol.unwrap_or_else(|| default_pinv_tol(m, n, sigma_max));
    // v * diag(1/sigma) * u^T, skipping the cut singular values.
    let p = s.sigma.len();
    let mut vs = DenseMatrix::zeros(n, p);
    for j in 0..p {
        if s.sigma[j] > cut {
            let inv = 1.0 / s.sigma[j];
            for i in 0..n {
                vs.set(i, j, s.v.get(i, j) * inv);
            }
        }
    }
    Ok(vs.matmul(&s.u.transpose()))
}

/// Solves `min_X ||a * X - b||_F` for all right-hand sides at once.
///
/// Uses the pivoted QR of `a` when `a` has full column rank within tolerance
/// and falls back to the pseudoinverse otherwise; both paths agree with
/// `pinv(a) * b` on the returned minimizer.
pub fn least_squares_multi(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, n) = a.shape();
    if b.rows() != m {
        return Err(Error::Parameter(format!(
            "least squares shape mismatch: a is {m}x{n}, b has {} rows",
            b.rows()
        )));
    }
    if m < n {
        // Underdetermined: minimum-norm solution via the pseudoinverse.
        return Ok(pinv(a, None)?.matmul(b));
    }
    let qr = pivoted_qr(a, n)?;
    let lead = qr.rfac.get(0, 0).abs();
    let rank_tol = PINV_TOL * m.max(n) as f64 * lead;
    if (0..n).any(|i| qr.rfac.get(i, i).abs() <= rank_tol) {
        return Ok(pinv(a, None)?.matmul(b));
    }

    // Back-substitute R * y = q^T b, then undo the column permutation.
    let rhs = qr.q.transpose().matmul(b);
    let p = b.cols();
    let mut y = DenseMatrix::zeros(n, p);
    for c in 0..p {
        for i in (0..n).rev() {
            let mut acc = rhs.get(i, c);
            for j in (i + 1)..n {
                acc -= qr.rfac.get(i, j) * y.get(j, c);
            }
            y.set(i, c, acc / qr.rfac.get(i, i));
        }
    }
    let mut x = DenseMatrix::zeros(n, p);
    for i in 0..n {
        for c in 0..p {
            x.set(qr.perm[i], c, y.get(i, c));
        }
    }
    Ok(x)
}
