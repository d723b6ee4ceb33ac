//! Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! The working matrix is kept tall (the input is transposed internally when
//! `m < n`) and pairs of columns are rotated until every pair is mutually
//! orthogonal relative to the sizes of the columns involved. Columns whose
//! norm falls below `1e-14 * ||w||_F` are treated as numerically zero: they
//! are excluded from further rotations, their singular values are reported
//! as the tiny norms they have, and the corresponding left singular vectors
//! are completed to an orthonormal basis afterwards.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

const MAX_SWEEPS: usize = 60;
/// Per-pair relative orthogonality threshold for the rotation criterion.
const PAIR_TOL: f64 = 1e-14;
/// Columns below this fraction of the input Frobenius norm are "dead".
const DEAD_TOL: f64 = 1e-14;

/// Thin SVD `w = u * diag(sigma) * v^T` with `p = min(m, n)` columns.
pub struct Svd {
    /// `m x p`, orthonormal columns.
    pub u: DenseMatrix,
    /// Singular values, non-negative and non-increasing.
    pub sigma: Vec<f64>,
    /// `n x p`, orthonormal columns.
    pub v: DenseMatrix,
}

impl Svd {
    /// Frobenius-norm error of the best rank-`k` approximation,
    /// `sqrt(sum of squared singular values beyond k)`.
    pub fn rank_floor(&self, k: usize) -> f64 {
        self.sigma.iter().skip(k).map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// Computes the thin SVD of `w`.
///
/// Fails with a numerical error when the rotation sweeps do not converge
/// within the sweep limit; the error carries the largest relative
/// off-diagonal magnitude still present.
pub fn svd(w: &DenseMatrix) -> Result<Svd> {
    let (m0, n0) = w.shape();
    let transposed = m0 < n0;
    let a = if transposed { w.transpose() } else { w.clone() };
    let (u, sigma, v) = jacobi_tall(a)?;
    if transposed {
        Ok(Svd { u: v, sigma, v: u })
    } else {
        Ok(Svd { u, sigma, v })
    }
}

/// One-sided Jacobi on a tall matrix (`m >= n`).
fn jacobi_tall(mut a: DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (m, n) = a.shape();
    let fro = a.frobenius_norm();
    let dead = DEAD_TOL * fro;
    let mut v = DenseMatrix::identity(n);

    if fro > 0.0 && n > 1 {
        let mut converged = false;
        let mut worst_rel = 0.0f64;
        for _sweep in 0..MAX_SWEEPS {
            let mut rotated = false;
            worst_rel = 0.0;
            for p in 0..n - 1 {
                for q in (p + 1)..n {
                    let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                    for i in 0..m {
                        let ap = a.get(i, p);
                        let aq = a.get(i, q);
                        alpha += ap * ap;
                        beta += aq * aq;
                        gamma += ap * aq;
                    }
                    let np = alpha.sqrt();
                    let nq = beta.sqrt();
                    if np <= dead || nq <= dead {
                        continue;
                    }
                    worst_rel = worst_rel.max(gamma.abs() / (np * nq));
                    if gamma.abs() <= PAIR_TOL * np * nq {
                        continue;
                    }
                    rotated = true;
                    // Inner rotation zeroing the (p, q) Gram entry.
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = if zeta >= 0.0 {
                        1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                    } else {
                        -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..m {
                        let ap = a.get(i, p);
                        let aq = a.get(i, q);
                        a.set(i, p, c * ap - s * aq);
                        a.set(i, q, s * ap + c * aq);
                    }
                    for i in 0..n {
                        let vp = v.get(i, p);
                        let vq = v.get(i, q);
                        v.set(i, p, c * vp - s * vq);
                        v.set(i, q, s * vp + c * vq);
                    }
                }
            }
            if !rotated {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence { sweeps: MAX_SWEEPS, achieved: worst_rel });
        }
    }

    // Extract singular values and left vectors; remember which columns are
    // too small to normalize meaningfully.
    let mut sigma: Vec<f64> = (0..n).map(|j| a.column_norm(j)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap().then(i.cmp(&j)));

    let mut u = DenseMatrix::zeros(m, n);
    let mut v_sorted = DenseMatrix::zeros(n, n);
    let mut dead_slots = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        for i in 0..n {
            v_sorted.set(i, slot, v.get(i, j));
        }
        if sigma[j] > dead {
            for i in 0..m {
                u.set(i, slot, a.get(i, j) / sigma[j]);
            }
        } else {
            dead_slots.push(slot);
        }
    }
    sigma = order.iter().map(|&j| sigma[j]).collect();

    complete_basis(&mut u, &dead_slots);
    Ok((u, sigma, v_sorted))
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all other
/// columns, chosen deterministically from the standard basis.
fn complete_basis(u: &mut DenseMatrix, slots: &[usize]) {
    let (m, p) = u.shape();
    let mut filled: Vec<usize> = (0..p).filter(|s| !slots.contains(s)).collect();
    for &slot in slots {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for cand in 0..m {
            let mut r = vec![0.0; m];
            r[cand] = 1.0;
            for &k in &filled {
                let dot: f64 = (0..m).map(|i| u.get(i, k) * r[i]).sum();
                for (i, ri) in r.iter_mut().enumerate() {
                    *ri -= dot * u.get(i, k);
                }
            }
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if best.as_ref().is_none_or(|(bn, _)| norm > *bn) {
                best = Some((norm, r));
            }
        }
        let (norm, r) = best.expect("m >= p guarantees a candidate");
        for (i, &ri) in r.iter().enumerate() {
            u.set(i, slot, ri / norm);
        }
        filled.push(slot);
    }
}
