//! Column-pivoted Householder QR, truncated after `k` reflectors.
//!
//! The pivot rule is greedy: at step `t` the column with the largest
//! residual 2-norm among the not-yet-factored columns is swapped into
//! position `t` (ties broken by the lowest original column index). Residual
//! norms are maintained by the usual downdating recurrence; whenever a
//! downdated value drops below `1e-8` times the column's original norm the
//! norm is recomputed from the working matrix, which guards against the
//! cancellation that plain downdating is known to suffer from.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Relative threshold below which a downdated residual norm is recomputed
/// exactly from the working matrix.
const RECOMPUTE_GUARD: f64 = 1e-8;

/// Truncated column-pivoted QR factorization `w(:, perm) = q * rfac`.
pub struct PivotedQr {
    /// `m x k`, orthonormal columns.
    pub q: DenseMatrix,
    /// `k x n`, upper triangular in its leading `k x k` block; columns appear
    /// in pivot order.
    pub rfac: DenseMatrix,
    /// Full column permutation (0-based): position `t` holds the original
    /// index of the column factored at step `t`.
    pub perm: Vec<usize>,
    /// Number of reflectors applied.
    pub k: usize,
}

impl PivotedQr {
    /// Largest violation of the pivot-dominance inequality
    /// `rfac(t,t)^2 >= sum_{i=t..j} rfac(i,j)^2` over all `t < k`, `j > t`.
    /// Greedy pivoting guarantees this is non-positive up to rounding.
    pub fn decay_violation(&self) -> f64 {
        let (k, n) = self.rfac.shape();
        let mut worst = f64::NEG_INFINITY;
        for t in 0..k {
            let diag_sq = self.rfac.get(t, t).powi(2);
            for j in (t + 1)..n {
                let tail_sq: f64 =
                    (t..=j.min(k - 1)).map(|i| self.rfac.get(i, j).powi(2)).sum();
                worst = worst.max(tail_sq - diag_sq);
            }
        }
        worst
    }
}

/// Computes the truncated column-pivoted QR of `w` with `k` reflectors,
/// `1 <= k <= min(m, n)`.
///
/// The leading `k` pivot columns are reproduced exactly:
/// `w(:, perm[..k]) = q * rfac(:, ..k)` up to rounding. With
/// `k = min(m, n)` the whole permuted matrix is reproduced.
pub fn pivoted_qr(w: &DenseMatrix, k: usize) -> Result<PivotedQr> {
    let (m, n) = w.shape();
    if k == 0 || k > m.min(n) {
        return Err(Error::Parameter(format!(
            "qr truncation rank {k} must satisfy 1 <= k <= min({m}, {n})"
        )));
    }

    let mut a = w.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut orig: Vec<f64> = (0..n).map(|j| a.column_norm(j)).collect();
    let mut res = orig.clone();
    // Reflector `t` is stored as (v, v'v) acting on rows t..m; `None` marks a
    // step where the residual was exactly zero and no reflection was needed.
    let mut reflectors: Vec<Option<(Vec<f64>, f64)>> = Vec::with_capacity(k);

    for t in 0..k {
        // Pivot: largest residual norm, ties to the lowest original index.
        let mut best = t;
        for j in (t + 1)..n {
            if res[j] > res[best] || (res[j] == res[best] && perm[j] < perm[best]) {
                best = j;
            }
        }
        if best != t {
            a.swap_columns(t, best);
            perm.swap(t, best);
            res.swap(t, best);
            orig.swap(t, best);
        }

        let x: Vec<f64> = (t..m).map(|i| a.get(i, t)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Residual is exactly zero; every remaining column is too.
            reflectors.push(None);
            continue;
        }

        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|e| e * e).sum();
        for j in t..n {
            let dot: f64 = (t..m).map(|i| v[i - t] * a.get(i, j)).sum();
            let f = 2.0 * dot / vtv;
            if f != 0.0 {
                for i in t..m {
                    let val = a.get(i, j) - f * v[i - t];
                    a.set(i, j, val);
                }
            }
        }
        a.set(t, t, alpha);
        for i in (t + 1)..m {
            a.set(i, t, 0.0);
        }
        reflectors.push(Some((v, vtv)));

        for j in (t + 1)..n {
            if res[j] > 0.0 {
                let ratio = a.get(t, j) / res[j];
                res[j] *= (1.0 - ratio * ratio).max(0.0).sqrt();
            }
            if res[j] < RECOMPUTE_GUARD * orig[j] {
                res[j] = ((t + 1)..m).map(|i| a.get(i, j).powi(2)).sum::<f64>().sqrt();
            }
        }
    }

    let mut rfac = DenseMatrix::zeros(k, n);
    for i in 0..k {
        for j in 0..n {
            rfac.set(i, j, a.get(i, j));
        }
    }

    // Back-accumulate q = H_0 * ... * H_{k-1} * [I_k; 0].
    let mut q = DenseMatrix::zeros(m, k);
    for t in 0..k {
        q.set(t, t, 1.0);
    }
    for t in (0..k).rev() {
        if let Some((v, vtv)) = &reflectors[t] {
            for c in 0..k {
                let dot: f64 = (t..m).map(|i| v[i - t] * q.get(i, c)).sum();
                let f = 2.0 * dot / vtv;
                if f != 0.0 {
                    for i in t..m {
                        let val = q.get(i, c) - f * v[i - t];
                        q.set(i, c, val);
                    }
                }
            }
        }
    }

    Ok(PivotedQr { q, rfac, perm, k })
}
