//! Column/row skeleton selection and the decompositions built on skeletons.
//!
//! A *skeleton* is a pair of index vectors `(J, K)`: `J` picks actual columns
//! of a weight matrix and `K` picks actual rows. Three selection strategies
//! are provided:
//!
//! - `pmss`: deterministic, via column-pivoted QR — `J` is the first `c`
//!   pivots of the matrix itself, `K` the first `r` pivots of the selected
//!   columns transposed (so pivoting indexes rows);
//! - `random`: uniform without replacement under an explicit seed;
//! - `inverse-norm`: seeded sampling without replacement with weights
//!   `1 / (norm + 1e-12)`, which prefers small-norm columns/rows.
//!
//! On top of a skeleton sit the interpolative decompositions (column, row,
//! two-sided) and the CUR decomposition with the Frobenius-optimal core.
//! Every decomposition returns an [`ApproxReport`] comparing its error with
//! the best possible error at the same rank.
//!
//! All indices stored in [`SkeletonIndices`] are 1-based, matching the
//! on-disk index files and printed reports; they are converted to 0-based
//! offsets internally.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{least_squares_multi, pivoted_qr, svd};
use crate::matrix::DenseMatrix;

/// Additive guard in the inverse-norm sampling weights.
const INVERSE_NORM_EPS: f64 = 1e-12;
/// Pivot diagonal ratio below which a pmss skeleton is flagged as nearly
/// dependent.
const PIVOT_WARN_RATIO: f64 = 1e-10;
/// Relative error at or below which an approximation counts as exact when
/// forming the `error / floor` ratio (the floor itself is then pure noise).
const RATIO_SNAP: f64 = 1e-8;
/// Singular-value ratio below which a two-sided intersection is rejected.
const INTERSECTION_TOL: f64 = 1e-10;

/// How a skeleton was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionStrategy {
    Pmss,
    Random,
    InverseNorm,
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SelectionStrategy::Pmss => "pmss",
            SelectionStrategy::Random => "random",
            SelectionStrategy::InverseNorm => "inverse-norm",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for SelectionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pmss" => Ok(SelectionStrategy::Pmss),
            "random" => Ok(SelectionStrategy::Random),
            "inverse-norm" | "inverse_norm" => Ok(SelectionStrategy::InverseNorm),
            other => Err(Error::Parameter(format!("unknown strategy '{other}'"))),
        }
    }
}

/// A selected skeleton: 1-based column indices `J`, 1-based row indices `K`,
/// and the provenance needed to reproduce the selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonIndices {
    /// Column indices `J`, 1-based, distinct, in selection order.
    pub col_indices: Vec<usize>,
    /// Row indices `K`, 1-based, distinct, in selection order.
    pub row_indices: Vec<usize>,
    pub strategy: SelectionStrategy,
    /// Shape `(m, n)` of the matrix the skeleton was selected from.
    pub source_shape: (usize, usize),
    /// Seed used by the stochastic strategies; `None` for `pmss`.
    pub seed: Option<u64>,
    /// Set when pmss pivoting found nearly dependent skeleton vectors.
    pub pivot_warning: Option<String>,
}

impl SkeletonIndices {
    /// Validates index ranges and distinctness against `source_shape`.
    pub fn new(
        col_indices: Vec<usize>,
        row_indices: Vec<usize>,
        strategy: SelectionStrategy,
        source_shape: (usize, usize),
        seed: Option<u64>,
    ) -> Result<Self> {
        let (m, n) = source_shape;
        check_indices(&col_indices, n, "column")?;
        check_indices(&row_indices, m, "row")?;
        Ok(Self { col_indices, row_indices, strategy, source_shape, seed, pivot_warning: None })
    }

    pub fn c(&self) -> usize {
        self.col_indices.len()
    }

    pub fn r(&self) -> usize {
        self.row_indices.len()
    }

    /// Column offsets for slicing (0-based).
    pub fn cols_zero_based(&self) -> Vec<usize> {
        self.col_indices.iter().map(|&j| j - 1).collect()
    }

    /// Row offsets for slicing (0-based).
    pub fn rows_zero_based(&self) -> Vec<usize> {
        self.row_indices.iter().map(|&i| i - 1).collect()
    }

    fn check_source(&self, w: &DenseMatrix) -> Result<()> {
        if w.shape() != self.source_shape {
            return Err(Error::Parameter(format!(
                "skeleton was selected from a {}x{} matrix but was applied to {}x{}",
                self.source_shape.0,
                self.source_shape.1,
                w.rows(),
                w.cols()
            )));
        }
        Ok(())
    }
}

fn check_indices(idx: &[usize], limit: usize, what: &str) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::Parameter(format!("empty {what} skeleton")));
    }
    let mut seen = HashSet::new();
    for &i in idx {
        if i == 0 || i > limit {
            return Err(Error::Parameter(format!(
                "{what} index {i} out of range 1..={limit}"
            )));
        }
        if !seen.insert(i) {
            return Err(Error::Parameter(format!("duplicate {what} index {i}")));
        }
    }
    Ok(())
}

/// Deterministic skeleton selection by column-pivoted QR.
///
/// `J` is the first `c` pivots of the matrix; `K` is the first `r` pivots of
/// the selected columns transposed, so that the second factorization pivots
/// over rows. Requires `1 <= r <= c <= min(m, n)`.
pub fn select_pmss(w: &DenseMatrix, c: usize, r: usize) -> Result<SkeletonIndices> {
    let (m, n) = w.shape();
    if !(1 <= r && r <= c && c <= m.min(n)) {
        return Err(Error::Parameter(format!(
            "pmss selection needs 1 <= r <= c <= min(m, n); got c={c}, r={r} for {m}x{n}"
        )));
    }
    let col_qr = pivoted_qr(w, c)?;
    let col_indices: Vec<usize> = col_qr.perm[..c].iter().map(|&j| j + 1).collect();

    let c_mat = w.select_columns(&col_qr.perm[..c])?;
    let row_qr = pivoted_qr(&c_mat.transpose(), r)?;
    let row_indices: Vec<usize> = row_qr.perm[..r].iter().map(|&i| i + 1).collect();

    let mut skel =
        SkeletonIndices::new(col_indices, row_indices, SelectionStrategy::Pmss, (m, n), None)?;
    skel.pivot_warning = pivot_warning(&col_qr.rfac, c, "column")
        .or_else(|| pivot_warning(&row_qr.rfac, r, "row"));
    Ok(skel)
}

/// Flags nearly dependent pivots: a diagonal entry of the pivoted QR factor
/// below `1e-10` times the leading one.
fn pivot_warning(rfac: &DenseMatrix, k: usize, what: &str) -> Option<String> {
    let lead = rfac.get(0, 0).abs();
    for t in 1..k {
        let d = rfac.get(t, t).abs();
        if d < PIVOT_WARN_RATIO * lead {
            return Some(format!(
                "nearly dependent {what} skeleton: pivot {} has |rfac| = {d:.3e} \
                 against leading {lead:.3e}",
                t + 1
            ));
        }
    }
    None
}

/// Uniform skeleton selection without replacement under an explicit seed.
/// Requires `c <= n` and `r <= m`.
pub fn select_random(w: &DenseMatrix, c: usize, r: usize, seed: u64) -> Result<SkeletonIndices> {
    let (m, n) = w.shape();
    check_counts(c, r, m, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let col_indices = sample_uniform(n, c, &mut rng);
    let row_indices = sample_uniform(m, r, &mut rng);
    SkeletonIndices::new(col_indices, row_indices, SelectionStrategy::Random, (m, n), Some(seed))
}

/// Inverse-norm weighted selection without replacement: weight
/// `1 / (norm + 1e-12)`, so small-norm columns and rows are preferred and a
/// zero column receives the overwhelmingly largest weight.
pub fn select_inverse_norm(
    w: &DenseMatrix,
    c: usize,
    r: usize,
    seed: u64,
) -> Result<SkeletonIndices> {
    let (m, n) = w.shape();
    check_counts(c, r, m, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let col_weights: Vec<f64> =
        (0..n).map(|j| 1.0 / (w.column_norm(j) + INVERSE_NORM_EPS)).collect();
    let col_indices = sample_weighted(&col_weights, c, &mut rng);
    let row_weights: Vec<f64> =
        (0..m).map(|i| 1.0 / (w.row_norm(i) + INVERSE_NORM_EPS)).collect();
    let row_indices = sample_weighted(&row_weights, r, &mut rng);
    SkeletonIndices::new(
        col_indices,
        row_indices,
        SelectionStrategy::InverseNorm,
        (m, n),
        Some(seed),
    )
}

fn check_counts(c: usize, r: usize, m: usize, n: usize) -> Result<()> {
    if c == 0 || c > n || r == 0 || r > m {
        return Err(Error::Parameter(format!(
            "selection counts must satisfy 1 <= c <= n and 1 <= r <= m; \
             got c={c}, r={r} for {m}x{n}"
        )));
    }
    Ok(())
}

/// Partial Fisher-Yates draw of `k` distinct 1-based indices out of `1..=n`.
fn sample_uniform(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (1..=n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Sequential weighted draw without replacement of `k` distinct 1-based
/// indices; each draw is proportional to the remaining weights.
fn sample_weighted(weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut alive: Vec<usize> = (0..weights.len()).collect();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = alive.iter().map(|&i| weights[i]).sum();
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = alive.len() - 1;
        for (pos, &i) in alive.iter().enumerate() {
            u -= weights[i];
            if u <= 0.0 {
                chosen = pos;
                break;
            }
        }
        picked.push(alive.remove(chosen) + 1);
    }
    picked
}

/// Which decomposition produced an [`ApproxReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxMethod {
    ColumnId,
    RowId,
    TwoSidedId,
    Cur,
}

impl fmt::Display for ApproxMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ApproxMethod::ColumnId => "column_id",
            ApproxMethod::RowId => "row_id",
            ApproxMethod::TwoSidedId => "two_sided_id",
            ApproxMethod::Cur => "cur",
        };
        f.write_str(name)
    }
}

/// Quality of a skeleton approximation against the best approximation of the
/// same rank.
#[derive(Debug, Clone, Serialize)]
pub struct ApproxReport {
    pub method: ApproxMethod,
    /// `||w - approx||_F`.
    pub abs_error: f64,
    /// `abs_error / ||w||_F` (0 for a zero matrix reproduced exactly).
    pub rel_error: f64,
    /// Frobenius error of the best approximation at the comparison rank.
    pub svd_floor: f64,
    /// `abs_error / svd_floor`, with errors at or below `1e-8 * ||w||_F`
    /// snapped to an exact recovery (ratio 1) since the floor itself is
    /// rounding noise there.
    pub ratio: f64,
}

fn build_report(
    w: &DenseMatrix,
    approx: &DenseMatrix,
    method: ApproxMethod,
    floor_rank: usize,
) -> Result<ApproxReport> {
    let abs_error = w.sub(approx).frobenius_norm();
    let w_norm = w.frobenius_norm();
    let rel_error = if w_norm > 0.0 {
        abs_error / w_norm
    } else if abs_error > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let svd_floor = svd(w)?.rank_floor(floor_rank);
    let snap = RATIO_SNAP * w_norm;
    let ratio = if svd_floor <= snap {
        if abs_error <= snap {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        abs_error / svd_floor
    };
    Ok(ApproxReport { method, abs_error, rel_error, svd_floor, ratio })
}

/// Column interpolative decomposition `w ~ C * x_coeff` with `C = w(:, J)`
/// and `x_coeff` the least-squares coefficient matrix. Returns the
/// coefficients and the quality report at rank `|J|`.
pub fn column_id(
    w: &DenseMatrix,
    skel: &SkeletonIndices,
) -> Result<(DenseMatrix, ApproxReport)> {
    skel.check_source(w)?;
    let c_mat = w.select_columns(&skel.cols_zero_based())?;
    let x_coeff = least_squares_multi(&c_mat, w)?;
    let approx = c_mat.matmul(&x_coeff);
    let report = build_report(w, &approx, ApproxMethod::ColumnId, skel.c())?;
    Ok((x_coeff, report))
}

/// Row interpolative decomposition `w ~ x_coeff * R` with `R = w(K, :)`.
/// Returns the coefficients and the quality report at rank `|K|`.
pub fn row_id(w: &DenseMatrix, skel: &SkeletonIndices) -> Result<(DenseMatrix, ApproxReport)> {
    skel.check_source(w)?;
    let r_mat = w.select_rows(&skel.rows_zero_based())?;
    // x_coeff = w * R^+ solved through the transposed system.
    let x_coeff = least_squares_multi(&r_mat.transpose(), &w.transpose())?.transpose();
    let approx = x_coeff.matmul(&r_mat);
    let report = build_report(w, &approx, ApproxMethod::RowId, skel.r())?;
    Ok((x_coeff, report))
}

/// Factors of the two-sided interpolative decomposition
/// `w ~ col_coeff * intersection * row_coeff`.
pub struct TwoSidedFactors {
    /// `C * S^-1`, `m x k`.
    pub col_coeff: DenseMatrix,
    /// `S = w(K, J)`, `k x k`.
    pub intersection: DenseMatrix,
    /// `C^+ * w`, `k x n`.
    pub row_coeff: DenseMatrix,
}

impl TwoSidedFactors {
    pub fn approx(&self) -> DenseMatrix {
        self.col_coeff.matmul(&self.intersection).matmul(&self.row_coeff)
    }
}

/// Two-sided interpolative decomposition. Requires `|J| = |K|` and a
/// nonsingular intersection `S = w(K, J)`; a singular intersection (smallest
/// singular value below `1e-10` times the largest) is a degeneracy error.
pub fn two_sided_id(
    w: &DenseMatrix,
    skel: &SkeletonIndices,
) -> Result<(TwoSidedFactors, ApproxReport)> {
    skel.check_source(w)?;
    if skel.c() != skel.r() {
        return Err(Error::Parameter(format!(
            "two-sided skeleton needs |J| = |K|; got {} and {}",
            skel.c(),
            skel.r()
        )));
    }
    let c_mat = w.select_columns(&skel.cols_zero_based())?;
    let s_mat = c_mat.select_rows(&skel.rows_zero_based())?;
    let s_svd = svd(&s_mat)?;
    let (top, bottom) = (s_svd.sigma[0], *s_svd.sigma.last().unwrap());
    let ratio = if top > 0.0 { bottom / top } else { 0.0 };
    if ratio < INTERSECTION_TOL {
        return Err(Error::Degenerate { ratio });
    }
    // S^-1 from the already-computed SVD; every direction is kept.
    let k = s_svd.sigma.len();
    let mut vs = DenseMatrix::zeros(k, k);
    for j in 0..k {
        let inv = 1.0 / s_svd.sigma[j];
        for i in 0..k {
            vs.set(i, j, s_svd.v.get(i, j) * inv);
        }
    }
    let s_inv = vs.matmul(&s_svd.u.transpose());

    let col_coeff = c_mat.matmul(&s_inv);
    let row_coeff = least_squares_multi(&c_mat, w)?;
    let factors = TwoSidedFactors { col_coeff, intersection: s_mat, row_coeff };
    let report = build_report(w, &factors.approx(), ApproxMethod::TwoSidedId, skel.c())?;
    Ok((factors, report))
}

/// CUR decomposition with the Frobenius-optimal core
/// `u_opt = C^+ * w * R^+`, the minimizer of `||w - C * U * R||_F` over `U`.
/// The report compares against the best rank-`min(c, r)` approximation.
pub fn cur_optimal(
    w: &DenseMatrix,
    skel: &SkeletonIndices,
) -> Result<(DenseMatrix, ApproxReport)> {
    skel.check_source(w)?;
    let c_mat = w.select_columns(&skel.cols_zero_based())?;
    let r_mat = w.select_rows(&skel.rows_zero_based())?;
    let t = least_squares_multi(&c_mat, w)?;
    let u_opt = least_squares_multi(&r_mat.transpose(), &t.transpose())?.transpose();
    let approx = c_mat.matmul(&u_opt).matmul(&r_mat);
    let report = build_report(w, &approx, ApproxMethod::Cur, skel.c().min(skel.r()))?;
    Ok((u_opt, report))
}

/// One `(strategy, seed)` cell of a quality sweep.
#[derive(Debug, Clone, Serialize)]
pub struct QualityRow {
    pub strategy: SelectionStrategy,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ApproxReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-strategy aggregate over the seeds that succeeded.
#[derive(Debug, Clone, Serialize)]
pub struct StrategySummary {
    pub strategy: SelectionStrategy,
    pub mean_rel_error: f64,
    pub min_rel_error: f64,
    pub max_rel_error: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct QualityReport {
    pub rows: Vec<QualityRow>,
    pub summary: Vec<StrategySummary>,
}

/// Runs `cur_optimal` for every `(strategy, seed)` pair on one matrix and
/// aggregates mean/min/max relative error per strategy. Selection failures
/// are recorded in the offending row instead of aborting the sweep.
pub fn skeleton_quality_report(
    w: &DenseMatrix,
    strategies: &[SelectionStrategy],
    c: usize,
    r: usize,
    seeds: &[u64],
) -> Result<QualityReport> {
    if strategies.is_empty() || seeds.is_empty() {
        return Err(Error::Parameter("quality report needs strategies and seeds".into()));
    }
    let mut rows = Vec::new();
    for &strategy in strategies {
        for &seed in seeds {
            let outcome = select_with(w, strategy, c, r, seed)
                .and_then(|skel| cur_optimal(w, &skel).map(|(_, rep)| rep));
            let (report, error) = match outcome {
                Ok(rep) => (Some(rep), None),
                Err(e) => (None, Some(e.to_string())),
            };
            rows.push(QualityRow { strategy, seed, report, error });
        }
    }
    let summary = summarize(&rows, strategies);
    Ok(QualityReport { rows, summary })
}

/// Dispatches to the strategy implementations; `seed` is ignored by `pmss`.
pub fn select_with(
    w: &DenseMatrix,
    strategy: SelectionStrategy,
    c: usize,
    r: usize,
    seed: u64,
) -> Result<SkeletonIndices> {
    match strategy {
        SelectionStrategy::Pmss => select_pmss(w, c, r),
        SelectionStrategy::Random => select_random(w, c, r, seed),
        SelectionStrategy::InverseNorm => select_inverse_norm(w, c, r, seed),
    }
}

/// Aggregates rows (e.g. collected across several matrices) per strategy.
pub fn summarize(rows: &[QualityRow], strategies: &[SelectionStrategy]) -> Vec<StrategySummary> {
    strategies
        .iter()
        .map(|&strategy| {
            let errs: Vec<f64> = rows
                .iter()
                .filter(|row| row.strategy == strategy)
                .filter_map(|row| row.report.as_ref().map(|r| r.rel_error))
                .collect();
            let failures = rows
                .iter()
                .filter(|row| row.strategy == strategy && row.error.is_some())
                .count();
            let (mean, min, max) = if errs.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    errs.iter().sum::<f64>() / errs.len() as f64,
                    errs.iter().cloned().fold(f64::INFINITY, f64::min),
                    errs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                )
            };
            StrategySummary {
                strategy,
                mean_rel_error: mean,
                min_rel_error: min,
                max_rel_error: max,
                failures,
            }
        })
        .collect()
}

/// Shape of the synthetic spectra used by the selection benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Spectrum {
    /// `k` singular values at 100, the rest at 1.
    Dominant,
    /// All singular values at 1.
    Flat,
}

impl std::str::FromStr for Spectrum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dominant" => Ok(Spectrum::Dominant),
            "flat" => Ok(Spectrum::Flat),
            other => Err(Error::Parameter(format!("unknown spectrum '{other}'"))),
        }
    }
}

/// Builds a seeded `m x n` matrix with the requested singular spectrum and
/// random orthogonal factors.
pub fn make_spectrum_matrix(
    m: usize,
    n: usize,
    k: usize,
    spectrum: Spectrum,
    seed: u64,
) -> Result<DenseMatrix> {
    let p = m.min(n);
    if m == 0 || n == 0 || k == 0 || k > p {
        return Err(Error::Parameter(format!(
            "spectrum matrix needs 1 <= k <= min(m, n); got k={k} for {m}x{n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = pivoted_qr(&DenseMatrix::gaussian(m, p, 1.0, &mut rng), p)?.q;
    let v = pivoted_qr(&DenseMatrix::gaussian(n, p, 1.0, &mut rng), p)?.q;
    let mut us = u;
    for j in 0..p {
        let sigma = match spectrum {
            Spectrum::Dominant => {
                if j < k {
                    100.0
                } else {
                    1.0
                }
            }
            Spectrum::Flat => 1.0,
        };
        for i in 0..m {
            us.set(i, j, us.get(i, j) * sigma);
        }
    }
    Ok(us.matmul(&v.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exact_rank_matrix(m: usize, n: usize, k: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DenseMatrix::gaussian(m, k, 1.0, &mut rng);
        let y = DenseMatrix::gaussian(k, n, 1.0, &mut rng);
        x.matmul(&y)
    }

    #[test]
    fn pmss_on_scaled_diagonal_picks_dominant_axes() {
        let w = DenseMatrix::from_rows(&[
            vec![5.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.1],
        ])
        .unwrap();
        let skel = select_pmss(&w, 2, 2).unwrap();
        assert_eq!(skel.col_indices, vec![1, 2]);
        assert_eq!(skel.row_indices, vec![1, 2]);
        assert!(skel.seed.is_none());
    }

    #[test]
    fn pmss_on_identity_breaks_ties_by_lowest_index() {
        let w = DenseMatrix::identity(4);
        let skel = select_pmss(&w, 4, 4).unwrap();
        assert_eq!(skel.col_indices, vec![1, 2, 3, 4]);
        assert_eq!(skel.row_indices, vec![1, 2, 3, 4]);
    }

    #[test]
    fn pmss_rejects_bad_counts() {
        let w = DenseMatrix::identity(4);
        assert!(select_pmss(&w, 2, 3).is_err(), "r > c");
        assert!(select_pmss(&w, 5, 1).is_err(), "c > min(m, n)");
        assert!(select_pmss(&w, 2, 0).is_err(), "zero r");
    }

    #[test]
    fn pmss_flags_nearly_dependent_pivots() {
        // Rank 1 in exact arithmetic: the second pivot is noise.
        let w = DenseMatrix::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![2.0, 4.0, 6.0],
            vec![3.0, 6.0, 9.0],
        ])
        .unwrap();
        let skel = select_pmss(&w, 2, 2).unwrap();
        assert!(skel.pivot_warning.is_some(), "expected pivot warning");
    }

    #[test]
    fn random_selection_is_seed_deterministic_and_covers() {
        let w = DenseMatrix::zeros(5, 6);
        let a = select_random(&w, 3, 2, 9).unwrap();
        let b = select_random(&w, 3, 2, 9).unwrap();
        assert_eq!(a, b);
        let full = select_random(&w, 6, 5, 4).unwrap();
        let mut cols = full.col_indices.clone();
        cols.sort_unstable();
        assert_eq!(cols, vec![1, 2, 3, 4, 5, 6]);
        let mut rows = full.row_indices.clone();
        rows.sort_unstable();
        assert_eq!(rows, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn random_selection_is_roughly_uniform() {
        let w = DenseMatrix::zeros(1, 4);
        let mut counts = [0usize; 4];
        for seed in 0..1000 {
            let skel = select_random(&w, 1, 1, seed).unwrap();
            counts[skel.col_indices[0] - 1] += 1;
        }
        for (j, &count) in counts.iter().enumerate() {
            let freq = count as f64 / 1000.0;
            assert!((freq - 0.25).abs() <= 0.05, "column {j}: frequency {freq}");
        }
    }

    #[test]
    fn inverse_norm_prefers_small_columns() {
        let w = DenseMatrix::from_rows(&[vec![10.0, 0.1]]).unwrap();
        let mut small = 0usize;
        let trials = 2000;
        for seed in 0..trials {
            let skel = select_inverse_norm(&w, 1, 1, seed).unwrap();
            if skel.col_indices[0] == 2 {
                small += 1;
            }
        }
        let freq = small as f64 / trials as f64;
        assert!((freq - 0.990).abs() <= 0.01, "frequency {freq}");
    }

    #[test]
    fn inverse_norm_zero_column_dominates() {
        let w = DenseMatrix::from_rows(&[vec![1.0, 0.0, 1.0]]).unwrap();
        for seed in 0..10 {
            let skel = select_inverse_norm(&w, 1, 1, seed).unwrap();
            assert_eq!(skel.col_indices, vec![2], "seed {seed}");
        }
    }

    #[test]
    fn inverse_norm_full_selection_covers() {
        let w = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]])
            .unwrap();
        let skel = select_inverse_norm(&w, 2, 3, 0).unwrap();
        let mut cols = skel.col_indices.clone();
        cols.sort_unstable();
        assert_eq!(cols, vec![1, 2]);
        let mut rows = skel.row_indices.clone();
        rows.sort_unstable();
        assert_eq!(rows, vec![1, 2, 3]);
    }

    #[test]
    fn column_id_with_all_columns_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = DenseMatrix::gaussian(6, 4, 1.0, &mut rng);
        let skel =
            SkeletonIndices::new(vec![1, 2, 3, 4], vec![1], SelectionStrategy::Pmss, (6, 4), None)
                .unwrap();
        let (_, report) = column_id(&w, &skel).unwrap();
        assert!(report.rel_error <= 1e-10, "rel error {}", report.rel_error);
        assert_eq!(report.ratio, 1.0);
    }

    #[test]
    fn column_id_interpolates_selected_columns_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = DenseMatrix::gaussian(8, 8, 1.0, &mut rng);
        let skel = select_pmss(&w, 3, 3).unwrap();
        let (x_coeff, _) = column_id(&w, &skel).unwrap();
        let c_mat = w.select_columns(&skel.cols_zero_based()).unwrap();
        let approx = c_mat.matmul(&x_coeff);
        for (slot, &j) in skel.cols_zero_based().iter().enumerate() {
            for i in 0..8 {
                let diff = (approx.get(i, j) - c_mat.get(i, slot)).abs();
                assert!(diff <= 1e-10, "column {j} row {i}: drift {diff}");
            }
        }
    }

    #[test]
    fn row_id_mirrors_column_id() {
        let w = exact_rank_matrix(7, 9, 3, 21);
        let skel = select_pmss(&w, 3, 3).unwrap();
        let (x_coeff, report) = row_id(&w, &skel).unwrap();
        assert_eq!(x_coeff.shape(), (7, 3));
        assert!(report.rel_error <= 1e-8, "rel error {}", report.rel_error);
    }

    #[test]
    fn two_sided_id_full_square_skeleton_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let w = DenseMatrix::gaussian(5, 5, 1.0, &mut rng);
        let skel = SkeletonIndices::new(
            (1..=5).collect(),
            (1..=5).collect(),
            SelectionStrategy::Pmss,
            (5, 5),
            None,
        )
        .unwrap();
        let (factors, report) = two_sided_id(&w, &skel).unwrap();
        assert!(report.rel_error <= 1e-10, "rel error {}", report.rel_error);
        assert_eq!(factors.intersection.shape(), (5, 5));
    }

    #[test]
    fn two_sided_id_recovers_exact_rank() {
        let w = exact_rank_matrix(6, 6, 2, 33);
        let skel = select_pmss(&w, 2, 2).unwrap();
        let (_, report) = two_sided_id(&w, &skel).unwrap();
        assert!(report.rel_error <= 1e-8, "rel error {}", report.rel_error);
    }

    #[test]
    fn two_sided_id_rejects_mismatched_and_singular_skeletons() {
        let w = DenseMatrix::from_rows(&[
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ])
        .unwrap();
        let uneven =
            SkeletonIndices::new(vec![1, 2], vec![1], SelectionStrategy::Random, (3, 3), Some(0))
                .unwrap();
        assert!(matches!(two_sided_id(&w, &uneven), Err(Error::Parameter(_))));
        // Any 2x2 block of the all-ones matrix is singular.
        let singular =
            SkeletonIndices::new(vec![1, 2], vec![1, 2], SelectionStrategy::Random, (3, 3), Some(0))
                .unwrap();
        assert!(matches!(two_sided_id(&w, &singular), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn cur_zero_matrix_yields_zero_core() {
        let w = DenseMatrix::zeros(4, 5);
        let skel =
            SkeletonIndices::new(vec![1, 2], vec![3], SelectionStrategy::Random, (4, 5), Some(1))
                .unwrap();
        let (u_opt, report) = cur_optimal(&w, &skel).unwrap();
        assert_eq!(u_opt.max_abs(), 0.0);
        assert_eq!(report.abs_error, 0.0);
        assert_eq!(report.rel_error, 0.0);
        assert_eq!(report.ratio, 1.0);
    }

    #[test]
    fn cur_rank_one_is_exact() {
        let w = exact_rank_matrix(5, 4, 1, 44);
        let skel = select_pmss(&w, 1, 1).unwrap();
        let (_, report) = cur_optimal(&w, &skel).unwrap();
        assert!(report.rel_error <= 1e-12, "rel error {}", report.rel_error);
        assert_eq!(report.ratio, 1.0);
    }

    #[test]
    fn cur_exact_rank_four_hits_the_floor() {
        let w = exact_rank_matrix(16, 12, 4, 55);
        let skel = select_pmss(&w, 4, 4).unwrap();
        let (u_opt, report) = cur_optimal(&w, &skel).unwrap();
        assert_eq!(u_opt.shape(), (4, 4));
        assert!(report.rel_error <= 1e-8, "rel error {}", report.rel_error);
        assert!(report.ratio <= 1.0 + 1e-6, "ratio {}", report.ratio);
    }

    #[test]
    fn cur_core_is_frobenius_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let w = DenseMatrix::gaussian(10, 8, 1.0, &mut rng);
        let skel = select_pmss(&w, 3, 3).unwrap();
        let (u_opt, report) = cur_optimal(&w, &skel).unwrap();
        let c_mat = w.select_columns(&skel.cols_zero_based()).unwrap();
        let r_mat = w.select_rows(&skel.rows_zero_based()).unwrap();
        let base = report.abs_error;
        let step = 1e-3 * u_opt.frobenius_norm();
        for trial in 0..20 {
            let mut pert_rng = ChaCha8Rng::seed_from_u64(trial);
            let dir = DenseMatrix::gaussian(3, 3, 1.0, &mut pert_rng);
            let dir = dir.scale(step / dir.frobenius_norm());
            let perturbed = c_mat.matmul(&u_opt.add(&dir)).matmul(&r_mat);
            let err = w.sub(&perturbed).frobenius_norm();
            assert!(err >= base - 1e-12, "trial {trial}: {err} < {base}");
        }
    }

    #[test]
    fn ratio_never_beats_the_floor() {
        for seed in 0..10 {
            let w = make_spectrum_matrix(12, 10, 3, Spectrum::Dominant, seed).unwrap();
            let skel = select_random(&w, 4, 4, seed).unwrap();
            let (_, report) = cur_optimal(&w, &skel).unwrap();
            assert!(report.ratio >= 1.0 - 1e-9, "seed {seed}: ratio {}", report.ratio);
        }
    }

    #[test]
    fn quality_report_pmss_row_is_deterministic() {
        let w = exact_rank_matrix(10, 10, 3, 77);
        let rep =
            skeleton_quality_report(&w, &[SelectionStrategy::Pmss], 3, 3, &[0, 1]).unwrap();
        assert_eq!(rep.rows.len(), 2);
        let a = rep.rows[0].report.as_ref().unwrap();
        let b = rep.rows[1].report.as_ref().unwrap();
        assert_eq!(a.rel_error, b.rel_error, "pmss must ignore the seed");
        assert_eq!(rep.summary[0].failures, 0);
    }

    #[test]
    fn quality_report_marks_failed_cells() {
        // 2x2 of rank 1: a 2-by-2 CUR still works, but make c too large for
        // the matrix so selection fails for every seed.
        let w = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let rep =
            skeleton_quality_report(&w, &[SelectionStrategy::Random], 3, 1, &[0]).unwrap();
        assert!(rep.rows[0].error.is_some());
        assert_eq!(rep.summary[0].failures, 1);
        assert!(rep.summary[0].mean_rel_error.is_nan());
    }

    #[test]
    fn dominant_spectrum_separates_pmss_from_inverse_norm() {
        let w = make_spectrum_matrix(64, 64, 4, Spectrum::Dominant, 123).unwrap();
        let seeds: Vec<u64> = (0..20).collect();
        let rep = skeleton_quality_report(
            &w,
            &[SelectionStrategy::Pmss, SelectionStrategy::InverseNorm],
            4,
            4,
            &seeds,
        )
        .unwrap();
        let mean = |s: SelectionStrategy| {
            rep.summary.iter().find(|x| x.strategy == s).unwrap().mean_rel_error
        };
        assert!(
            mean(SelectionStrategy::Pmss) < mean(SelectionStrategy::InverseNorm),
            "pmss {} vs inverse-norm {}",
            mean(SelectionStrategy::Pmss),
            mean(SelectionStrategy::InverseNorm)
        );
    }

    #[test]
    fn full_skeleton_makes_every_strategy_exact() {
        let w = make_spectrum_matrix(12, 12, 3, Spectrum::Dominant, 5).unwrap();
        let rep = skeleton_quality_report(
            &w,
            &[SelectionStrategy::Pmss, SelectionStrategy::Random, SelectionStrategy::InverseNorm],
            12,
            12,
            &[0, 1, 2],
        )
        .unwrap();
        for row in &rep.rows {
            let r = row.report.as_ref().expect("full skeleton cannot fail");
            assert!(
                r.rel_error <= 1e-9,
                "{} seed {}: rel error {}",
                row.strategy,
                row.seed,
                r.rel_error
            );
        }
    }

    #[test]
    fn spectrum_matrix_has_requested_spectrum() {
        let w = make_spectrum_matrix(10, 8, 2, Spectrum::Dominant, 9).unwrap();
        let s = svd(&w).unwrap();
        assert!((s.sigma[0] - 100.0).abs() < 1e-9);
        assert!((s.sigma[1] - 100.0).abs() < 1e-9);
        assert!((s.sigma[2] - 1.0).abs() < 1e-9);
        let flat = make_spectrum_matrix(6, 6, 1, Spectrum::Flat, 9).unwrap();
        let s = svd(&flat).unwrap();
        for v in &s.sigma {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn skeleton_rejects_duplicates_and_out_of_range() {
        let err = SkeletonIndices::new(vec![1, 1], vec![1], SelectionStrategy::Pmss, (3, 3), None);
        assert!(err.is_err(), "duplicate index accepted");
        let err = SkeletonIndices::new(vec![4], vec![1], SelectionStrategy::Pmss, (3, 3), None);
        assert!(err.is_err(), "out-of-range index accepted");
        let err = SkeletonIndices::new(vec![0], vec![1], SelectionStrategy::Pmss, (3, 3), None);
        assert!(err.is_err(), "zero index accepted");
    }

    #[test]
    fn decompositions_reject_mismatched_source_shape() {
        let w = DenseMatrix::identity(4);
        let skel =
            SkeletonIndices::new(vec![1], vec![1], SelectionStrategy::Pmss, (3, 3), None).unwrap();
        assert!(column_id(&w, &skel).is_err());
        assert!(cur_optimal(&w, &skel).is_err());
    }
}
