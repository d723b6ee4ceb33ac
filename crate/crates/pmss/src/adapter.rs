//! Adapters for parameter-efficient fine-tuning of a frozen weight matrix.
//!
//! [`PmssAdapter`] keeps the base matrix `W` frozen, selects a column
//! skeleton `C = W(:, J)` and a row skeleton `R = W(K, :)`, freezes both,
//! and trains only the small core `U`:
//!
//! ```text
//! y = (W + s * C * U * R) * x,    s = alpha / max(c, r)
//! ```
//!
//! `U` starts at zero so a freshly initialized adapter computes exactly the
//! base forward pass. Because `C` and `R` are slices of the trained weights
//! themselves, the adapter stores only the index vectors plus `U` when
//! checkpointed and rematerializes the skeleton matrices from the base on
//! load.
//!
//! [`LoraAdapter`] is the standard low-rank baseline `y = (W + (alpha/r) *
//! B * A) * x` with `A` Gaussian-initialized and `B` zero-initialized; it is
//! used for budget-matched comparisons.
//!
//! Backward passes are exact (hand-derived, no autograd) and never
//! materialize the `m x n` update. For a batch `X` with upstream gradient
//! `G = dL/dY`:
//!
//! ```text
//! dL/dU = s * C^T * G * (R X)^T          dL/dA = (alpha/r) * B^T * G * X^T
//! dL/dX = W^T G + s * R^T U^T C^T G      dL/dB = (alpha/r) * G * (A X)^T
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::hash_matrix;
use crate::matrix::DenseMatrix;
use crate::skeleton::{select_with, SelectionStrategy, SkeletonIndices};

/// Standard deviation of the Gaussian initialization of LoRA's `A` factor.
const LORA_INIT_STD: f64 = 0.02;

/// Frozen-skeleton adapter: `W + s * C * U * R` with only `U` trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct PmssAdapter {
    w_base: DenseMatrix,
    skel: SkeletonIndices,
    c_mat: DenseMatrix,
    r_mat: DenseMatrix,
    u_mat: DenseMatrix,
    alpha: f64,
}

/// Gradients of a PMSS forward pass.
pub struct PmssGrads {
    /// `c x r` gradient of the trainable core.
    pub d_u: DenseMatrix,
    /// `n x batch` gradient with respect to the input.
    pub d_x: DenseMatrix,
}

impl PmssAdapter {
    /// Selects a skeleton with the given strategy and wraps `w_base` with a
    /// zero-initialized core. `seed` feeds the stochastic strategies and is
    /// ignored by `pmss`.
    pub fn init(
        w_base: DenseMatrix,
        strategy: SelectionStrategy,
        c: usize,
        r: usize,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        let skel = select_with(&w_base, strategy, c, r, seed)?;
        let u_mat = DenseMatrix::zeros(c, r);
        Self::from_parts(w_base, skel, u_mat, alpha)
    }

    /// Assembles an adapter from an existing skeleton and core,
    /// rematerializing `C` and `R` from the base matrix.
    pub fn from_parts(
        w_base: DenseMatrix,
        skel: SkeletonIndices,
        u_mat: DenseMatrix,
        alpha: f64,
    ) -> Result<Self> {
        if skel.source_shape != w_base.shape() {
            return Err(Error::Parameter(format!(
                "skeleton comes from a {}x{} matrix, base is {}x{}",
                skel.source_shape.0,
                skel.source_shape.1,
                w_base.rows(),
                w_base.cols()
            )));
        }
        if u_mat.shape() != (skel.c(), skel.r()) {
            return Err(Error::Parameter(format!(
                "core must be {}x{}, got {}x{}",
                skel.c(),
                skel.r(),
                u_mat.rows(),
                u_mat.cols()
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
        }
        let c_mat = w_base.select_columns(&skel.cols_zero_based())?;
        let r_mat = w_base.select_rows(&skel.rows_zero_based())?;
        Ok(Self { w_base, skel, c_mat, r_mat, u_mat, alpha })
    }

    /// Update scale `s = alpha / max(c, r)`.
    pub fn scale(&self) -> f64 {
        self.alpha / self.skel.c().max(self.skel.r()) as f64
    }

    pub fn w_base(&self) -> &DenseMatrix {
        &self.w_base
    }

    pub fn skel(&self) -> &SkeletonIndices {
        &self.skel
    }

    pub fn c_mat(&self) -> &DenseMatrix {
        &self.c_mat
    }

    pub fn r_mat(&self) -> &DenseMatrix {
        &self.r_mat
    }

    pub fn u_mat(&self) -> &DenseMatrix {
        &self.u_mat
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w_base.shape()
    }

    /// Number of trainable entries (`c * r`).
    pub fn trainable_params(&self) -> usize {
        self.skel.c() * self.skel.r()
    }

    /// Replaces the trainable core. The only mutable piece of the adapter;
    /// base and skeleton matrices stay frozen by construction.
    pub fn set_u(&mut self, u_mat: DenseMatrix) -> Result<()> {
        if u_mat.shape() != self.u_mat.shape() {
            return Err(Error::Parameter(format!(
                "core must be {}x{}, got {}x{}",
                self.u_mat.rows(),
                self.u_mat.cols(),
                u_mat.rows(),
                u_mat.cols()
            )));
        }
        self.u_mat = u_mat;
        Ok(())
    }

    /// `y = W x + s * C (U (R x))` for a batch of column vectors. The update
    /// is applied factor-by-factor; the `m x n` update matrix never exists.
    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() != self.w_base.cols() {
            return Err(Error::Parameter(format!(
                "input has {} rows, expected {}",
                x.rows(),
                self.w_base.cols()
            )));
        }
        let rx = self.r_mat.matmul(x);
        let urx = self.u_mat.matmul(&rx);
        let curx = self.c_mat.matmul(&urx).scale(self.scale());
        Ok(self.w_base.matmul(x).add(&curx))
    }

    /// Exact gradients for upstream `d_y = dL/dy`; contributions are summed
    /// over the batch.
    pub fn backward(&self, x: &DenseMatrix, d_y: &DenseMatrix) -> Result<PmssGrads> {
        let (m, n) = self.w_base.shape();
        if x.rows() != n || d_y.rows() != m || x.cols() != d_y.cols() {
            return Err(Error::Parameter(format!(
                "backward shapes: x is {}x{}, d_y is {}x{}, base is {m}x{n}",
                x.rows(),
                x.cols(),
                d_y.rows(),
                d_y.cols()
            )));
        }
        let s = self.scale();
        let ct_dy = self.c_mat.transpose().matmul(d_y);
        let rx = self.r_mat.matmul(x);
        let d_u = ct_dy.matmul(&rx.transpose()).scale(s);
        let d_x = self
            .w_base
            .transpose()
            .matmul(d_y)
            .add(&self.r_mat.transpose().matmul(&self.u_mat.transpose().matmul(&ct_dy)).scale(s));
        Ok(PmssGrads { d_u, d_x })
    }

    /// The materialized update `s * C * U * R` (`m x n`).
    pub fn delta(&self) -> DenseMatrix {
        if self.u_mat.max_abs() == 0.0 {
            return DenseMatrix::zeros(self.w_base.rows(), self.w_base.cols());
        }
        self.c_mat.matmul(&self.u_mat).matmul(&self.r_mat).scale(self.scale())
    }

    /// Merged weights `W + s * C * U * R`. A zero core returns the base
    /// matrix untouched.
    pub fn merge(&self) -> DenseMatrix {
        if self.u_mat.max_abs() == 0.0 {
            return self.w_base.clone();
        }
        self.w_base.add(&self.delta())
    }
}

/// Low-rank baseline adapter: `W + (alpha/r) * B * A` with `A` (`r x n`)
/// and `B` (`m x r`) trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    w_base: DenseMatrix,
    a_mat: DenseMatrix,
    b_mat: DenseMatrix,
    alpha: f64,
    seed: u64,
}

/// Gradients of a LoRA forward pass.
pub struct LoraGrads {
    /// `r x n` gradient of the down-projection.
    pub d_a: DenseMatrix,
    /// `m x r` gradient of the up-projection.
    pub d_b: DenseMatrix,
    /// `n x batch` gradient with respect to the input.
    pub d_x: DenseMatrix,
}

impl LoraAdapter {
    /// Wraps `w_base` with rank-`r` factors: `A ~ N(0, 0.02^2)` seeded,
    /// `B = 0`, so the fresh adapter computes the base forward pass.
    pub fn init(w_base: DenseMatrix, rank: usize, alpha: f64, seed: u64) -> Result<Self> {
        let (m, n) = w_base.shape();
        if rank == 0 || rank > m.min(n) {
            return Err(Error::Parameter(format!(
                "lora rank must satisfy 1 <= r <= min(m, n); got {rank} for {m}x{n}"
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a_mat = DenseMatrix::gaussian(rank, n, LORA_INIT_STD, &mut rng);
        let b_mat = DenseMatrix::zeros(m, rank);
        Ok(Self { w_base, a_mat, b_mat, alpha, seed })
    }

    /// Update scale `alpha / r`.
    pub fn scale(&self) -> f64 {
        self.alpha / self.a_mat.rows() as f64
    }

    pub fn w_base(&self) -> &DenseMatrix {
        &self.w_base
    }

    pub fn a_mat(&self) -> &DenseMatrix {
        &self.a_mat
    }

    pub fn b_mat(&self) -> &DenseMatrix {
        &self.b_mat
    }

    pub fn rank(&self) -> usize {
        self.a_mat.rows()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w_base.shape()
    }

    /// Number of trainable entries (`(m + n) * r`).
    pub fn trainable_params(&self) -> usize {
        let (m, n) = self.w_base.shape();
        (m + n) * self.rank()
    }

    pub fn set_a(&mut self, a_mat: DenseMatrix) -> Result<()> {
        if a_mat.shape() != self.a_mat.shape() {
            return Err(Error::Parameter("a factor shape mismatch".into()));
        }
        self.a_mat = a_mat;
        Ok(())
    }

    pub fn set_b(&mut self, b_mat: DenseMatrix) -> Result<()> {
        if b_mat.shape() != self.b_mat.shape() {
            return Err(Error::Parameter("b factor shape mismatch".into()));
        }
        self.b_mat = b_mat;
        Ok(())
    }

    /// `y = W x + (alpha/r) * B (A x)`.
    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() != self.w_base.cols() {
            return Err(Error::Parameter(format!(
                "input has {} rows, expected {}",
                x.rows(),
                self.w_base.cols()
            )));
        }
        let ax = self.a_mat.matmul(x);
        let bax = self.b_mat.matmul(&ax).scale(self.scale());
        Ok(self.w_base.matmul(x).add(&bax))
    }

    /// Exact gradients for upstream `d_y`; contributions are summed over the
    /// batch.
    pub fn backward(&self, x: &DenseMatrix, d_y: &DenseMatrix) -> Result<LoraGrads> {
        let (m, n) = self.w_base.shape();
        if x.rows() != n || d_y.rows() != m || x.cols() != d_y.cols() {
            return Err(Error::Parameter(format!(
                "backward shapes: x is {}x{}, d_y is {}x{}, base is {m}x{n}",
                x.rows(),
                x.cols(),
                d_y.rows(),
                d_y.cols()
            )));
        }
        let s = self.scale();
        let bt_dy = self.b_mat.transpose().matmul(d_y);
        let d_a = bt_dy.matmul(&x.transpose()).scale(s);
        let d_b = d_y.matmul(&self.a_mat.matmul(x).transpose()).scale(s);
        let d_x = self
            .w_base
            .transpose()
            .matmul(d_y)
            .add(&self.a_mat.transpose().matmul(&bt_dy).scale(s));
        Ok(LoraGrads { d_a, d_b, d_x })
    }

    /// The materialized update `(alpha/r) * B * A`.
    pub fn delta(&self) -> DenseMatrix {
        if self.b_mat.max_abs() == 0.0 {
            return DenseMatrix::zeros(self.w_base.rows(), self.w_base.cols());
        }
        self.b_mat.matmul(&self.a_mat).scale(self.scale())
    }

    /// Merged weights `W + (alpha/r) * B * A`.
    pub fn merge(&self) -> DenseMatrix {
        if self.b_mat.max_abs() == 0.0 {
            return self.w_base.clone();
        }
        self.w_base.add(&self.delta())
    }
}

/// Portable state of a [`PmssAdapter`]: dimensions, scale, skeleton index
/// vectors and the trained core. The base matrix itself is referenced by a
/// SHA-256 content hash rather than stored, so loading requires the caller
/// to supply the same base weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub m: u64,
    pub n: u64,
    pub c: u64,
    pub r: u64,
    pub alpha: f64,
    /// SHA-256 of the base matrix in its binary serialization.
    pub w_hash: [u8; 32],
    /// Column indices `J`, 1-based.
    pub col_indices: Vec<u64>,
    /// Row indices `K`, 1-based.
    pub row_indices: Vec<u64>,
    /// Core entries, row-major `c x r`.
    pub u_data: Vec<f64>,
}

impl Checkpoint {
    pub fn from_adapter(adapter: &PmssAdapter) -> Self {
        let (m, n) = adapter.shape();
        Self {
            m: m as u64,
            n: n as u64,
            c: adapter.skel.c() as u64,
            r: adapter.skel.r() as u64,
            alpha: adapter.alpha,
            w_hash: hash_matrix(&adapter.w_base),
            col_indices: adapter.skel.col_indices.iter().map(|&j| j as u64).collect(),
            row_indices: adapter.skel.row_indices.iter().map(|&i| i as u64).collect(),
            u_data: adapter.u_mat.data().to_vec(),
        }
    }

    /// Rebuilds an adapter on the provided base matrix, verifying the
    /// content hash and dimensions. The checkpoint does not record how the
    /// skeleton was selected, so the caller supplies the provenance.
    pub fn into_adapter(
        self,
        w_base: DenseMatrix,
        strategy: SelectionStrategy,
        seed: Option<u64>,
    ) -> Result<PmssAdapter> {
        if w_base.shape() != (self.m as usize, self.n as usize) {
            return Err(Error::Format(format!(
                "checkpoint was trained on a {}x{} base, got {}x{}",
                self.m,
                self.n,
                w_base.rows(),
                w_base.cols()
            )));
        }
        if hash_matrix(&w_base) != self.w_hash {
            return Err(Error::Format(
                "base matrix content hash does not match the checkpoint".into(),
            ));
        }
        let skel = SkeletonIndices::new(
            self.col_indices.iter().map(|&j| j as usize).collect(),
            self.row_indices.iter().map(|&i| i as usize).collect(),
            strategy,
            w_base.shape(),
            seed,
        )?;
        let u_mat = DenseMatrix::new(self.c as usize, self.r as usize, self.u_data)?;
        PmssAdapter::from_parts(w_base, skel, u_mat, self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::svd;
    use crate::skeleton::select_pmss;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(m: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::gaussian(m, n, 1.0, &mut rng)
    }

    fn rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.sub(b).frobenius_norm() / b.frobenius_norm().max(1e-300)
    }

    #[test]
    fn fresh_adapter_is_the_base_forward_pass() {
        let w = random_matrix(8, 8, 1);
        let adapter = PmssAdapter::init(w.clone(), SelectionStrategy::Pmss, 4, 2, 4.0, 0).unwrap();
        let x = random_matrix(8, 3, 2);
        let y = adapter.forward(&x).unwrap();
        assert_eq!(y.data(), w.matmul(&x).data(), "zero core must be exact");
    }

    #[test]
    fn scale_is_alpha_over_max_dimension() {
        let w = random_matrix(10, 10, 3);
        let adapter = PmssAdapter::init(w, SelectionStrategy::Pmss, 8, 4, 16.0, 0).unwrap();
        assert_eq!(adapter.scale(), 2.0);
    }

    #[test]
    fn init_delegates_to_skeleton_selection() {
        let w = random_matrix(9, 9, 4);
        let adapter = PmssAdapter::init(w.clone(), SelectionStrategy::Pmss, 5, 3, 5.0, 0).unwrap();
        assert_eq!(*adapter.skel(), select_pmss(&w, 5, 3).unwrap());
        assert_eq!(adapter.c_mat().shape(), (9, 5));
        assert_eq!(adapter.r_mat().shape(), (3, 9));
        assert_eq!(adapter.u_mat().max_abs(), 0.0);
    }

    #[test]
    fn init_validates_counts_per_strategy() {
        let w = random_matrix(4, 6, 5);
        // pmss bounds c by min(m, n); random only by n.
        assert!(PmssAdapter::init(w.clone(), SelectionStrategy::Pmss, 5, 2, 1.0, 0).is_err());
        assert!(PmssAdapter::init(w.clone(), SelectionStrategy::Random, 5, 2, 1.0, 0).is_ok());
        assert!(PmssAdapter::init(w.clone(), SelectionStrategy::Random, 7, 2, 1.0, 0).is_err());
        assert!(PmssAdapter::init(w, SelectionStrategy::Pmss, 3, 2, 0.0, 0).is_err());
    }

    #[test]
    fn forward_matches_dense_update_oracle() {
        let w = random_matrix(7, 6, 6);
        let mut adapter =
            PmssAdapter::init(w.clone(), SelectionStrategy::Pmss, 3, 2, 3.0, 0).unwrap();
        adapter.set_u(random_matrix(3, 2, 7)).unwrap();
        let x = random_matrix(6, 4, 8);
        let dense = w.add(
            &adapter
                .c_mat()
                .matmul(adapter.u_mat())
                .matmul(adapter.r_mat())
                .scale(adapter.scale()),
        );
        let y = adapter.forward(&x).unwrap();
        assert!(rel_diff(&y, &dense.matmul(&x)) <= 1e-13);
    }

    #[test]
    fn backward_core_gradient_matches_finite_differences() {
        let w = random_matrix(3, 3, 9);
        let mut adapter =
            PmssAdapter::init(w.clone(), SelectionStrategy::Pmss, 2, 2, 2.0, 0).unwrap();
        adapter.set_u(random_matrix(2, 2, 10).scale(0.1)).unwrap();
        let x = random_matrix(3, 1, 11);
        let t = random_matrix(3, 1, 12);

        // L = 0.5 * ||y - t||^2 for a single sample.
        let loss = |ad: &PmssAdapter| {
            let y = ad.forward(&x).unwrap();
            0.5 * y.sub(&t).frobenius_norm().powi(2)
        };
        let y = adapter.forward(&x).unwrap();
        let d_y = y.sub(&t);
        let grads = adapter.backward(&x, &d_y).unwrap();

        let eps = 1e-6;
        for i in 0..2 {
            for j in 0..2 {
                let mut plus = adapter.clone();
                let mut minus = adapter.clone();
                let mut up = adapter.u_mat().clone();
                up.set(i, j, up.get(i, j) + eps);
                plus.set_u(up).unwrap();
                let mut um = adapter.u_mat().clone();
                um.set(i, j, um.get(i, j) - eps);
                minus.set_u(um).unwrap();
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let analytic = grads.d_u.get(i, j);
                let denom = numeric.abs().max(analytic.abs()).max(1.0);
                assert!(
                    ((numeric - analytic) / denom).abs() <= 1e-6,
                    "d_u({i},{j}): numeric {numeric} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn backward_input_gradient_matches_finite_differences() {
        let w = random_matrix(4, 4, 13);
        let mut adapter =
            PmssAdapter::init(w.clone(), SelectionStrategy::Pmss, 2, 2, 2.0, 0).unwrap();
        adapter.set_u(random_matrix(2, 2, 14).scale(0.2)).unwrap();
        let x = random_matrix(4, 1, 15);
        let t = random_matrix(4, 1, 16);
        let loss = |input: &DenseMatrix| {
            let y = adapter.forward(input).unwrap();
            0.5 * y.sub(&t).frobenius_norm().powi(2)
        };
        let y = adapter.forward(&x).unwrap();
        let grads = adapter.backward(&x, &y.sub(&t)).unwrap();
        let eps = 1e-6;
        for i in 0..4 {
            let mut plus = x.clone();
            plus.set(i, 0, x.get(i, 0) + eps);
            let mut minus = x.clone();
            minus.set(i, 0, x.get(i, 0) - eps);
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let analytic = grads.d_x.get(i, 0);
            let denom = numeric.abs().max(analytic.abs()).max(1.0);
            assert!(
                ((numeric - analytic) / denom).abs() <= 1e-6,
                "d_x({i}): numeric {numeric} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn backward_is_linear_in_the_upstream_gradient() {
        let w = random_matrix(5, 5, 17);
        let mut adapter = PmssAdapter::init(w, SelectionStrategy::Pmss, 3, 2, 3.0, 0).unwrap();
        adapter.set_u(random_matrix(3, 2, 18)).unwrap();
        let x = random_matrix(5, 2, 19);
        let g1 = random_matrix(5, 2, 20);
        let g2 = random_matrix(5, 2, 21);
        let combined = adapter.backward(&x, &g1.add(&g2)).unwrap();
        let split =
            adapter.backward(&x, &g1).unwrap().d_u.add(&adapter.backward(&x, &g2).unwrap().d_u);
        assert!(rel_diff(&combined.d_u, &split) <= 1e-12);
    }

    #[test]
    fn merge_with_zero_core_is_bit_exact() {
        let w = random_matrix(6, 5, 22);
        let adapter = PmssAdapter::init(w.clone(), SelectionStrategy::Pmss, 3, 3, 3.0, 0).unwrap();
        assert_eq!(adapter.merge(), w);
    }

    #[test]
    fn merged_weights_reproduce_adapter_forward() {
        let w = random_matrix(6, 6, 23);
        let mut adapter = PmssAdapter::init(w, SelectionStrategy::Pmss, 3, 3, 6.0, 0).unwrap();
        adapter.set_u(random_matrix(3, 3, 24)).unwrap();
        let x = random_matrix(6, 3, 25);
        let via_adapter = adapter.forward(&x).unwrap();
        let via_merged = adapter.merge().matmul(&x);
        assert!(rel_diff(&via_merged, &via_adapter) <= 1e-13);
    }

    #[test]
    fn update_rank_is_bounded_by_the_core() {
        let w = random_matrix(12, 12, 26);
        let mut adapter = PmssAdapter::init(w, SelectionStrategy::Pmss, 5, 3, 5.0, 0).unwrap();
        adapter.set_u(random_matrix(5, 3, 27)).unwrap();
        let delta = adapter.delta();
        let s = svd(&delta).unwrap();
        for (i, sigma) in s.sigma.iter().enumerate().skip(3) {
            assert!(*sigma <= 1e-10 * s.sigma[0], "sigma[{i}] = {sigma}");
        }
    }

    #[test]
    fn lora_fresh_adapter_is_base_and_has_zero_a_gradient() {
        let w = random_matrix(6, 6, 28);
        let adapter = LoraAdapter::init(w.clone(), 2, 2.0, 0).unwrap();
        let x = random_matrix(6, 2, 29);
        let y = adapter.forward(&x).unwrap();
        assert_eq!(y.data(), w.matmul(&x).data());
        let d_y = random_matrix(6, 2, 30);
        let grads = adapter.backward(&x, &d_y).unwrap();
        assert_eq!(grads.d_a.max_abs(), 0.0, "b = 0 blocks the a gradient");
        assert!(grads.d_b.max_abs() > 0.0, "b gradient must flow");
    }

    #[test]
    fn lora_b_gradient_matches_finite_differences() {
        let w = random_matrix(3, 3, 31);
        let mut adapter = LoraAdapter::init(w, 2, 2.0, 1).unwrap();
        adapter.set_b(random_matrix(3, 2, 32).scale(0.1)).unwrap();
        let x = random_matrix(3, 1, 33);
        let t = random_matrix(3, 1, 34);
        let loss = |ad: &LoraAdapter| {
            let y = ad.forward(&x).unwrap();
            0.5 * y.sub(&t).frobenius_norm().powi(2)
        };
        let y = adapter.forward(&x).unwrap();
        let grads = adapter.backward(&x, &y.sub(&t)).unwrap();
        let eps = 1e-6;
        for i in 0..3 {
            for j in 0..2 {
                let mut plus = adapter.clone();
                let mut bp = adapter.b_mat().clone();
                bp.set(i, j, bp.get(i, j) + eps);
                plus.set_b(bp).unwrap();
                let mut minus = adapter.clone();
                let mut bm = adapter.b_mat().clone();
                bm.set(i, j, bm.get(i, j) - eps);
                minus.set_b(bm).unwrap();
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let analytic = grads.d_b.get(i, j);
                let denom = numeric.abs().max(analytic.abs()).max(1.0);
                assert!(
                    ((numeric - analytic) / denom).abs() <= 1e-6,
                    "d_b({i},{j}): numeric {numeric} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn lora_merge_matches_forward() {
        let w = random_matrix(5, 4, 35);
        let mut adapter = LoraAdapter::init(w, 2, 4.0, 2).unwrap();
        adapter.set_b(random_matrix(5, 2, 36)).unwrap();
        let x = random_matrix(4, 3, 37);
        assert!(rel_diff(&adapter.merge().matmul(&x), &adapter.forward(&x).unwrap()) <= 1e-13);
    }

    #[test]
    fn lora_init_is_seed_deterministic() {
        let w = random_matrix(4, 4, 38);
        let a = LoraAdapter::init(w.clone(), 2, 2.0, 9).unwrap();
        let b = LoraAdapter::init(w, 2, 2.0, 9).unwrap();
        assert_eq!(a.a_mat(), b.a_mat());
    }

    #[test]
    fn trainable_budget_example_matches_hand_count() {
        let w = random_matrix(64, 64, 39);
        let lora = LoraAdapter::init(w.clone(), 4, 4.0, 0).unwrap();
        assert_eq!(lora.trainable_params(), 512);
        let pmss = PmssAdapter::init(w, SelectionStrategy::Pmss, 22, 22, 22.0, 0).unwrap();
        assert_eq!(pmss.trainable_params(), 484);
    }

    #[test]
    fn checkpoint_round_trips_through_the_struct() {
        let w = random_matrix(8, 7, 40);
        let mut adapter =
            PmssAdapter::init(w.clone(), SelectionStrategy::Pmss, 4, 3, 4.0, 0).unwrap();
        adapter.set_u(random_matrix(4, 3, 41)).unwrap();
        let ckpt = Checkpoint::from_adapter(&adapter);
        let restored = ckpt.into_adapter(w, SelectionStrategy::Pmss, None).unwrap();
        assert_eq!(restored, adapter);
    }

    #[test]
    fn checkpoint_rejects_a_different_base() {
        let w = random_matrix(6, 6, 42);
        let adapter = PmssAdapter::init(w, SelectionStrategy::Pmss, 3, 3, 3.0, 0).unwrap();
        let ckpt = Checkpoint::from_adapter(&adapter);
        let other = random_matrix(6, 6, 43);
        let err = ckpt.into_adapter(other, SelectionStrategy::Pmss, None).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "got {err}");
    }
}
