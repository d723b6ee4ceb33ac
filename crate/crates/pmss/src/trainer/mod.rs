//! Desk-scale training harness.
//!
//! Provides synthetic teacher-student regression tasks, SGD and AdamW over
//! the adapter's trainable parameters only, and the diagnostics that make
//! the adapter structure visible: the plain-SGD trajectory identity, the
//! subspace residuals of the merged update, its effective rank, and a
//! finite-difference gradient audit. A two-layer tanh variant lives in
//! [`mlp`].
//!
//! The objective throughout is half mean-squared error averaged over the
//! batch, `L = ‖Y − T‖_F² / (2b)`, so the full-space gradient is simply
//! `(Y − T)·Xᵀ / b`.

pub mod mlp;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adapter::{LoraAdapter, PmssAdapter};
use crate::error::{Error, Result};
use crate::linalg::{least_squares_multi, svd};
use crate::matrix::DenseMatrix;

/// First-moment decay of AdamW.
pub const ADAM_BETA1: f64 = 0.9;
/// Second-moment decay of AdamW.
pub const ADAM_BETA2: f64 = 0.999;
/// Denominator stabilizer of AdamW.
pub const ADAM_EPS: f64 = 1e-8;
/// Default relative singular-value cutoff of [`effective_rank`].
pub const EFFECTIVE_RANK_TOL: f64 = 1e-8;
/// `finite_diff_check` perturbs every trainable entry; refuse adapters
/// with more than this many.
pub const FINITE_DIFF_MAX_ENTRIES: usize = 64;
/// Batch size used by the finite-difference audit.
const FINITE_DIFF_BATCH: usize = 4;
/// Guard used when dividing by norms that may be exactly zero.
const NORM_GUARD: f64 = 1e-300;

/// Update rule applied to the trainable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    AdamW,
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Optimizer::Sgd => write!(f, "sgd"),
            Optimizer::AdamW => write!(f, "adamw"),
        }
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adamw" => Ok(Optimizer::AdamW),
            other => Err(Error::Parameter(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Learning-rate schedule over the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    /// `η_t = η` for every step.
    Constant,
    /// `η_t = η·(T − t)/T`, decaying linearly toward zero.
    Linear,
}

impl fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LrSchedule::Constant => write!(f, "constant"),
            LrSchedule::Linear => write!(f, "linear"),
        }
    }
}

impl FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LrSchedule::Constant),
            "linear" => Ok(LrSchedule::Linear),
            other => Err(Error::Parameter(format!("unknown learning-rate schedule '{other}'"))),
        }
    }
}

/// Whether each step draws a new batch or reuses the first one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchMode {
    Fresh,
    Fixed,
}

impl fmt::Display for BatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchMode::Fresh => write!(f, "fresh"),
            BatchMode::Fixed => write!(f, "fixed"),
        }
    }
}

impl FromStr for BatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fresh" => Ok(BatchMode::Fresh),
            "fixed" => Ok(BatchMode::Fixed),
            other => Err(Error::Parameter(format!("unknown batch mode '{other}'"))),
        }
    }
}

/// Hyperparameters of one training run. AdamW moments use the fixed
/// constants [`ADAM_BETA1`], [`ADAM_BETA2`] and [`ADAM_EPS`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
    pub batch_mode: BatchMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 1e-2,
            steps: 100,
            batch_size: 32,
            weight_decay: 0.0,
            lr_schedule: LrSchedule::Constant,
            batch_mode: BatchMode::Fresh,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Parameter("learning rate must be finite and nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be positive".into()));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::Parameter("weight decay must be finite and nonnegative".into()));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Linear => {
                if self.steps == 0 {
                    self.learning_rate
                } else {
                    self.learning_rate * (self.steps - step) as f64 / self.steps as f64
                }
            }
        }
    }

    /// True when the run is plain SGD: constant rate and no weight decay.
    /// Only such runs satisfy the trajectory identity.
    pub fn is_plain_sgd(&self) -> bool {
        self.optimizer == Optimizer::Sgd
            && self.lr_schedule == LrSchedule::Constant
            && self.weight_decay == 0.0
    }
}

/// A teacher-student linear regression task: inputs are standard normal,
/// targets come from `w_teacher = w_base + delta_true`, optionally with
/// additive Gaussian noise. The student adapts `w_base`, so `delta_true`
/// is exactly the update it is asked to learn.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    w_base: DenseMatrix,
    delta_true: DenseMatrix,
    w_teacher: DenseMatrix,
    noise_std: f64,
    seed: u64,
}

/// Draws a rank-`k` matrix as a product of two seeded Gaussian factors and
/// rescales it to the requested Frobenius norm.
pub(crate) fn rank_k_delta<R: Rng>(
    rows: usize,
    cols: usize,
    k: usize,
    delta_norm: f64,
    rng: &mut R,
) -> DenseMatrix {
    let left = DenseMatrix::gaussian(rows, k, 1.0, rng);
    let right = DenseMatrix::gaussian(k, cols, 1.0, rng);
    let raw = left.matmul(&right);
    let norm = raw.frobenius_norm();
    debug_assert!(norm > 0.0, "gaussian factor product collapsed to zero");
    raw.scale(delta_norm / norm)
}

fn check_task_scalars(k_true: usize, limit: usize, delta_norm: f64) -> Result<()> {
    if k_true == 0 || k_true > limit {
        return Err(Error::Parameter(format!(
            "delta rank must satisfy 1 <= k <= {limit}, got {k_true}"
        )));
    }
    if delta_norm <= 0.0 || !delta_norm.is_finite() {
        return Err(Error::Parameter("delta norm must be finite and positive".into()));
    }
    Ok(())
}

impl SyntheticTask {
    /// Generates base and delta from one seeded stream. The base entries
    /// have standard deviation `1/√n` so that outputs stay O(1) under
    /// standard-normal inputs.
    pub fn generate(
        m: usize,
        n: usize,
        k_true: usize,
        delta_norm: f64,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Parameter("task dimensions must be positive".into()));
        }
        check_task_scalars(k_true, m.min(n), delta_norm)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_base = DenseMatrix::gaussian(m, n, 1.0 / (n as f64).sqrt(), &mut rng);
        let delta_true = rank_k_delta(m, n, k_true, delta_norm, &mut rng);
        Self::from_delta(w_base, delta_true, noise_std, seed)
    }

    /// Like [`SyntheticTask::generate`] but adapts a caller-supplied base.
    pub fn with_base(
        w_base: DenseMatrix,
        k_true: usize,
        delta_norm: f64,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        let (m, n) = w_base.shape();
        check_task_scalars(k_true, m.min(n), delta_norm)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let delta_true = rank_k_delta(m, n, k_true, delta_norm, &mut rng);
        Self::from_delta(w_base, delta_true, noise_std, seed)
    }

    /// Builds a task around an explicit true update. No rank or norm is
    /// imposed on `delta_true`.
    pub fn from_delta(
        w_base: DenseMatrix,
        delta_true: DenseMatrix,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if w_base.shape() != delta_true.shape() {
            return Err(Error::Parameter(format!(
                "base is {}x{} but delta is {}x{}",
                w_base.rows(),
                w_base.cols(),
                delta_true.rows(),
                delta_true.cols()
            )));
        }
        if noise_std < 0.0 || !noise_std.is_finite() {
            return Err(Error::Parameter("noise level must be finite and nonnegative".into()));
        }
        let w_teacher = w_base.add(&delta_true);
        Ok(SyntheticTask { w_base, delta_true, w_teacher, noise_std, seed })
    }

    /// Draws a batch: `x` is `n x b` standard normal, `t = w_teacher·x`
    /// plus noise when `noise_std > 0`.
    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> (DenseMatrix, DenseMatrix) {
        assert!(batch_size > 0, "batch size must be positive");
        let x = DenseMatrix::gaussian(self.w_base.cols(), batch_size, 1.0, rng);
        let mut t = self.w_teacher.matmul(&x);
        if self.noise_std > 0.0 {
            t = t.add(&DenseMatrix::gaussian(t.rows(), t.cols(), self.noise_std, rng));
        }
        (x, t)
    }

    pub fn w_base(&self) -> &DenseMatrix {
        &self.w_base
    }

    pub fn delta_true(&self) -> &DenseMatrix {
        &self.delta_true
    }

    pub fn w_teacher(&self) -> &DenseMatrix {
        &self.w_teacher
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `(m, n)` of the adapted matrix.
    pub fn shape(&self) -> (usize, usize) {
        self.w_base.shape()
    }
}

/// Either adapter family behind one training interface.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainableAdapter {
    Pmss(PmssAdapter),
    Lora(LoraAdapter),
}

impl TrainableAdapter {
    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            TrainableAdapter::Pmss(a) => a.forward(x),
            TrainableAdapter::Lora(a) => a.forward(x),
        }
    }

    pub fn delta(&self) -> DenseMatrix {
        match self {
            TrainableAdapter::Pmss(a) => a.delta(),
            TrainableAdapter::Lora(a) => a.delta(),
        }
    }

    pub fn merge(&self) -> DenseMatrix {
        match self {
            TrainableAdapter::Pmss(a) => a.merge(),
            TrainableAdapter::Lora(a) => a.merge(),
        }
    }

    pub fn w_base(&self) -> &DenseMatrix {
        match self {
            TrainableAdapter::Pmss(a) => a.w_base(),
            TrainableAdapter::Lora(a) => a.w_base(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            TrainableAdapter::Pmss(a) => a.shape(),
            TrainableAdapter::Lora(a) => a.shape(),
        }
    }

    pub fn trainable_params(&self) -> usize {
        match self {
            TrainableAdapter::Pmss(a) => a.trainable_params(),
            TrainableAdapter::Lora(a) => a.trainable_params(),
        }
    }

    pub fn as_pmss(&self) -> Option<&PmssAdapter> {
        match self {
            TrainableAdapter::Pmss(a) => Some(a),
            TrainableAdapter::Lora(_) => None,
        }
    }

    pub fn as_lora(&self) -> Option<&LoraAdapter> {
        match self {
            TrainableAdapter::Lora(a) => Some(a),
            TrainableAdapter::Pmss(_) => None,
        }
    }

    /// Snapshot of the trainable matrices, in update order (`[U]` for the
    /// skeleton adapter, `[A, B]` for LoRA).
    fn trainable(&self) -> Vec<DenseMatrix> {
        match self {
            TrainableAdapter::Pmss(a) => vec![a.u_mat().clone()],
            TrainableAdapter::Lora(a) => vec![a.a_mat().clone(), a.b_mat().clone()],
        }
    }

    /// Loss gradients of the trainable matrices, aligned with
    /// [`TrainableAdapter::trainable`].
    fn gradients(&self, x: &DenseMatrix, d_y: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
        match self {
            TrainableAdapter::Pmss(a) => Ok(vec![a.backward(x, d_y)?.d_u]),
            TrainableAdapter::Lora(a) => {
                let grads = a.backward(x, d_y)?;
                Ok(vec![grads.d_a, grads.d_b])
            }
        }
    }

    fn install(&mut self, params: Vec<DenseMatrix>) -> Result<()> {
        let mut params = params.into_iter();
        match self {
            TrainableAdapter::Pmss(a) => {
                a.set_u(params.next().expect("skeleton adapter trains one matrix"))
            }
            TrainableAdapter::Lora(a) => {
                a.set_a(params.next().expect("lora trains two matrices"))?;
                a.set_b(params.next().expect("lora trains two matrices"))
            }
        }
    }
}

/// Internal optimizer state; AdamW moments exist only for the trainable
/// matrices, mirroring their shapes.
enum OptimizerState {
    Sgd,
    AdamW { first: Vec<DenseMatrix>, second: Vec<DenseMatrix>, t: u32 },
}

impl OptimizerState {
    fn new(optimizer: Optimizer, adapter: &TrainableAdapter) -> Self {
        match optimizer {
            Optimizer::Sgd => OptimizerState::Sgd,
            Optimizer::AdamW => {
                let zeros: Vec<DenseMatrix> = adapter
                    .trainable()
                    .iter()
                    .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
                    .collect();
                OptimizerState::AdamW { first: zeros.clone(), second: zeros, t: 0 }
            }
        }
    }

    fn step(
        &mut self,
        params: &mut [DenseMatrix],
        grads: &[DenseMatrix],
        lr: f64,
        weight_decay: f64,
    ) {
        match self {
            OptimizerState::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= lr * (gv + weight_decay * *pv);
                    }
                }
            }
            OptimizerState::AdamW { first, second, t } => {
                *t += 1;
                let correct1 = 1.0 - ADAM_BETA1.powi(*t as i32);
                let correct2 = 1.0 - ADAM_BETA2.powi(*t as i32);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let moment1 = first[i].data_mut();
                    let moment2 = second[i].data_mut();
                    for ((pv, gv), (m1, m2)) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(moment1.iter_mut().zip(moment2.iter_mut()))
                    {
                        *m1 = ADAM_BETA1 * *m1 + (1.0 - ADAM_BETA1) * gv;
                        *m2 = ADAM_BETA2 * *m2 + (1.0 - ADAM_BETA2) * gv * gv;
                        let m_hat = *m1 / correct1;
                        let v_hat = *m2 / correct2;
                        *pv -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + weight_decay * *pv);
                    }
                }
            }
        }
    }
}

/// Relative parts of the merged update outside the adapter's column and
/// row subspaces. Both should be at rounding level for a skeleton adapter,
/// whose update cannot leave `span(C) x span(R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubspaceResiduals {
    pub column: f64,
    pub row: f64,
}

/// Outcome of a run: the loss trajectory plus structural diagnostics. The
/// accumulated full-space gradient `m_t_accum` and the merged update
/// `delta_w` are excluded from JSON and are written as sidecar matrix
/// files by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub task_seed: u64,
    pub loss_history: Vec<f64>,
    pub effective_rank: usize,
    pub subspace_residuals: Option<SubspaceResiduals>,
    pub identity_residual: Option<f64>,
    #[serde(skip)]
    pub m_t_accum: DenseMatrix,
    #[serde(skip)]
    pub delta_w: DenseMatrix,
}

/// Runs `config.steps` optimization steps on the adapter's trainable
/// parameters. The base matrix and, for the skeleton adapter, `C` and `R`
/// are never touched. A non-finite loss or parameter update aborts with
/// the offending step index.
pub fn train(
    adapter: &mut TrainableAdapter,
    task: &SyntheticTask,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if adapter.shape() != task.shape() {
        let (am, an) = adapter.shape();
        let (tm, tn) = task.shape();
        return Err(Error::Parameter(format!(
            "adapter is {am}x{an} but the task adapts a {tm}x{tn} matrix"
        )));
    }
    if adapter.w_base() != task.w_base() {
        return Err(Error::Parameter(
            "adapter and task must be built on the same base matrix".into(),
        ));
    }

    let (m, n) = adapter.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fixed = match config.batch_mode {
        BatchMode::Fixed => Some(task.sample(config.batch_size, &mut rng)),
        BatchMode::Fresh => None,
    };
    let mut optimizer = OptimizerState::new(config.optimizer, adapter);
    let mut m_t_accum = DenseMatrix::zeros(m, n);
    let mut loss_history = Vec::with_capacity(config.steps);
    let inv_b = 1.0 / config.batch_size as f64;

    for step in 0..config.steps {
        let drawn;
        let (x, target) = match &fixed {
            Some(pair) => (&pair.0, &pair.1),
            None => {
                drawn = task.sample(config.batch_size, &mut rng);
                (&drawn.0, &drawn.1)
            }
        };
        let y = adapter.forward(x)?;
        let residual = y.sub(target);
        let loss = 0.5 * inv_b * residual.frobenius_norm().powi(2);
        if !loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        loss_history.push(loss);

        let d_y = residual.scale(inv_b);
        // Exact full-space gradient of this step, accumulated before the
        // update so the trajectory identity can be checked afterwards.
        m_t_accum = m_t_accum.add(&d_y.matmul(&x.transpose()));

        let grads = adapter.gradients(x, &d_y)?;
        let mut params = adapter.trainable();
        optimizer.step(&mut params, &grads, config.lr_at(step), config.weight_decay);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { step });
        }
        adapter.install(params)?;
    }

    build_report(adapter, config, task.seed(), loss_history, m_t_accum)
}

/// Assembles the diagnostics shared by the linear and MLP trainers.
fn build_report(
    adapter: &TrainableAdapter,
    config: &TrainConfig,
    task_seed: u64,
    loss_history: Vec<f64>,
    m_t_accum: DenseMatrix,
) -> Result<TrainReport> {
    let delta_w = adapter.delta();
    let effective_rank = effective_rank(&delta_w, None)?;
    let subspace_residuals = match adapter {
        TrainableAdapter::Pmss(a) => Some(subspace_residuals(a, &delta_w)?),
        TrainableAdapter::Lora(_) => None,
    };
    let identity_residual = match adapter {
        TrainableAdapter::Pmss(a) if config.is_plain_sgd() => {
            Some(identity_residual_for(a, &m_t_accum, &delta_w, config.learning_rate))
        }
        _ => None,
    };
    Ok(TrainReport {
        config: config.clone(),
        task_seed,
        loss_history,
        effective_rank,
        subspace_residuals,
        identity_residual,
        m_t_accum,
        delta_w,
    })
}

/// Half mean-squared error of the adapter on one freshly seeded batch.
pub fn evaluate(
    adapter: &TrainableAdapter,
    task: &SyntheticTask,
    batch_size: usize,
    seed: u64,
) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be positive".into()));
    }
    if adapter.shape() != task.shape() {
        return Err(Error::Parameter("adapter and task shapes differ".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, target) = task.sample(batch_size, &mut rng);
    let y = adapter.forward(&x)?;
    Ok(0.5 / batch_size as f64 * y.sub(&target).frobenius_norm().powi(2))
}

/// Residual of the plain-SGD trajectory identity
/// `ΔW = −η·s²·C·Cᵀ·M_T·Rᵀ·R`, relative to `‖ΔW‖_F`. The report must come
/// from a plain-SGD run on a skeleton adapter; `adapter` may be either the
/// initial or the trained one since `C`, `R` and the scale are frozen.
pub fn sgd_identity_check(
    adapter: &PmssAdapter,
    report: &TrainReport,
    learning_rate: f64,
) -> Result<f64> {
    if !report.config.is_plain_sgd() {
        return Err(Error::Contract(
            "the trajectory identity holds only for plain sgd \
             (constant rate, no weight decay)"
                .into(),
        ));
    }
    if report.delta_w.shape() != adapter.shape() {
        return Err(Error::Parameter("report and adapter shapes differ".into()));
    }
    Ok(identity_residual_for(adapter, &report.m_t_accum, &report.delta_w, learning_rate))
}

fn identity_residual_for(
    adapter: &PmssAdapter,
    m_t_accum: &DenseMatrix,
    delta_w: &DenseMatrix,
    learning_rate: f64,
) -> f64 {
    let s = adapter.scale();
    let c_mat = adapter.c_mat();
    let r_mat = adapter.r_mat();
    let core = c_mat.transpose().matmul(m_t_accum).matmul(&r_mat.transpose());
    let predicted = c_mat.matmul(&core).matmul(r_mat).scale(-learning_rate * s * s);
    delta_w.sub(&predicted).frobenius_norm() / delta_w.frobenius_norm().max(NORM_GUARD)
}

/// Relative Frobenius mass of `delta_w` outside `span(C)` (column side)
/// and outside the row space of `R` (row side). Zero update yields zero
/// residuals.
pub fn subspace_residuals(
    adapter: &PmssAdapter,
    delta_w: &DenseMatrix,
) -> Result<SubspaceResiduals> {
    if delta_w.shape() != adapter.shape() {
        return Err(Error::Parameter("update and adapter shapes differ".into()));
    }
    let norm = delta_w.frobenius_norm();
    if norm == 0.0 {
        return Ok(SubspaceResiduals { column: 0.0, row: 0.0 });
    }
    let c_mat = adapter.c_mat();
    let col_coeff = least_squares_multi(c_mat, delta_w)?;
    let column = delta_w.sub(&c_mat.matmul(&col_coeff)).frobenius_norm() / norm;

    let rt = adapter.r_mat().transpose();
    let delta_t = delta_w.transpose();
    let row_coeff = least_squares_multi(&rt, &delta_t)?;
    let row = delta_t.sub(&rt.matmul(&row_coeff)).frobenius_norm() / norm;
    Ok(SubspaceResiduals { column, row })
}

/// Counts singular values at or above `tol_ratio` (default
/// [`EFFECTIVE_RANK_TOL`]) times the largest one; the zero matrix has
/// effective rank zero.
pub fn effective_rank(delta: &DenseMatrix, tol_ratio: Option<f64>) -> Result<usize> {
    let tol = tol_ratio.unwrap_or(EFFECTIVE_RANK_TOL);
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::Parameter("rank tolerance must be finite and positive".into()));
    }
    if delta.max_abs() == 0.0 {
        return Ok(0);
    }
    let decomp = svd(delta)?;
    let top = decomp.sigma[0];
    if top <= 0.0 {
        return Ok(0);
    }
    Ok(decomp.sigma.iter().filter(|&&s| s >= tol * top).count())
}

/// Central-difference audit of the analytic gradients on one batch drawn
/// from the task. Every trainable entry is perturbed, so the adapter must
/// train at most [`FINITE_DIFF_MAX_ENTRIES`] scalars. Returns the worst
/// relative disagreement, with an absolute fallback when both values are
/// below one.
pub fn finite_diff_check(
    adapter: &mut TrainableAdapter,
    task: &SyntheticTask,
    eps: f64,
) -> Result<f64> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::Parameter("finite-difference step must be finite and positive".into()));
    }
    if adapter.trainable_params() > FINITE_DIFF_MAX_ENTRIES {
        return Err(Error::Parameter(format!(
            "finite-difference audit perturbs every trainable entry; \
             {} exceeds the limit of {FINITE_DIFF_MAX_ENTRIES}",
            adapter.trainable_params()
        )));
    }
    if adapter.shape() != task.shape() {
        return Err(Error::Parameter("adapter and task shapes differ".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(task.seed());
    let (x, target) = task.sample(FINITE_DIFF_BATCH, &mut rng);
    let inv_b = 1.0 / FINITE_DIFF_BATCH as f64;

    let y = adapter.forward(&x)?;
    let d_y = y.sub(&target).scale(inv_b);
    let analytic = adapter.gradients(&x, &d_y)?;
    let params = adapter.trainable();

    let mut worst: f64 = 0.0;
    for pi in 0..params.len() {
        for idx in 0..params[pi].data().len() {
            let origin = params[pi].data()[idx];
            let mut probes = [0.0; 2];
            for (slot, offset) in [(0, eps), (1, -eps)] {
                let mut shifted = params.clone();
                shifted[pi].data_mut()[idx] = origin + offset;
                adapter.install(shifted)?;
                let y = adapter.forward(&x)?;
                probes[slot] = 0.5 * inv_b * y.sub(&target).frobenius_norm().powi(2);
            }
            let numeric = (probes[0] - probes[1]) / (2.0 * eps);
            let exact = analytic[pi].data()[idx];
            let denom = numeric.abs().max(exact.abs()).max(1.0);
            worst = worst.max((numeric - exact).abs() / denom);
        }
    }
    adapter.install(params)?;
    Ok(worst)
}
