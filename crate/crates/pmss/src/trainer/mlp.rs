//! Two-layer tanh variant of the trainer: `y = W_out · tanh(W1·x)` where
//! only the first layer carries an adapter and the output layer is frozen
//! and shared between teacher and student. Backpropagation is hand-coded;
//! there is no general autograd.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{build_report, rank_k_delta, OptimizerState, TrainConfig, TrainReport, TrainableAdapter};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

fn tanh_of(z: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_raw(z.rows(), z.cols(), z.data().iter().map(|v| v.tanh()).collect())
}

/// `d_z = d_h ⊙ (1 − h²)`, the tanh backward step.
fn tanh_backprop(d_h: &DenseMatrix, h: &DenseMatrix) -> DenseMatrix {
    let data = d_h.data().iter().zip(h.data()).map(|(d, hv)| d * (1.0 - hv * hv)).collect();
    DenseMatrix::from_raw(d_h.rows(), d_h.cols(), data)
}

/// Teacher-student task for the two-layer network. The teacher computes
/// `t = w_out · tanh((w_base + delta_true)·x)`; the student adapts
/// `w_base` while `w_out` stays frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTask {
    w_base: DenseMatrix,
    delta_true: DenseMatrix,
    w1_teacher: DenseMatrix,
    w_out: DenseMatrix,
    noise_std: f64,
    seed: u64,
}

impl MlpTask {
    /// Generates all teacher weights from one seeded stream. The first
    /// layer is `hidden_dim x in_dim`, the output layer
    /// `out_dim x hidden_dim`; both are scaled to keep activations O(1).
    pub fn generate(
        out_dim: usize,
        hidden_dim: usize,
        in_dim: usize,
        k_true: usize,
        delta_norm: f64,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if out_dim == 0 || hidden_dim == 0 || in_dim == 0 {
            return Err(Error::Parameter("network dimensions must be positive".into()));
        }
        if k_true == 0 || k_true > hidden_dim.min(in_dim) {
            return Err(Error::Parameter(format!(
                "delta rank must satisfy 1 <= k <= {}, got {k_true}",
                hidden_dim.min(in_dim)
            )));
        }
        if delta_norm <= 0.0 || !delta_norm.is_finite() {
            return Err(Error::Parameter("delta norm must be finite and positive".into()));
        }
        if noise_std < 0.0 || !noise_std.is_finite() {
            return Err(Error::Parameter("noise level must be finite and nonnegative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_base = DenseMatrix::gaussian(hidden_dim, in_dim, 1.0 / (in_dim as f64).sqrt(), &mut rng);
        let delta_true = rank_k_delta(hidden_dim, in_dim, k_true, delta_norm, &mut rng);
        let w_out =
            DenseMatrix::gaussian(out_dim, hidden_dim, 1.0 / (hidden_dim as f64).sqrt(), &mut rng);
        Self::from_parts(w_base, delta_true, w_out, noise_std, seed)
    }

    /// Builds a task from explicit teacher weights. No rank or norm is
    /// imposed on `delta_true`.
    pub fn from_parts(
        w_base: DenseMatrix,
        delta_true: DenseMatrix,
        w_out: DenseMatrix,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if w_base.shape() != delta_true.shape() {
            return Err(Error::Parameter(format!(
                "first layer is {}x{} but delta is {}x{}",
                w_base.rows(),
                w_base.cols(),
                delta_true.rows(),
                delta_true.cols()
            )));
        }
        if w_out.cols() != w_base.rows() {
            return Err(Error::Parameter(format!(
                "output layer expects {} hidden units, first layer provides {}",
                w_out.cols(),
                w_base.rows()
            )));
        }
        if noise_std < 0.0 || !noise_std.is_finite() {
            return Err(Error::Parameter("noise level must be finite and nonnegative".into()));
        }
        let w1_teacher = w_base.add(&delta_true);
        Ok(MlpTask { w_base, delta_true, w1_teacher, w_out, noise_std, seed })
    }

    /// Draws a batch: `x` is `in_dim x b` standard normal and the target
    /// comes from the teacher network, plus noise when `noise_std > 0`.
    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> (DenseMatrix, DenseMatrix) {
        assert!(batch_size > 0, "batch size must be positive");
        let x = DenseMatrix::gaussian(self.w_base.cols(), batch_size, 1.0, rng);
        let mut t = self.w_out.matmul(&tanh_of(&self.w1_teacher.matmul(&x)));
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

    pub fn w_out(&self) -> &DenseMatrix {
        &self.w_out
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `(hidden_dim, in_dim)` of the adapted first layer.
    pub fn first_layer_shape(&self) -> (usize, usize) {
        self.w_base.shape()
    }
}

/// Student network: an adapter on the first layer and a frozen output
/// layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    adapter: TrainableAdapter,
    w_out: DenseMatrix,
}

impl MlpModel {
    pub fn new(adapter: TrainableAdapter, w_out: DenseMatrix) -> Result<Self> {
        let (hidden, _) = adapter.shape();
        if w_out.cols() != hidden {
            return Err(Error::Parameter(format!(
                "output layer expects {} hidden units, adapter provides {hidden}",
                w_out.cols()
            )));
        }
        Ok(MlpModel { adapter, w_out })
    }

    pub fn adapter(&self) -> &TrainableAdapter {
        &self.adapter
    }

    pub fn w_out(&self) -> &DenseMatrix {
        &self.w_out
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Returns `(y, h)`; the hidden activations feed the backward pass.
    fn forward_cached(&self, x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
        let h = tanh_of(&self.adapter.forward(x)?);
        Ok((self.w_out.matmul(&h), h))
    }
}

/// Trains the first-layer adapter of `model` against the teacher network.
/// Reports the same diagnostics as the linear trainer; `m_t_accum` is the
/// accumulated full-space gradient of the first layer.
pub fn train_mlp(
    model: &mut MlpModel,
    task: &MlpTask,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if model.adapter.shape() != task.first_layer_shape() {
        return Err(Error::Parameter("model and task first layers differ in shape".into()));
    }
    if model.adapter.w_base() != task.w_base() {
        return Err(Error::Parameter(
            "model and task must be built on the same first-layer base".into(),
        ));
    }
    if model.w_out != task.w_out {
        return Err(Error::Parameter("model and task must share the frozen output layer".into()));
    }

    let (hidden, in_dim) = model.adapter.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fixed = match config.batch_mode {
        super::BatchMode::Fixed => Some(task.sample(config.batch_size, &mut rng)),
        super::BatchMode::Fresh => None,
    };
    let mut optimizer = OptimizerState::new(config.optimizer, &model.adapter);
    let mut m_t_accum = DenseMatrix::zeros(hidden, in_dim);
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
        let (y, h) = model.forward_cached(x)?;
        let residual = y.sub(target);
        let loss = 0.5 * inv_b * residual.frobenius_norm().powi(2);
        if !loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        loss_history.push(loss);

        let d_y = residual.scale(inv_b);
        let d_h = model.w_out.transpose().matmul(&d_y);
        let d_z = tanh_backprop(&d_h, &h);
        m_t_accum = m_t_accum.add(&d_z.matmul(&x.transpose()));

        let grads = model.adapter.gradients(x, &d_z)?;
        let mut params = model.adapter.trainable();
        optimizer.step(&mut params, &grads, config.lr_at(step), config.weight_decay);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { step });
        }
        model.adapter.install(params)?;
    }

    build_report(&model.adapter, config, task.seed(), loss_history, m_t_accum)
}
