//! Skeleton-selection toolkit for parameter-efficient fine-tuning of dense
//! weight matrices.
//!
//! The crate is organized bottom-up:
//!
//! - [`matrix`]: the dense `f64` matrix type and its basic kernels;
//! - [`linalg`]: column-pivoted Householder QR, one-sided Jacobi SVD,
//!   pseudoinverse and multi-right-hand-side least squares;
//! - [`skeleton`]: column/row skeleton selection strategies and the
//!   interpolative / CUR decompositions built on them;
//! - [`adapter`]: the frozen-skeleton adapter (`W + s*C*U*R`) and a LoRA
//!   baseline, with exact forward/backward passes and merging;
//! - [`budget`]: trainable-parameter accounting and budget-matched ranks;
//! - [`trainer`]: synthetic teacher-student tasks, SGD/AdamW training at desk
//!   scale, and the gradient/trajectory audit helpers;
//! - [`io`]: the on-disk formats (binary matrices, CSV, index files, adapter
//!   checkpoints).
//!
//! Everything is `f64`, deterministic under explicit seeds, and sized for
//! matrices that fit comfortably in memory.

pub mod adapter;
pub mod budget;
pub mod error;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod skeleton;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
