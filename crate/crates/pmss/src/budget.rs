//! Trainable-parameter accounting for adapter methods across a model.
//!
//! For a model with `layers` adapted `m x n` matrices, LoRA trains
//! `layers * (m + n) * r` parameters while the skeleton adapter trains only
//! `layers * c * r` — the skeletons themselves are slices of frozen weights
//! and cost nothing. Matching the two budgets at `c = r` gives the
//! equivalent core size `sqrt((m + n) * r_lora)`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Adapter method with the capacity knobs that determine its budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum BudgetMethod {
    Lora { rank: u64 },
    Pmss { c: u64, r: u64 },
}

/// Parameter budget of one method against a fixed model size.
#[derive(Debug, Clone, Serialize)]
pub struct BudgetReport {
    #[serde(flatten)]
    pub method: BudgetMethod,
    pub m: u64,
    pub n: u64,
    pub layers: u64,
    /// Trainable parameters across all adapted layers.
    pub theta: u64,
    /// Total model parameters used as the denominator.
    pub total_params: u64,
    /// `100 * theta / total_params`.
    pub percent: f64,
}

/// Computes the trainable-parameter budget of `method` on `layers` adapted
/// `m x n` matrices, as a share of `total_params`.
pub fn param_budget(
    m: u64,
    n: u64,
    layers: u64,
    method: BudgetMethod,
    total_params: u64,
) -> Result<BudgetReport> {
    if m == 0 || n == 0 || layers == 0 || total_params == 0 {
        return Err(Error::Parameter(
            "budget dimensions, layer count and total parameters must be positive".into(),
        ));
    }
    let per_layer = match method {
        BudgetMethod::Lora { rank } => {
            if rank == 0 {
                return Err(Error::Parameter("lora rank must be positive".into()));
            }
            m.checked_add(n)
                .and_then(|fan| fan.checked_mul(rank))
                .ok_or_else(|| Error::Parameter("budget overflows u64".into()))?
        }
        BudgetMethod::Pmss { c, r } => {
            if c == 0 || r == 0 {
                return Err(Error::Parameter("skeleton sizes must be positive".into()));
            }
            c.checked_mul(r).ok_or_else(|| Error::Parameter("budget overflows u64".into()))?
        }
    };
    let theta = layers
        .checked_mul(per_layer)
        .ok_or_else(|| Error::Parameter("budget overflows u64".into()))?;
    let percent = 100.0 * theta as f64 / total_params as f64;
    Ok(BudgetReport { method, m, n, layers, theta, total_params, percent })
}

/// Core size `c = r` at which a square-core skeleton adapter trains as many
/// parameters per layer as LoRA at rank `r_lora`: `sqrt((m + n) * r_lora)`.
/// Callers round down when they need an integer budget that does not exceed
/// LoRA's.
pub fn equivalent_rank(m: u64, n: u64, r_lora: u64) -> f64 {
    debug_assert!(m > 0 && n > 0 && r_lora > 0, "equivalent_rank needs positive arguments");
    (((m + n) * r_lora) as f64).sqrt()
}
