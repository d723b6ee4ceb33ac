use thiserror::Error;

/// Errors produced by the library.
///
/// The variants are grouped by how callers are expected to react: bad
/// arguments ([`Error::Parameter`], [`Error::NonFinite`], [`Error::Contract`]),
/// file problems ([`Error::Io`], [`Error::Format`]), numerical breakdown
/// ([`Error::NonConvergence`], [`Error::Degenerate`]) and runaway training
/// ([`Error::Diverged`]).
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition (bad shape, out-of-range
    /// index, inconsistent sizes, invalid flag combination).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An input matrix contained NaN or infinite entries.
    #[error("input error: {0}")]
    NonFinite(String),

    /// A caller combined results in a way the producing operation does not
    /// support (e.g. asking for an SGD trajectory identity on an AdamW run).
    #[error("contract error: {0}")]
    Contract(String),

    /// Jacobi SVD failed to reach the orthogonality threshold.
    #[error(
        "numerical error: SVD did not converge within {sweeps} sweeps \
         (achieved off-diagonal magnitude {achieved:.3e})"
    )]
    NonConvergence { sweeps: usize, achieved: f64 },

    /// A skeleton intersection was numerically singular.
    #[error(
        "degenerate skeleton: intersection matrix is singular within tolerance \
         (sigma_min/sigma_max = {ratio:.3e})"
    )]
    Degenerate { ratio: f64 },

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file did not match its declared format (bad magic, truncated body,
    /// unparsable field).
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
