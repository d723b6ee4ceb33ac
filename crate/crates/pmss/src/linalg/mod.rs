//! Dense linear-algebra kernels: column-pivoted QR, Jacobi SVD,
//! pseudoinverse and least squares.

mod lstsq;
mod qr;
mod svd;

pub use lstsq::{default_pinv_tol, least_squares_multi, pinv};
pub use qr::{pivoted_qr, PivotedQr};
pub use svd::{svd, Svd};
