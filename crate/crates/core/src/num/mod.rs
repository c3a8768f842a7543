//! Dense linear algebra, the MLP function class and the finite-difference
//! gradient oracle.

pub mod gradcheck;
mod mat;
mod mlp;
mod optim;

pub use gradcheck::{central_difference, finite_diff_check, GradReport};
pub use mat::{axpy, dot, norm_sq, Mat};
pub use mlp::{Layer, Mlp};
pub use optim::Adam;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("{context}: dimension mismatch, expected {expected} got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("matrix is singular or ill-conditioned")]
    Singular,
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("{context}: non-finite value at index {index}")]
    NonFinite { context: &'static str, index: usize },
}
