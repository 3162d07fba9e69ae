//! Cascaded state estimation building blocks.
//!
//! This crate provides the numerical core for running a *receiving* filter
//! downstream of a *feeding* filter whose estimate enters the receiving
//! filter's process and measurement models. The interesting part is the
//! cross-covariance between the two estimation errors: neglecting it makes
//! the receiving filter overconfident, while tracking an approximation of it
//! through the sigma-point machinery in [`filters::cascade`] keeps the
//! receiving filter statistically consistent.
//!
//! Layout:
//!
//! - [`gaussian`] — Gaussian/joint-Gaussian containers, robust Cholesky,
//!   conditioning, cross-block deflation, KL divergence.
//! - [`sigma`] — spherical-cubature sigma points and the block-aware
//!   transform that produces means, covariances, and named cross-covariances.
//! - [`so3`] — rotation matrices with exponential/logarithm maps and the
//!   geodesic mean used by on-manifold filters.
//! - [`filters`] — the estimator zoo: plain Kalman steps, the cascaded
//!   sigma-point filter and its linearized twin, a covariance-intersection
//!   variant, an attitude filter, a full joint filter, and a stacked linear
//!   filter usable both as a baseline and as an exactness oracle.

pub mod filters;
pub mod gaussian;
pub mod sigma;
pub mod so3;

use std::fmt;

/// Errors surfaced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A matrix that must be (semi-)definite failed factorization even after
    /// the one-shot jitter retry.
    NotPositiveDefinite,
    /// The conditioning block of a joint Gaussian could not be factorized.
    SingularConditioning,
    /// Operands disagree on dimensions.
    DimensionMismatch { expected: usize, found: usize },
    /// An iterative routine exhausted its iteration budget.
    NoConvergence,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotPositiveDefinite => {
                write!(f, "matrix is not positive definite (jitter retry failed)")
            }
            Error::SingularConditioning => {
                write!(f, "conditioning block is singular")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NoConvergence => write!(f, "iteration did not converge"),
        }
    }
}

impl std::error::Error for Error {}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
