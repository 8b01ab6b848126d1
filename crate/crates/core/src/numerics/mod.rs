//! Dense linear algebra, special functions and seeded random streams.

mod matrix;
mod rng;
mod special;

pub use matrix::{
    dot, norm2, quad_form, rank1_update, rank1_update_in_place, solve_spd, weighted_norm, Cholesky,
    Matrix,
};
pub use rng::{derive_seed, gaussian_sample, label_tag, rng_from_seed, standard_normal, BanditRng};
pub use special::{chi2_cdf, chi2_quantile, ln_gamma, regularized_lower_gamma};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("negative quadratic form {0:e}")]
    NegativeQuadraticForm(f64),
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("degrees of freedom must be positive, got {0}")]
    InvalidDegreesOfFreedom(usize),
    #[error("variance must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("non-finite entry")]
    NonFinite,
}
