//! Hybrid rewards built from correlated auxiliary feedback.
//!
//! The observation log keeps raw moments; everything downstream (coefficient
//! estimates, variance estimates, subset selection, the learner's reward
//! aggregate) is derived from [`CenteredStats`].

mod aux_model;
mod estimators;
mod log;
mod selection;
mod state;
mod variance;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Matrix, NumericsError};

pub use aux_model::{AuxModel, AuxModelKind};
pub use estimators::{
    estimate_beta, estimate_beta_approx, estimate_beta_known_cov, joint_fit, ridge_fit, JointFit,
    SINGULAR_PIVOT,
};
pub use log::{CenteredStats, ObservationLog, Record};
pub use selection::{select_feedback_subset, subset_proxy};
pub use state::{CoefficientEstimator, HybridState, InactiveReason, RefreshConfig};
pub use variance::{
    sample_variance_known_sigma, sample_variance_known_sigma_approx, sample_variance_regression,
    variance_upper_bound, DofRule, QuantileCache, QuantileTail, VarianceBoundConfig,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CvError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("auxiliary Gram matrix is singular (pivot {pivot:e})")]
    SingularGram { pivot: f64 },
    #[error("need more than {needed} observations, have {have}")]
    TooFewObservations { needed: usize, have: usize },
    #[error("sample ratio {0} is below 1")]
    InvalidRatio(f64),
    #[error("non-finite observation")]
    NonFinite,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// How the auxiliary mean function is estimated from extra samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingStrategy {
    /// Auxiliary-only samples are drawn independently of the paired ones.
    IndependentSamples,
    /// Paired samples are reused as part of the auxiliary sample pool.
    MultipleFeedbacks,
}

impl SamplingStrategy {
    pub fn short_name(&self) -> &'static str {
        match self {
            SamplingStrategy::IndependentSamples => "IS",
            SamplingStrategy::MultipleFeedbacks => "MF",
        }
    }
}

/// Known second moments of the reward and feedback noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub sigma_ww: Matrix,
    pub sigma_yw: Vec<f64>,
}

/// `z = y − Σᵢ βᵢ (wᵢ − ĝᵢ)`.
pub fn hybrid_reward(y: f64, w: &[f64], g_hat: &[f64], beta: &[f64]) -> Result<f64, CvError> {
    if w.len() != g_hat.len() || w.len() != beta.len() {
        return Err(CvError::DimensionMismatch {
            expected: w.len(),
            found: if g_hat.len() != w.len() {
                g_hat.len()
            } else {
                beta.len()
            },
        });
    }
    Ok(y - w
        .iter()
        .zip(g_hat)
        .zip(beta)
        .map(|((w, g), b)| b * (w - g))
        .sum::<f64>())
}

/// Correction matrix `F_e` for estimated auxiliary means.
pub fn f_matrix(ratios: &[f64], strategy: SamplingStrategy) -> Result<Matrix, CvError> {
    if let Some(&r) = ratios.iter().find(|r| !(**r >= 1.0) || !r.is_finite()) {
        return Err(CvError::InvalidRatio(r));
    }
    let q = ratios.len();
    let mut f = Matrix::zeros(q, q);
    for i in 0..q {
        for j in 0..q {
            let (ri, rj) = (ratios[i], ratios[j]);
            let v = if i == j {
                (ri - 1.0) / ri
            } else {
                match strategy {
                    SamplingStrategy::IndependentSamples => (ri - 1.0) * (rj - 1.0) / (ri * rj),
                    SamplingStrategy::MultipleFeedbacks => {
                        let m = ri.min(rj);
                        (m - 1.0) / m
                    }
                }
            };
            f.set(i, j, v);
        }
    }
    Ok(f)
}

/// Variance-inflation factor `a(e)`: 1 for IS, `(r−1)/r` for MF.
///
/// For MF with unequal ratios the smallest ratio is used.
pub fn a_factor(ratios: &[f64], strategy: SamplingStrategy) -> f64 {
    match strategy {
        SamplingStrategy::IndependentSamples => 1.0,
        SamplingStrategy::MultipleFeedbacks => {
            let m = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            if m.is_finite() {
                (m - 1.0) / m
            } else {
                1.0
            }
        }
    }
}

/// Squared multiple correlation `σ_ywᵀ Σ_ww⁻¹ σ_yw / σ²`.
pub fn multiple_correlation(spec: &CovarianceSpec, sigma2: f64) -> Result<f64, CvError> {
    let beta = estimate_beta_known_cov(spec)?;
    Ok(crate::numerics::dot(&beta, &spec.sigma_yw) / sigma2)
}

/// Squared correlation of the reward with estimated-mean controls,
/// `(diag F ∘ σ_yw)ᵀ (Σ_ww ∘ F)⁻¹ (diag F ∘ σ_yw) / σ²`.
///
/// The common `1/t` scaling of both moments cancels.
pub fn approximate_multiple_correlation(
    spec: &CovarianceSpec,
    f: &Matrix,
    sigma2: f64,
) -> Result<f64, CvError> {
    let sww = spec.sigma_ww.hadamard(f)?;
    let syw: Vec<f64> = f
        .diagonal()
        .iter()
        .zip(&spec.sigma_yw)
        .map(|(a, b)| a * b)
        .collect();
    let sol = crate::numerics::solve_spd(&sww, &syw)?;
    Ok(crate::numerics::dot(&sol, &syw) / sigma2)
}
