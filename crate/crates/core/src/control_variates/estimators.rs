use crate::numerics::{Cholesky, Matrix, NumericsError};

use super::{AuxModel, CenteredStats, CovarianceSpec, CvError, ObservationLog};

/// Cholesky pivots at or below this value mark the auxiliary Gram matrix as
/// singular.
pub const SINGULAR_PIVOT: f64 = 1e-12;

fn factor_gram(a: &Matrix) -> Result<Cholesky, CvError> {
    Cholesky::factor_with_threshold(a, SINGULAR_PIVOT).map_err(|e| match e {
        NumericsError::NotPositiveDefinite { pivot, .. } => CvError::SingularGram { pivot },
        other => CvError::Numerics(other),
    })
}

/// `β̂ = (WᵀW)⁻¹ WᵀY`.
pub fn estimate_beta(stats: &CenteredStats) -> Result<Vec<f64>, CvError> {
    let chol = factor_gram(&stats.wtw)?;
    Ok(chol.solve(&stats.wty)?)
}

/// `β̂_e = (WᵀW ∘ F)⁻¹ (diag F ∘ WᵀY)`.
pub fn estimate_beta_approx(stats: &CenteredStats, f: &Matrix) -> Result<Vec<f64>, CvError> {
    let q = stats.num_feedback();
    if f.rows() != q || f.cols() != q {
        return Err(CvError::DimensionMismatch {
            expected: q,
            found: f.rows(),
        });
    }
    let gram = stats.wtw.hadamard(f)?;
    let rhs: Vec<f64> = f
        .diagonal()
        .iter()
        .zip(&stats.wty)
        .map(|(a, b)| a * b)
        .collect();
    let chol = factor_gram(&gram)?;
    Ok(chol.solve(&rhs)?)
}

/// `β⋆ = Σ_ww⁻¹ σ_yw`.
pub fn estimate_beta_known_cov(spec: &CovarianceSpec) -> Result<Vec<f64>, CvError> {
    let chol = Cholesky::factor(&spec.sigma_ww)?;
    Ok(chol.solve(&spec.sigma_yw)?)
}

/// `(G + λI)⁻¹ b`.
pub fn ridge_fit(gram: &Matrix, rhs: &[f64], lambda: f64) -> Result<Vec<f64>, CvError> {
    let n = gram.rows();
    let a = gram.add(&Matrix::scaled_identity(n, lambda))?;
    Ok(Cholesky::factor(&a)?.solve(rhs)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub iterations: usize,
}

/// Offline fit of reward parameters and control coefficients on a fixed log.
///
/// Alternates `β̂ ← estimate(f = xᵀθ)` and `θ ← (XᵀX + λI)⁻¹ Σ x z` until
/// the parameter change drops below `tol`. The fixed point is the joint
/// least-squares fit of `y` on `[X | W̄]` when `f` is all-ones. `f = None`
/// uses the exact estimator.
pub fn joint_fit(
    log: &ObservationLog,
    aux: &AuxModel,
    f: Option<&Matrix>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<JointFit, CvError> {
    let gram = log.gram();
    let mut theta = ridge_fit(&gram, &log.reward_sum(), lambda)?;
    let mut beta = vec![0.0; log.num_feedback()];
    for it in 1..=max_iter {
        let stats = log.stats(aux, &theta);
        beta = match f {
            None => estimate_beta(&stats)?,
            Some(f) => estimate_beta_approx(&stats, f)?,
        };
        let next = ridge_fit(&gram, &stats.hybrid_reward_sum(&beta), lambda)?;
        let change = next
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        theta = next;
        if change <= tol * (1.0 + theta.iter().fold(0.0_f64, |m, v| m.max(v.abs()))) {
            return Ok(JointFit {
                theta,
                beta,
                iterations: it,
            });
        }
    }
    Ok(JointFit {
        theta,
        beta,
        iterations: max_iter,
    })
}
