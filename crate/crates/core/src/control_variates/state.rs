use serde::{Deserialize, Serialize};

use crate::numerics::Matrix;

use super::{
    a_factor, estimate_beta, estimate_beta_approx, f_matrix, sample_variance_known_sigma,
    sample_variance_known_sigma_approx, AuxModel, CenteredStats, CvError, ObservationLog,
    QuantileCache, SamplingStrategy, VarianceBoundConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InactiveReason {
    TooFewObservations,
    NoReduction,
    SingularGram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientEstimator {
    Exact,
    Approximate {
        strategy: SamplingStrategy,
        ratios: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefreshConfig {
    pub sigma2: f64,
    pub delta: f64,
    pub bound: VarianceBoundConfig,
    pub estimator: CoefficientEstimator,
}

impl RefreshConfig {
    pub fn new(sigma2: f64, delta: f64) -> Self {
        Self {
            sigma2,
            delta,
            bound: VarianceBoundConfig::default(),
            estimator: CoefficientEstimator::Exact,
        }
    }

    pub fn with_bound(mut self, bound: VarianceBoundConfig) -> Self {
        self.bound = bound;
        self
    }

    pub fn with_estimator(mut self, estimator: CoefficientEstimator) -> Self {
        self.estimator = estimator;
        self
    }

    fn correction(&self, q: usize) -> Result<(Matrix, f64), CvError> {
        match &self.estimator {
            CoefficientEstimator::Exact => Ok((Matrix::filled(q, q, 1.0), 1.0)),
            CoefficientEstimator::Approximate { strategy, ratios } => {
                if ratios.len() != q {
                    return Err(CvError::DimensionMismatch {
                        expected: q,
                        found: ratios.len(),
                    });
                }
                Ok((f_matrix(ratios, *strategy)?, a_factor(ratios, *strategy)))
            }
        }
    }
}

/// Control coefficients and variance bound currently in force.
///
/// While inactive the coefficients are zero and hybrid rewards are the raw
/// rewards, so the learner behaves exactly like its vanilla counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub beta: Vec<f64>,
    pub f_matrix: Matrix,
    pub a_factor: f64,
    pub nu_hat: f64,
    pub nu_bar: f64,
    pub active: bool,
    pub inactive_reason: Option<InactiveReason>,
    pub t: usize,
}

impl HybridState {
    pub fn initial(q: usize, cfg: &RefreshConfig) -> Result<Self, CvError> {
        let (f, a) = cfg.correction(q)?;
        Ok(Self::inactive(
            q,
            f,
            a,
            cfg.sigma2,
            cfg.sigma2,
            0,
            InactiveReason::TooFewObservations,
        ))
    }

    fn inactive(
        q: usize,
        f: Matrix,
        a: f64,
        nu_hat: f64,
        nu_bar: f64,
        t: usize,
        why: InactiveReason,
    ) -> Self {
        Self {
            beta: vec![0.0; q],
            f_matrix: f,
            a_factor: a,
            nu_hat,
            nu_bar,
            active: false,
            inactive_reason: Some(why),
            t,
        }
    }

    /// Recompute the state from the log, using `f_t(x) = xᵀtheta` as the
    /// reward baseline. Returns the centered aggregates alongside so the
    /// caller can form `Σ x_s z_s` without recomputing them.
    pub fn refresh(
        log: &ObservationLog,
        aux: &AuxModel,
        theta: &[f64],
        cfg: &RefreshConfig,
    ) -> Result<(Self, CenteredStats), CvError> {
        let stats = log.stats(aux, theta);
        let state = Self::from_stats(&stats, cfg)?;
        Ok((state, stats))
    }

    pub fn from_stats(stats: &CenteredStats, cfg: &RefreshConfig) -> Result<Self, CvError> {
        Self::from_stats_cached(stats, cfg, &mut QuantileCache::default())
    }

    pub fn from_stats_cached(
        stats: &CenteredStats,
        cfg: &RefreshConfig,
        cache: &mut QuantileCache,
    ) -> Result<Self, CvError> {
        let q = stats.num_feedback();
        let t = stats.t;
        let (f, a) = cfg.correction(q)?;
        if t <= q + 2 {
            return Ok(Self::inactive(
                q,
                f,
                a,
                cfg.sigma2,
                cfg.sigma2,
                t,
                InactiveReason::TooFewObservations,
            ));
        }
        let nu_hat = match &cfg.estimator {
            CoefficientEstimator::Exact => sample_variance_known_sigma(stats, cfg.sigma2)?,
            CoefficientEstimator::Approximate { .. } => {
                sample_variance_known_sigma_approx(stats, cfg.sigma2, &f)?
            }
        };
        let nu_bar = cfg.bound.bound_cached(nu_hat, t, q, cfg.delta, cache)?;
        if nu_bar >= cfg.sigma2 {
            return Ok(Self::inactive(
                q,
                f,
                a,
                nu_hat,
                nu_bar,
                t,
                InactiveReason::NoReduction,
            ));
        }
        let beta = match &cfg.estimator {
            CoefficientEstimator::Exact => estimate_beta(stats),
            CoefficientEstimator::Approximate { .. } => estimate_beta_approx(stats, &f),
        };
        match beta {
            Ok(beta) => Ok(Self {
                beta,
                f_matrix: f,
                a_factor: a,
                nu_hat,
                nu_bar,
                active: true,
                inactive_reason: None,
                t,
            }),
            Err(CvError::SingularGram { .. }) => Ok(Self::inactive(
                q,
                f,
                a,
                cfg.sigma2,
                cfg.sigma2,
                t,
                InactiveReason::SingularGram,
            )),
            Err(e) => Err(e),
        }
    }

    /// `min(σ², ν̄)`, the variance that scales the confidence width.
    pub fn noise_variance(&self, sigma2: f64) -> f64 {
        if self.active {
            self.nu_bar.min(sigma2)
        } else {
            sigma2
        }
    }

    /// `Σ x_s z_s` under the current coefficients.
    pub fn reward_aggregate(&self, stats: &CenteredStats) -> Vec<f64> {
        if self.active {
            stats.hybrid_reward_sum(&self.beta)
        } else {
            stats.xy.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
