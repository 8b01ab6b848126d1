use serde::{Deserialize, Serialize};

use crate::numerics::{chi2_quantile, Cholesky, Matrix};

use super::{CenteredStats, CvError, SINGULAR_PIVOT};

/// Regression estimate of the variance of the control-variate mean
/// estimator: `σ̂² (W̄ᵀW̄)⁻¹₁₁` with `W̄ = [1 | W]` and `σ̂²` the residual
/// variance of `Y` on `W̄` with `t − q − 1` degrees of freedom.
pub fn sample_variance_regression(stats: &CenteredStats) -> Result<f64, CvError> {
    let q = stats.num_feedback();
    let t = stats.t;
    if t <= q + 1 {
        return Err(CvError::TooFewObservations {
            needed: q + 1,
            have: t,
        });
    }
    let mut g = Matrix::zeros(q + 1, q + 1);
    g.set(0, 0, t as f64);
    let mut rhs = vec![stats.y_sum];
    for i in 0..q {
        g.set(0, i + 1, stats.w_sum[i]);
        g.set(i + 1, 0, stats.w_sum[i]);
        for j in 0..q {
            g.set(i + 1, j + 1, stats.wtw.get(i, j));
        }
        rhs.push(stats.wty[i]);
    }
    let chol = Cholesky::factor_with_threshold(&g, SINGULAR_PIVOT)
        .map_err(|_| CvError::SingularGram { pivot: 0.0 })?;
    let gamma = chol.solve(&rhs)?;
    let fitted: f64 = gamma.iter().zip(&rhs).map(|(a, b)| a * b).sum();
    let rss = (stats.yy - fitted).max(0.0);
    let sigma2_hat = rss / (t - q - 1) as f64;
    let inv00 = chol.inverse().get(0, 0);
    Ok(sigma2_hat * inv00)
}

/// `(1 − ρ̂²) σ²`, with `ρ̂²` the sample squared multiple correlation between
/// the reward residual and the centered feedback, normalised by the known
/// noise variance. Degenerate feedback yields `σ²`.
pub fn sample_variance_known_sigma(stats: &CenteredStats, sigma2: f64) -> Result<f64, CvError> {
    known_sigma(stats, sigma2, None)
}

/// Same estimate for sampled feedback: the correlation is taken through the
/// correction matrix, `(F̄ ∘ c_yw)ᵀ (C_ww ∘ F)⁻¹ (F̄ ∘ c_yw) / σ²` with `F̄` the
/// diagonal of `F`. All-ones `F` gives the plain estimate.
pub fn sample_variance_known_sigma_approx(
    stats: &CenteredStats,
    sigma2: f64,
    f: &Matrix,
) -> Result<f64, CvError> {
    let q = stats.num_feedback();
    if f.rows() != q || f.cols() != q {
        return Err(CvError::DimensionMismatch {
            expected: q,
            found: f.rows(),
        });
    }
    known_sigma(stats, sigma2, Some(f))
}

fn known_sigma(stats: &CenteredStats, sigma2: f64, f: Option<&Matrix>) -> Result<f64, CvError> {
    if stats.t < 3 {
        return Err(CvError::TooFewObservations {
            needed: 2,
            have: stats.t,
        });
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(CvError::Numerics(
            crate::numerics::NumericsError::NegativeVariance(sigma2),
        ));
    }
    let q = stats.num_feedback();
    if q == 0 {
        return Ok(sigma2);
    }
    let c = stats.sample_covariance();
    let idx: Vec<usize> = (1..=q).collect();
    let mut cww = c.select(&idx);
    let mut cyw: Vec<f64> = idx.iter().map(|&i| c.get(0, i)).collect();
    if let Some(f) = f {
        cww = cww.hadamard(f)?;
        for (v, d) in cyw.iter_mut().zip(f.diagonal()) {
            *v *= d;
        }
    }
    // Cancellation in the centered moments is bounded by the raw ones.
    let raw_scale =
        (0..q).map(|i| stats.wtw.get(i, i)).fold(0.0_f64, f64::max) / (stats.t - 1) as f64;
    let threshold = 1e-10 * raw_scale + f64::MIN_POSITIVE;
    let Ok(chol) = Cholesky::factor_with_threshold(&cww, threshold) else {
        return Ok(sigma2);
    };
    let rho2 = (chol.inverse_quad_form(&cyw)? / sigma2).clamp(0.0, 1.0);
    Ok(((1.0 - rho2) * sigma2).clamp(0.0, sigma2))
}

/// `(t−2) ν̂ / χ²_{1−δ, t−2}`, reading the quantile as the `1−δ` point of
/// the distribution function.
pub fn variance_upper_bound(nu_hat: f64, t: usize, delta: f64) -> Result<f64, CvError> {
    VarianceBoundConfig::literal().bound(nu_hat, t, 0, delta)
}

/// Which quantile of `χ²_k` divides `k ν̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileTail {
    /// `F⁻¹(1−δ)`: shrinks the estimate.
    Upper,
    /// `F⁻¹(δ)`: a `1−δ` upper confidence bound on the variance.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DofRule {
    TMinusTwo,
    TMinusQMinusOne,
}

impl DofRule {
    pub fn dof(&self, t: usize, q: usize) -> usize {
        match self {
            DofRule::TMinusTwo => t.saturating_sub(2),
            DofRule::TMinusQMinusOne => t.saturating_sub(q + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceBoundConfig {
    pub tail: QuantileTail,
    pub dof: DofRule,
}

impl Default for VarianceBoundConfig {
    fn default() -> Self {
        Self {
            tail: QuantileTail::Lower,
            dof: DofRule::TMinusTwo,
        }
    }
}

impl VarianceBoundConfig {
    pub fn literal() -> Self {
        Self {
            tail: QuantileTail::Upper,
            dof: DofRule::TMinusTwo,
        }
    }

    /// `k ν̂ / χ²_{p,k}` with `k` from the dof rule and `p` from the tail.
    pub fn bound(&self, nu_hat: f64, t: usize, q: usize, delta: f64) -> Result<f64, CvError> {
        self.bound_cached(nu_hat, t, q, delta, &mut QuantileCache::default())
    }

    pub fn bound_cached(
        &self,
        nu_hat: f64,
        t: usize,
        q: usize,
        delta: f64,
        cache: &mut QuantileCache,
    ) -> Result<f64, CvError> {
        if t < 3 {
            return Err(CvError::TooFewObservations { needed: 2, have: t });
        }
        if !(nu_hat >= 0.0) {
            return Err(CvError::Numerics(
                crate::numerics::NumericsError::NegativeVariance(nu_hat),
            ));
        }
        let k = self.dof.dof(t, q);
        let p = match self.tail {
            QuantileTail::Upper => 1.0 - delta,
            QuantileTail::Lower => delta,
        };
        let quantile = cache.get(p, k)?;
        Ok(k as f64 * nu_hat / quantile)
    }
}

/// Memoised `χ²` quantiles for a single probability level.
#[derive(Debug, Clone, Default)]
pub struct QuantileCache {
    p: Option<f64>,
    values: Vec<f64>,
}

impl QuantileCache {
    pub fn get(&mut self, p: f64, dof: usize) -> Result<f64, CvError> {
        if self.p != Some(p) {
            self.p = Some(p);
            self.values.clear();
        }
        if dof >= self.values.len() {
            self.values.resize(dof + 1, f64::NAN);
        }
        if self.values[dof].is_nan() {
            self.values[dof] = chi2_quantile(p, dof)?;
        }
        Ok(self.values[dof])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_variates::{AuxModel, ObservationLog};
    use crate::numerics::{rng_from_seed, standard_normal};
    use rand::Rng;

    fn log_with(rows: &[(f64, Vec<f64>)]) -> CenteredStats {
        let q = rows[0].1.len();
        let mut log = ObservationLog::new(1, q);
        for (y, w) in rows {
            log.push(&[0.0], *y, w).unwrap();
        }
        log.stats(&AuxModel::known(&vec![vec![0.0]; q]), &[0.0])
    }

    #[test]
    fn regression_zero_residuals() {
        let rows: Vec<(f64, Vec<f64>)> = (0..8)
            .map(|i| (2.0 + 3.0 * i as f64, vec![i as f64]))
            .collect();
        assert!(sample_variance_regression(&log_with(&rows)).unwrap().abs() < 1e-20);
    }

    #[test]
    fn regression_without_controls_is_variance_of_mean() {
        let ys = [1.0, 4.0, -2.0, 0.5, 3.0, 2.2];
        let mut log = ObservationLog::new(1, 0);
        for y in ys {
            log.push(&[0.0], y, &[]).unwrap();
        }
        let stats = log.stats(&AuxModel::known(&[]), &[0.0]);
        let t = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / t;
        let s2 = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (t - 1.0);
        assert!((sample_variance_regression(&stats).unwrap() - s2 / t).abs() < 1e-12);
    }

    #[test]
    fn regression_matches_explicit_two_by_two() {
        let mut rng = rng_from_seed(3);
        let rows: Vec<(f64, Vec<f64>)> = (0..30)
            .map(|_| {
                let w: f64 = rng.random_range(-1.0..1.0);
                (0.3 + 0.8 * w + 0.2 * standard_normal(&mut rng), vec![w])
            })
            .collect();
        let t = rows.len() as f64;
        let (mut sw, mut sww, mut sy, mut swy) = (0.0, 0.0, 0.0, 0.0);
        for (y, w) in &rows {
            sw += w[0];
            sww += w[0] * w[0];
            sy += y;
            swy += w[0] * y;
        }
        let det = t * sww - sw * sw;
        let inv = [[sww / det, -sw / det], [-sw / det, t / det]];
        let mu = inv[0][0] * sy + inv[0][1] * swy;
        let b = inv[1][0] * sy + inv[1][1] * swy;
        let rss: f64 = rows.iter().map(|(y, w)| (y - mu - b * w[0]).powi(2)).sum();
        let oracle = rss / (t - 2.0) * inv[0][0];
        let got = sample_variance_regression(&log_with(&rows)).unwrap();
        assert!(
            (got - oracle).abs() < 1e-12 * oracle.max(1e-12),
            "{got} vs {oracle}"
        );
    }

    #[test]
    fn known_sigma_degenerate_and_perfect() {
        let rows: Vec<(f64, Vec<f64>)> = (0..10).map(|i| (i as f64, vec![0.7])).collect();
        assert_eq!(
            sample_variance_known_sigma(&log_with(&rows), 0.02).unwrap(),
            0.02
        );
        let rows: Vec<(f64, Vec<f64>)> = (0..10)
            .map(|i| (0.1 * i as f64, vec![0.1 * i as f64]))
            .collect();
        assert_eq!(
            sample_variance_known_sigma(&log_with(&rows), 0.02).unwrap(),
            0.0
        );
    }

    #[test]
    fn known_sigma_monte_carlo() {
        // y noise = v + w with Var v = Var w = 0.01, so ρ² = 1/2.
        let mut rng = rng_from_seed(17);
        let rows: Vec<(f64, Vec<f64>)> = (0..10_000)
            .map(|_| {
                let v = 0.1 * standard_normal(&mut rng);
                let w = 0.1 * standard_normal(&mut rng);
                (v + w, vec![w])
            })
            .collect();
        let nu = sample_variance_known_sigma(&log_with(&rows), 0.02).unwrap();
        assert!((nu - 0.01).abs() < 0.05 * 0.01, "{nu}");
    }

    #[test]
    fn known_sigma_through_correction() {
        let mut rng = rng_from_seed(5);
        let rows: Vec<(f64, Vec<f64>)> = (0..200)
            .map(|_| {
                let v = 0.1 * standard_normal(&mut rng);
                let w = 0.1 * standard_normal(&mut rng);
                let u = 0.1 * standard_normal(&mut rng);
                (v + w + 0.5 * u, vec![w, u])
            })
            .collect();
        let log = log_with(&rows);
        let ones = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let plain = sample_variance_known_sigma(&log, 0.0225).unwrap();
        assert_eq!(
            sample_variance_known_sigma_approx(&log, 0.0225, &ones).unwrap(),
            plain
        );
        // one feedback: ρ̂² shrinks by exactly the diagonal factor
        let one: Vec<(f64, Vec<f64>)> = rows.iter().map(|(y, w)| (*y, vec![w[0]])).collect();
        let log1 = log_with(&one);
        let s2 = 0.0225;
        let rho2 = 1.0 - sample_variance_known_sigma(&log1, s2).unwrap() / s2;
        let f = Matrix::from_rows(&[vec![0.5]]).unwrap();
        let rho2_e = 1.0 - sample_variance_known_sigma_approx(&log1, s2, &f).unwrap() / s2;
        assert!((rho2_e - 0.5 * rho2).abs() < 1e-12, "{rho2_e} vs {rho2}");
        assert!(sample_variance_known_sigma_approx(&log1, s2, &ones).is_err());
    }

    #[test]
    fn upper_bound_examples() {
        assert_eq!(variance_upper_bound(0.0, 30, 0.05).unwrap(), 0.0);
        let v = variance_upper_bound(1.0, 30, 0.05).unwrap();
        assert!((v - 28.0 / 41.337).abs() < 1e-3, "{v}");
        let v = variance_upper_bound(1.0, 200, 0.5 - 1e-9).unwrap();
        assert!((v - 1.0).abs() < 0.02, "{v}");
        assert!(variance_upper_bound(1.0, 2, 0.05).is_err());
    }

    #[test]
    fn lower_tail_bound_exceeds_estimate() {
        let cfg = VarianceBoundConfig::default();
        for t in [5, 30, 200] {
            assert!(cfg.bound(1.0, t, 1, 0.05).unwrap() > 1.0);
        }
        let alt = VarianceBoundConfig {
            tail: QuantileTail::Lower,
            dof: DofRule::TMinusQMinusOne,
        };
        assert!(alt.bound(1.0, 10, 3, 0.05).unwrap() > cfg.bound(1.0, 10, 3, 0.05).unwrap());
    }
}
