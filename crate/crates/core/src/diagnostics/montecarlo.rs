use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algorithms::SampledAuxEstimator;
use crate::control_variates::{
    a_factor, approximate_multiple_correlation, f_matrix, joint_fit, ridge_fit, AuxModel, CvError,
    ObservationLog, SamplingStrategy,
};
use crate::numerics::{derive_seed, dot, rng_from_seed, standard_normal, Cholesky, Matrix};

use super::{split_covariance, Fault};

/// Fixed-design experiment behind the hybrid-reward variance law.
///
/// The design `X` (t×d), the probe actions and the parameters are drawn once
/// from `seed`; each replication redraws only the noise. The reward noise is
/// split so that `σ² = σ_v² + q σ_w²` and `ρ² = q σ_w² / σ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceLawConfig {
    pub q: usize,
    pub t: usize,
    pub d: usize,
    pub sigma2: f64,
    pub rho2: f64,
    pub reps: usize,
    pub seed: u64,
    /// `None` for exact auxiliary means, otherwise the sampling scheme and
    /// the ratio of total to paired auxiliary samples.
    pub sampling: Option<(SamplingStrategy, u32)>,
    pub probes: usize,
}

impl VarianceLawConfig {
    pub fn exact(q: usize, reps: usize, seed: u64) -> Self {
        Self {
            q,
            t: 50,
            d: 5,
            sigma2: 0.02,
            rho2: 0.5,
            reps,
            seed,
            sampling: None,
            probes: 10,
        }
    }

    pub fn sampled(
        q: usize,
        strategy: SamplingStrategy,
        ratio: u32,
        reps: usize,
        seed: u64,
    ) -> Self {
        Self {
            sampling: Some((strategy, ratio)),
            ..Self::exact(q, reps, seed)
        }
    }

    /// `(1 + a q/(t−q−2)) (1 − ρ_e²) σ²`, with `a = 1`, `ρ_e = ρ` for exact
    /// means.
    pub fn predicted(&self) -> Result<f64, CvError> {
        let q = self.q as f64;
        let t = self.t as f64;
        let (a, rho2) = match self.sampling {
            None => (1.0, self.rho2),
            Some((strategy, r)) => {
                let ratios = vec![r as f64; self.q];
                let f = f_matrix(&ratios, strategy)?;
                let spec = split_covariance(self.q, self.sigma2, self.rho2);
                (
                    a_factor(&ratios, strategy),
                    approximate_multiple_correlation(&spec, &f, self.sigma2)?,
                )
            }
        };
        Ok((1.0 + a * q / (t - q - 2.0)) * (1.0 - rho2) * self.sigma2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceLawReport {
    /// Variance of the fitted mean at each probe divided by its leverage
    /// `pᵀ(XᵀX)⁻¹p`, averaged over probes: the per-sample noise variance the
    /// fit behaves as if it had.
    pub measured: f64,
    pub predicted: f64,
    pub rel_err: f64,
    /// Largest `|mean − truth|` in standard errors, over the hybrid rewards
    /// of the probed observations and the fitted means at the probe actions.
    pub max_bias_se: f64,
    pub probe_count: usize,
    pub reps: usize,
}

struct Design {
    x: Vec<Vec<f64>>,
    probes: Vec<Vec<f64>>,
    theta: Vec<f64>,
    theta_w: Vec<Vec<f64>>,
    leverage: Vec<f64>,
    sv: f64,
    sw: f64,
}

fn design(cfg: &VarianceLawConfig) -> Result<Design, CvError> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &[0]));
    let mut unif = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(lo..hi)).collect()
    };
    let x: Vec<Vec<f64>> = (0..cfg.t).map(|_| unif(cfg.d, -1.0, 1.0)).collect();
    let probes: Vec<Vec<f64>> = (0..cfg.probes).map(|_| unif(cfg.d, -1.0, 1.0)).collect();
    let raw = unif(cfg.d, 0.0, 1.0);
    let n = dot(&raw, &raw).sqrt();
    let theta: Vec<f64> = raw.iter().map(|v| v / n).collect();
    let theta_w: Vec<Vec<f64>> = (0..cfg.q).map(|_| unif(cfg.d, 0.0, 0.3)).collect();
    let mut gram = Matrix::zeros(cfg.d, cfg.d);
    for row in &x {
        crate::numerics::rank1_update_in_place(&mut gram, row, 1.0)?;
    }
    let chol = Cholesky::factor(&gram)?;
    let leverage = probes
        .iter()
        .map(|p| chol.inverse_quad_form(p))
        .collect::<Result<Vec<_>, _>>()?;
    let sw2 = cfg.rho2 * cfg.sigma2 / cfg.q as f64;
    Ok(Design {
        x,
        probes,
        theta,
        theta_w,
        leverage,
        sv: ((1.0 - cfg.rho2) * cfg.sigma2).sqrt(),
        sw: sw2.sqrt(),
    })
}

/// Per-replication output: fitted means at the probes, then hybrid rewards
/// at the probed observations.
fn replicate(
    cfg: &VarianceLawConfig,
    dz: &Design,
    rep: usize,
    fault: Option<Fault>,
) -> Result<Vec<f64>, CvError> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &[1, rep as u64]));
    let q = cfg.q;
    let used = match fault {
        Some(Fault::DofOffByOne) => q - 1,
        None => q,
    };
    let mut log = ObservationLog::new(cfg.d, used.max(1));
    let mut sampler = cfg
        .sampling
        .map(|(s, r)| SampledAuxEstimator::new(cfg.d, used.max(1), s, r, 1e-9));
    let mut ws = Vec::with_capacity(cfg.t);
    for x in &dz.x {
        let ew: Vec<f64> = (0..q).map(|_| dz.sw * standard_normal(&mut rng)).collect();
        let y = dot(x, &dz.theta) + dz.sv * standard_normal(&mut rng) + ew.iter().sum::<f64>();
        let mut w: Vec<f64> = dz
            .theta_w
            .iter()
            .zip(&ew)
            .map(|(t, e)| dot(x, t) + e)
            .collect();
        w.truncate(used.max(1));
        if used == 0 {
            w[0] = 0.0;
        }
        if let Some(s) = sampler.as_mut() {
            s.add_paired(x, &w);
            for k in 0..s.extras_per_round() {
                let extra: Vec<f64> = dz.theta_w[..w.len()]
                    .iter()
                    .map(|t| dot(x, t) + dz.sw * standard_normal(&mut rng))
                    .collect();
                s.add_extra(k, x, &extra);
            }
        }
        log.push(x, y, &w)?;
        ws.push(w);
    }
    let (theta, beta, aux) = if used == 0 {
        let theta = ridge_fit(&log.gram(), &log.reward_sum(), 0.0)?;
        (theta, vec![0.0], AuxModel::known(&[vec![0.0; cfg.d]]))
    } else {
        let (aux, f) = match (&cfg.sampling, &sampler) {
            (Some((strategy, r)), Some(s)) => {
                let ratios = vec![*r as f64; used];
                let mut aux = AuxModel::sampled(cfg.d, *strategy, ratios.clone());
                aux.set_coefficients(s.coefficients().map_err(|_| CvError::NonFinite)?);
                (aux, Some(f_matrix(&ratios, *strategy)?))
            }
            _ => (AuxModel::known(&dz.theta_w[..used]), None),
        };
        let fit = joint_fit(&log, &aux, f.as_ref(), 0.0, 1e-13, 500)?;
        (fit.theta, fit.beta, aux)
    };
    let mut out: Vec<f64> = dz.probes.iter().map(|p| dot(p, &theta)).collect();
    for s in probe_rows(cfg) {
        let g = aux.predict(&dz.x[s]);
        let z = log.records()[s].y
            - ws[s]
                .iter()
                .zip(&g)
                .zip(&beta)
                .map(|((w, g), b)| b * (w - g))
                .sum::<f64>();
        out.push(z);
    }
    Ok(out)
}

fn probe_rows(cfg: &VarianceLawConfig) -> impl Iterator<Item = usize> {
    let step = (cfg.t / cfg.probes).max(1);
    (0..cfg.t).step_by(step).take(cfg.probes)
}

/// Monte Carlo check of the hybrid-reward variance law and unbiasedness.
pub fn variance_law(
    cfg: &VarianceLawConfig,
    fault: Option<Fault>,
) -> Result<VarianceLawReport, CvError> {
    if cfg.reps < 2 || cfg.q == 0 || cfg.t <= cfg.q + cfg.d + 2 {
        return Err(CvError::TooFewObservations {
            needed: cfg.q + cfg.d + 3,
            have: cfg.t,
        });
    }
    let dz = design(cfg)?;
    let draws: Vec<Vec<f64>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| replicate(cfg, &dz, rep, fault))
        .collect::<Result<_, _>>()?;
    let n = cfg.reps as f64;
    let width = draws[0].len();
    let mut mean = vec![0.0; width];
    for row in &draws {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; width];
    for row in &draws {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m).powi(2) / (n - 1.0);
        }
    }
    let np = cfg.probes;
    let measured = (0..np).map(|i| var[i] / dz.leverage[i]).sum::<f64>() / np as f64;
    let predicted = cfg.predicted()?;
    let truth: Vec<f64> = dz
        .probes
        .iter()
        .chain(probe_rows(cfg).map(|s| &dz.x[s]))
        .map(|x| dot(x, &dz.theta))
        .collect();
    let max_bias_se = (0..width)
        .map(|i| (mean[i] - truth[i]).abs() / (var[i] / n).sqrt())
        .fold(0.0, f64::max);
    Ok(VarianceLawReport {
        measured,
        predicted,
        rel_err: measured / predicted - 1.0,
        max_bias_se,
        probe_count: width,
        reps: cfg.reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicted_values() {
        let c = VarianceLawConfig::exact(1, 10, 0);
        assert!((c.predicted().unwrap() - (1.0 + 1.0 / 47.0) * 0.5 * 0.02).abs() < 1e-15);
        let c = VarianceLawConfig::sampled(1, SamplingStrategy::MultipleFeedbacks, 2, 10, 0);
        // ρ_e² = ρ²/2, a = 1/2.
        assert!((c.predicted().unwrap() - (1.0 + 0.5 / 47.0) * 0.75 * 0.02).abs() < 1e-15);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let cfg = VarianceLawConfig::sampled(2, SamplingStrategy::IndependentSamples, 2, 64, 3);
        let a = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| variance_law(&cfg, None).unwrap());
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| variance_law(&cfg, None).unwrap());
        assert_eq!(a, b);
    }
}
