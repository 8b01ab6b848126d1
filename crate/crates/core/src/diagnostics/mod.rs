//! Monte Carlo property checks for the estimators and the confidence set.
//!
//! These back both the `verify` command and the acceptance tests. Every
//! check is deterministic given its seed and independent of the thread count.

mod montecarlo;

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algorithms::{Agent, LearnerKind, Variant, VariantConfig};
use crate::control_variates::{
    approximate_multiple_correlation, estimate_beta, estimate_beta_approx, f_matrix, AuxModel,
    CovarianceSpec, ObservationLog, SamplingStrategy,
};
use crate::environments::{LinearInstanceConfig, ProblemInstance};
use crate::numerics::{derive_seed, rng_from_seed, standard_normal, Matrix};

pub use montecarlo::{variance_law, VarianceLawConfig, VarianceLawReport};

/// Deliberate defects for negative-control runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Fit one control fewer than the law being checked assumes, i.e. the
    /// `q` degrees of freedom are off by one.
    DofOffByOne,
}

/// Monte Carlo budget and tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub variance_reps: usize,
    pub exact_tol: f64,
    pub sampled_tol: f64,
    pub coverage_runs: usize,
    pub coverage_rounds: usize,
}

impl Budget {
    pub fn full() -> Self {
        Self {
            variance_reps: 10_000,
            exact_tol: 0.05,
            sampled_tol: 0.07,
            coverage_runs: 500,
            coverage_rounds: 500,
        }
    }

    /// Small enough for a few seconds; tolerances widened to match.
    pub fn quick() -> Self {
        Self {
            variance_reps: 2_000,
            exact_tol: 0.12,
            sampled_tol: 0.15,
            coverage_runs: 100,
            coverage_rounds: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: u128,
}

impl CheckOutcome {
    fn timed(name: impl Into<String>, f: impl FnOnce() -> (bool, String)) -> Self {
        let start = Instant::now();
        let (passed, detail) = f();
        Self {
            name: name.into(),
            passed,
            detail,
            elapsed_ms: start.elapsed().as_millis(),
        }
    }
}

/// `ρ_e²` for every ratio, in the given order.
pub fn convergence_sequence(
    strategy: SamplingStrategy,
    spec: &CovarianceSpec,
    sigma2: f64,
    ratios: &[f64],
) -> Result<Vec<f64>, crate::control_variates::CvError> {
    let q = spec.sigma_yw.len();
    ratios
        .iter()
        .map(|&r| approximate_multiple_correlation(spec, &f_matrix(&vec![r; q], strategy)?, sigma2))
        .collect()
}

/// Feedback covariance with `q` independent channels splitting `ρ²σ²`.
pub fn split_covariance(q: usize, sigma2: f64, rho2: f64) -> CovarianceSpec {
    let s = rho2 * sigma2 / q as f64;
    CovarianceSpec {
        sigma_ww: Matrix::from_diagonal(&vec![s; q]),
        sigma_yw: vec![s; q],
    }
}

/// Largest deviation between the approximate estimator with an all-ones
/// correction and the plain estimator, over random logs; and the same for
/// `q = 1` across `ratios`.
pub fn estimator_equivalence(seed: u64, logs: usize, ratios: &[f64]) -> (f64, f64) {
    let mut rng = rng_from_seed(seed);
    let mut ones_gap: f64 = 0.0;
    let mut scalar_gap: f64 = 0.0;
    for _ in 0..logs {
        for q in 1..=3 {
            let d = 3;
            let mut log = ObservationLog::new(d, q);
            for _ in 0..30 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let w: Vec<f64> = (0..q).map(|_| standard_normal(&mut rng)).collect();
                let y = w.iter().sum::<f64>() * 0.5 + standard_normal(&mut rng);
                log.push(&x, y, &w).expect("dims");
            }
            let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let aux = AuxModel::known(&vec![vec![0.1; d]; q]);
            let stats = log.stats(&aux, &theta);
            let exact = estimate_beta(&stats).expect("nonsingular");
            let ones =
                estimate_beta_approx(&stats, &Matrix::filled(q, q, 1.0)).expect("nonsingular");
            for (a, b) in exact.iter().zip(&ones) {
                ones_gap = ones_gap.max((a - b).abs() / (1.0 + a.abs()));
            }
            if q == 1 {
                for &r in ratios {
                    for s in [
                        SamplingStrategy::IndependentSamples,
                        SamplingStrategy::MultipleFeedbacks,
                    ] {
                        let f = f_matrix(&[r], s).expect("valid ratio");
                        let b = estimate_beta_approx(&stats, &f).expect("nonsingular")[0];
                        scalar_gap = scalar_gap.max((b - exact[0]).abs() / (1.0 + exact[0].abs()));
                    }
                }
            }
        }
    }
    (ones_gap, scalar_gap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageReport {
    pub runs: usize,
    pub covered: usize,
    pub rounds: usize,
}

impl CoverageReport {
    pub fn fraction(&self) -> f64 {
        self.covered as f64 / self.runs as f64
    }
}

/// Runs OFUL-AF for `rounds` rounds on `runs` fresh linear instances and
/// counts how often `θ⋆` lies in the final confidence ellipsoid.
pub fn coverage(seed: u64, runs: usize, rounds: usize) -> CoverageReport {
    let config = VariantConfig::new(LearnerKind::Oful, Variant::Af);
    let covered = (0..runs)
        .into_par_iter()
        .filter(|&run| {
            let env = ProblemInstance::linear(
                derive_seed(seed, &[1, run as u64]),
                &LinearInstanceConfig::default(),
            )
            .expect("default instance");
            let mut rng = rng_from_seed(derive_seed(seed, &[2, run as u64]));
            let mut agent = Agent::new(&env, &config, &mut rng).expect("valid config");
            for _ in 0..rounds {
                agent.step(&env, &mut rng).expect("step");
            }
            let radius = agent.learner().confidence_radius(agent.noise_variance());
            agent.learner().ellipsoid_distance(env.theta_star()) <= radius
        })
        .count();
    CoverageReport {
        runs,
        covered,
        rounds,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub budget: Budget,
    pub fault: Option<Fault>,
}

impl VerifyOptions {
    pub fn new(seed: u64, quick: bool) -> Self {
        Self {
            seed,
            budget: if quick {
                Budget::quick()
            } else {
                Budget::full()
            },
            fault: None,
        }
    }
}

fn describe(r: &VarianceLawReport, tol: f64) -> String {
    format!(
        "measured {:.6} predicted {:.6} rel err {:+.2}% (tol {:.0}%)",
        r.measured,
        r.predicted,
        100.0 * r.rel_err,
        100.0 * tol
    )
}

fn variance_check(cfg: VarianceLawConfig, tol: f64, fault: Option<Fault>) -> (bool, String) {
    match variance_law(&cfg, fault) {
        Ok(r) => (r.rel_err.abs() <= tol, describe(&r, tol)),
        Err(e) => (false, format!("error: {e}")),
    }
}

/// The full property suite, in a fixed order.
pub fn run_all(opts: &VerifyOptions) -> Vec<CheckOutcome> {
    let b = opts.budget;
    let mut out = Vec::new();
    for q in [1, 3] {
        let cfg =
            VarianceLawConfig::exact(q, b.variance_reps, derive_seed(opts.seed, &[10, q as u64]));
        let start = Instant::now();
        let report = variance_law(&cfg, opts.fault);
        let elapsed_ms = start.elapsed().as_millis();
        let (var_ok, var_detail, bias_ok, bias_detail) = match &report {
            Ok(r) => (
                r.rel_err.abs() <= b.exact_tol,
                describe(r, b.exact_tol),
                r.max_bias_se < 3.0,
                format!(
                    "max |mean - truth| = {:.2} standard errors over {} probes",
                    r.max_bias_se, r.probe_count
                ),
            ),
            Err(e) => (false, format!("error: {e}"), false, format!("error: {e}")),
        };
        out.push(CheckOutcome {
            name: format!("variance law, exact controls, q={q}"),
            passed: var_ok,
            detail: var_detail,
            elapsed_ms,
        });
        out.push(CheckOutcome {
            name: format!("unbiased hybrid rewards, q={q}"),
            passed: bias_ok,
            detail: bias_detail,
            elapsed_ms: 0,
        });
    }
    for strategy in [
        SamplingStrategy::IndependentSamples,
        SamplingStrategy::MultipleFeedbacks,
    ] {
        for q in [1, 2] {
            let cfg = VarianceLawConfig::sampled(
                q,
                strategy,
                2,
                b.variance_reps,
                derive_seed(opts.seed, &[11, q as u64, strategy as u64]),
            );
            out.push(CheckOutcome::timed(
                format!(
                    "variance law, {} controls r=2, q={q}",
                    strategy.short_name()
                ),
                || variance_check(cfg, b.sampled_tol, opts.fault),
            ));
        }
    }
    out.push(CheckOutcome::timed(
        "estimated-control correlation converges in r",
        || {
            let ratios = [2.0, 4.0, 16.0, 256.0, 1e6];
            let mut ok = true;
            let mut worst: f64 = 0.0;
            for q in [1, 2, 3] {
                let spec = split_covariance(q, 0.02, 0.5);
                for s in [
                    SamplingStrategy::IndependentSamples,
                    SamplingStrategy::MultipleFeedbacks,
                ] {
                    let seq = convergence_sequence(s, &spec, 0.02, &ratios).expect("valid");
                    ok &= seq.windows(2).all(|w| w[1] >= w[0]);
                    let gap = (seq[seq.len() - 1] - 0.5).abs();
                    worst = worst.max(gap);
                }
            }
            (
                ok && worst < 1e-5,
                format!("monotone: {ok}, |rho_e^2 - rho^2| at r=1e6: {worst:.2e}"),
            )
        },
    ));
    out.push(CheckOutcome::timed(
        "approximate estimator reduces to exact",
        || {
            let (ones, scalar) =
                estimator_equivalence(derive_seed(opts.seed, &[12]), 20, &[1.5, 2.0, 4.0, 1e3]);
            (
                ones <= 1e-12 && scalar <= 1e-12,
                format!("all-ones gap {ones:.1e}, q=1 gap {scalar:.1e}"),
            )
        },
    ));
    out.push(CheckOutcome::timed("confidence ellipsoid coverage", || {
        let r = coverage(
            derive_seed(opts.seed, &[13]),
            b.coverage_runs,
            b.coverage_rounds,
        );
        (
            r.fraction() >= 0.90,
            format!(
                "{}/{} runs covered at t={} (need 90%)",
                r.covered, r.runs, r.rounds
            ),
        )
    }));
    out
}
