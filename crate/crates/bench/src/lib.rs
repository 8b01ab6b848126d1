//! Fixtures shared by the benchmarks.

use cvbandit::control_variates::ObservationLog;
use cvbandit::environments::LinearInstanceConfig;
use cvbandit::numerics::{rng_from_seed, standard_normal, BanditRng};
use cvbandit::{Agent, LearnerKind, ProblemInstance, SamplingStrategy, Variant, VariantConfig};

pub fn linear_instance() -> ProblemInstance {
    ProblemInstance::linear(7, &LinearInstanceConfig::default()).expect("default instance")
}

pub fn variants() -> Vec<VariantConfig> {
    [
        Variant::Vanilla,
        Variant::Af,
        Variant::Sampled {
            strategy: SamplingStrategy::MultipleFeedbacks,
            ratio: 2,
            site: Default::default(),
        },
    ]
    .into_iter()
    .map(|v| VariantConfig::new(LearnerKind::Oful, v))
    .collect()
}

/// An agent that has already played `rounds` rounds, so the benchmark sees a
/// full log and an active control variate.
pub fn warmed_agent(
    env: &ProblemInstance,
    config: &VariantConfig,
    rounds: usize,
) -> (Agent, BanditRng) {
    let mut rng = rng_from_seed(11);
    let mut agent = Agent::new(env, config, &mut rng).expect("valid config");
    for _ in 0..rounds {
        agent.step(env, &mut rng).expect("step");
    }
    (agent, rng)
}

/// A `q`-feedback log of `t` rows in `d` dimensions with correlated reward.
pub fn synthetic_log(t: usize, d: usize, q: usize) -> ObservationLog {
    let mut rng = rng_from_seed(3);
    let mut log = ObservationLog::new(d, q);
    for _ in 0..t {
        let x: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
        let w: Vec<f64> = (0..q).map(|_| standard_normal(&mut rng)).collect();
        let y = x.iter().sum::<f64>() + w.iter().sum::<f64>() + standard_normal(&mut rng);
        log.push(&x, y, &w).expect("dims");
    }
    log
}
