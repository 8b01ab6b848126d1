use rand::Rng;

use crate::control_variates::{
    AuxModel, CoefficientEstimator, HybridState, ObservationLog, QuantileCache, RefreshConfig,
    SamplingStrategy,
};
use crate::environments::{ActionSet, ProblemInstance, RoundFeedback, RoundNoise};
use crate::numerics::{rank1_update_in_place, solve_spd, Matrix};

use super::{
    AfcLearner, AlgoError, ExtraSampleSite, FeatureMap, LearnerConstants, Variant, VariantConfig,
};

/// Per-feedback ridge fit `ĉ_i = (XᵀX + λ_g I)⁻¹ Xᵀ w_i`.
pub fn fit_history_model(
    samples: &[(Vec<f64>, Vec<f64>)],
    lambda_g: f64,
) -> Result<AuxModel, AlgoError> {
    let Some((x0, w0)) = samples.first() else {
        return Err(AlgoError::InvalidParameter(
            "history needs at least one sample".into(),
        ));
    };
    let (d, q) = (x0.len(), w0.len());
    let mut est = SampledAuxEstimator::new(d, q, SamplingStrategy::MultipleFeedbacks, 1, lambda_g);
    for (x, w) in samples {
        est.add_paired(x, w);
    }
    Ok(AuxModel::estimated_history(
        est.coefficients()?,
        samples.len(),
    ))
}

/// `n` auxiliary-only observations at uniformly chosen actions.
pub fn draw_history_samples<R: Rng + ?Sized>(
    env: &ProblemInstance,
    n: usize,
    rng: &mut R,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..n)
        .map(|_| {
            let set = env.action_set(rng).into_owned();
            let x = set.get(rng.random_range(0..set.len())).to_vec();
            let w = env.sample_aux_only(rng, &x);
            (x, w)
        })
        .collect()
}

/// Running ridge fits of the auxiliary means from paired and extra samples.
///
/// Feedback `i` is fitted on the paired samples plus its own pool of extras.
/// Under IS each feedback has a private pool; under MF all feedback share
/// one pool (equal ratios make the nested pools coincide).
#[derive(Debug, Clone)]
pub struct SampledAuxEstimator {
    strategy: SamplingStrategy,
    ratio: u32,
    lambda: f64,
    grams: Vec<Matrix>,
    rhs: Vec<Vec<f64>>,
}

impl SampledAuxEstimator {
    pub fn new(d: usize, q: usize, strategy: SamplingStrategy, ratio: u32, lambda: f64) -> Self {
        Self {
            strategy,
            ratio,
            lambda,
            grams: vec![Matrix::zeros(d, d); q],
            rhs: vec![vec![0.0; d]; q],
        }
    }

    /// Extra auxiliary-only draws needed per paired sample.
    pub fn extras_per_round(&self) -> usize {
        let per = self.ratio.saturating_sub(1) as usize;
        match self.strategy {
            SamplingStrategy::IndependentSamples => per * self.grams.len(),
            SamplingStrategy::MultipleFeedbacks => per,
        }
    }

    /// Feedback indices that the `k`-th extra draw of a round contributes to.
    fn targets(&self, k: usize) -> std::ops::Range<usize> {
        match self.strategy {
            SamplingStrategy::IndependentSamples => {
                let per = self.ratio.saturating_sub(1).max(1) as usize;
                let i = k / per;
                i..i + 1
            }
            SamplingStrategy::MultipleFeedbacks => 0..self.grams.len(),
        }
    }

    fn add(&mut self, range: std::ops::Range<usize>, x: &[f64], w: &[f64]) {
        for i in range {
            rank1_update_in_place(&mut self.grams[i], x, 1.0).expect("dims");
            for (r, xa) in self.rhs[i].iter_mut().zip(x) {
                *r += xa * w[i];
            }
        }
    }

    pub fn add_paired(&mut self, x: &[f64], w: &[f64]) {
        self.add(0..self.grams.len(), x, w);
    }

    pub fn add_extra(&mut self, k: usize, x: &[f64], w: &[f64]) {
        self.add(self.targets(k), x, w);
    }

    pub fn coefficients(&self) -> Result<Vec<Vec<f64>>, AlgoError> {
        self.grams
            .iter()
            .zip(&self.rhs)
            .map(|(g, r)| {
                let a = g.add(&Matrix::scaled_identity(g.rows(), self.lambda))?;
                Ok(solve_spd(&a, r)?)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub chosen: usize,
    pub feedback: RoundFeedback,
    pub regret: f64,
    /// `min(σ², ν̄)` used for this round's selection.
    pub noise_variance: f64,
}

/// A learner together with its auxiliary-feedback machinery.
#[derive(Debug, Clone)]
pub struct Agent {
    config: VariantConfig,
    learner: AfcLearner,
    log: ObservationLog,
    aux: AuxModel,
    state: HybridState,
    refresh: RefreshConfig,
    sampler: Option<SampledAuxEstimator>,
    quantiles: QuantileCache,
    sigma2: f64,
}

impl Agent {
    /// `history_rng` is only consumed by the history variant.
    pub fn new<R: Rng + ?Sized>(
        env: &ProblemInstance,
        config: &VariantConfig,
        history_rng: &mut R,
    ) -> Result<Self, AlgoError> {
        config.validate()?;
        let d = env.dim();
        let q = env.num_feedback();
        let sigma2 = env.total_variance();
        let constants = LearnerConstants {
            lambda: env.lambda(),
            action_bound: env.action_bound(),
            norm_bound: env.norm_bound(),
            delta: env.delta(),
            sigma2,
        };
        let learner = AfcLearner::new(d, constants, FeatureMap::Identity)?;
        let mut refresh = RefreshConfig::new(sigma2, env.delta()).with_bound(config.bound);
        let mut sampler = None;
        let aux = match &config.variant {
            Variant::Vanilla | Variant::Af => AuxModel::known(env.theta_w()),
            Variant::Biased { bias } => AuxModel::biased(env.theta_w(), *bias),
            Variant::History { samples } => {
                let hist = draw_history_samples(env, *samples, history_rng);
                fit_history_model(&hist, config.aux_ridge)?
            }
            Variant::Sampled {
                strategy, ratio, ..
            } => {
                let ratios = vec![*ratio as f64; q];
                refresh = refresh.with_estimator(CoefficientEstimator::Approximate {
                    strategy: *strategy,
                    ratios: ratios.clone(),
                });
                sampler = Some(SampledAuxEstimator::new(
                    d,
                    q,
                    *strategy,
                    *ratio,
                    config.aux_ridge,
                ));
                AuxModel::sampled(d, *strategy, ratios)
            }
        };
        let state = HybridState::initial(q, &refresh)?;
        Ok(Self {
            config: config.clone(),
            learner,
            log: ObservationLog::new(d, q),
            aux,
            state,
            refresh,
            sampler,
            quantiles: QuantileCache::default(),
            sigma2,
        })
    }

    pub fn config(&self) -> &VariantConfig {
        &self.config
    }

    pub fn name(&self) -> String {
        self.config.name()
    }

    pub fn learner(&self) -> &AfcLearner {
        &self.learner
    }

    pub fn state(&self) -> &HybridState {
        &self.state
    }

    pub fn aux_model(&self) -> &AuxModel {
        &self.aux
    }

    pub fn log(&self) -> &ObservationLog {
        &self.log
    }

    pub fn noise_variance(&self) -> f64 {
        self.state.noise_variance(self.sigma2)
    }

    /// One round with the context, noise and extra draws taken from `rng`
    /// in that order.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        env: &ProblemInstance,
        rng: &mut R,
    ) -> Result<StepOutcome, AlgoError> {
        let actions = env.action_set(rng).into_owned();
        let noise = RoundNoise::draw(rng, env.num_feedback());
        self.step_with(env, &actions, &noise, rng)
    }

    /// One round against a given action set and noise draw; `extra_rng`
    /// supplies auxiliary-only samples for the sampled variants.
    pub fn step_with<R: Rng + ?Sized>(
        &mut self,
        env: &ProblemInstance,
        actions: &ActionSet,
        noise: &RoundNoise,
        extra_rng: &mut R,
    ) -> Result<StepOutcome, AlgoError> {
        let noise_variance = self.noise_variance();
        let chosen = self.learner.select_action(actions, noise_variance);
        let x = actions.get(chosen).to_vec();
        let feedback = env.feedback_with_noise(&x, noise);
        let regret = env.instantaneous_regret(actions, chosen);

        if !self.config.variant.uses_feedback() {
            self.learner.update(&x, feedback.reward)?;
        } else {
            if let Some(sampler) = self.sampler.as_mut() {
                sampler.add_paired(&x, &feedback.aux);
                let site = match &self.config.variant {
                    Variant::Sampled { site, .. } => *site,
                    _ => ExtraSampleSite::ChosenAction,
                };
                for k in 0..sampler.extras_per_round() {
                    let xs = match site {
                        ExtraSampleSite::ChosenAction => x.clone(),
                        ExtraSampleSite::RandomAction => actions
                            .get(extra_rng.random_range(0..actions.len()))
                            .to_vec(),
                    };
                    let w = env.sample_aux_only(extra_rng, &xs);
                    sampler.add_extra(k, &xs, &w);
                }
                self.aux.set_coefficients(sampler.coefficients()?);
            }
            self.log.push(&x, feedback.reward, &feedback.aux)?;
            // f_t is the estimate that chose this round's action.
            let stats = self.log.stats(&self.aux, self.learner.theta());
            self.state =
                HybridState::from_stats_cached(&stats, &self.refresh, &mut self.quantiles)?;
            let b = self.state.reward_aggregate(&stats);
            self.learner.update_with_aggregate(&x, b)?;
        }
        Ok(StepOutcome {
            chosen,
            feedback,
            regret,
            noise_variance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::LearnerKind;
    use crate::environments::{LinearInstanceConfig, NoiseConfig};
    use crate::numerics::{derive_seed, rng_from_seed};

    fn run(env: &ProblemInstance, cfg: &VariantConfig, seed: u64, t: usize) -> (Vec<usize>, f64) {
        let mut hist = rng_from_seed(derive_seed(seed, &[1]));
        let mut agent = Agent::new(env, cfg, &mut hist).unwrap();
        let mut rng = rng_from_seed(seed);
        let mut extra = rng_from_seed(derive_seed(seed, &[2]));
        let mut chosen = Vec::new();
        let mut regret = 0.0;
        for _ in 0..t {
            let set = env.action_set(&mut rng).into_owned();
            let noise = RoundNoise::draw(&mut rng, env.num_feedback());
            let out = agent.step_with(env, &set, &noise, &mut extra).unwrap();
            chosen.push(out.chosen);
            regret += out.regret;
            assert!(out.noise_variance <= env.total_variance());
        }
        (chosen, regret)
    }

    #[test]
    fn history_fit_recovers_noiseless_parameters() {
        let theta = [0.3, -0.7, 1.1, 0.25];
        let mut rng = rng_from_seed(4);
        let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..12)
            .map(|_| {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let w = crate::numerics::dot(&x, &theta);
                (x, vec![w])
            })
            .collect();
        let model = fit_history_model(&samples, 1e-8).unwrap();
        for (a, b) in model.coefficients()[0].iter().zip(theta) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn history_fit_with_few_noisy_samples() {
        let env = ProblemInstance::nonlinear_contextual(3, NoiseConfig::default()).unwrap();
        let mut rng = rng_from_seed(5);
        let hist = draw_history_samples(&env, 5, &mut rng);
        let model = fit_history_model(&hist, 1e-6).unwrap();
        let err: f64 = model.coefficients()[0]
            .iter()
            .zip(&env.theta_w()[0])
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!(err > 0.0 && err.is_finite());
    }

    #[test]
    fn history_error_shrinks_with_samples() {
        let env = ProblemInstance::linear_contextual(8, NoiseConfig::default()).unwrap();
        let mut medians = Vec::new();
        for n in [5, 7, 10, 15, 20] {
            let mut errs: Vec<f64> = (0..50)
                .map(|trial| {
                    let mut rng = rng_from_seed(derive_seed(77, &[trial]));
                    let hist = draw_history_samples(&env, n, &mut rng);
                    let m = fit_history_model(&hist, 1e-6).unwrap();
                    m.coefficients()[0]
                        .iter()
                        .zip(&env.theta_w()[0])
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            medians.push(errs[25]);
        }
        for w in medians.windows(2) {
            assert!(w[1] <= w[0], "{medians:?}");
        }
    }

    #[test]
    fn zero_bias_matches_af() {
        let env = ProblemInstance::linear(11, &LinearInstanceConfig::default()).unwrap();
        let af = run(
            &env,
            &VariantConfig::new(LearnerKind::Oful, Variant::Af),
            3,
            300,
        );
        let be = run(
            &env,
            &VariantConfig::new(LearnerKind::Oful, Variant::Biased { bias: 0.0 }),
            3,
            300,
        );
        assert_eq!(af, be);
    }

    #[test]
    fn gate_closed_matches_vanilla() {
        // A zero-variance auxiliary channel has a singular Gram matrix, so
        // the gate never opens and every variant must replay vanilla.
        let env = ProblemInstance::linear_multi(12, 5, 0.02, &[0.0], 100, 3.0).unwrap();
        let vanilla = run(
            &env,
            &VariantConfig::new(LearnerKind::Oful, Variant::Vanilla),
            9,
            200,
        );
        for v in [
            Variant::Af,
            Variant::Biased { bias: 0.3 },
            Variant::History { samples: 6 },
            Variant::Sampled {
                strategy: SamplingStrategy::IndependentSamples,
                ratio: 2,
                site: ExtraSampleSite::ChosenAction,
            },
        ] {
            let got = run(
                &env,
                &VariantConfig::new(LearnerKind::Oful, v.clone()),
                9,
                200,
            );
            assert_eq!(got, vanilla, "{v:?}");
        }
    }

    #[test]
    fn af_beats_vanilla_on_correlated_instance() {
        let env = ProblemInstance::linear(13, &LinearInstanceConfig::default()).unwrap();
        let mut wins = 0;
        for seed in 0..10 {
            let (_, van) = run(
                &env,
                &VariantConfig::new(LearnerKind::Oful, Variant::Vanilla),
                seed,
                1000,
            );
            let (_, af) = run(
                &env,
                &VariantConfig::new(LearnerKind::Oful, Variant::Af),
                seed,
                1000,
            );
            if af < van {
                wins += 1;
            }
        }
        assert!(wins >= 7, "{wins}");
    }

    #[test]
    fn sampled_extras_per_round() {
        let is = SampledAuxEstimator::new(2, 3, SamplingStrategy::IndependentSamples, 2, 1e-6);
        assert_eq!(is.extras_per_round(), 3);
        assert_eq!(is.targets(2), 2..3);
        let mf = SampledAuxEstimator::new(2, 3, SamplingStrategy::MultipleFeedbacks, 4, 1e-6);
        assert_eq!(mf.extras_per_round(), 3);
        assert_eq!(mf.targets(1), 0..3);
    }
}
