//! Synthetic bandit environments whose reward is the sum of a private
//! component and one or more auxiliary-feedback components.
//!
//! For an action feature `x` the environment emits
//!
//! ```text
//! w_i = xᵀθ_w,i + ε_w,i            (auxiliary feedback i)
//! y   = xᵀθ_v + ε_v + Σ_i w_i      (reward)
//! ```
//!
//! with `θ⋆ = θ_v + Σ θ_w,i` split over disjoint coordinates. Because the
//! reward reuses the same `ε_w` draws, reward and feedback are correlated with
//! multiple correlation `ρ² = Σσ²_w,i / (σ_v² + Σσ²_w,i)`.

mod actions;

use std::borrow::Cow;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{dot, norm2, rng_from_seed, standard_normal, Matrix};

pub use actions::{polynomial_features, polynomial_sign_actions, sign_flip_actions, ActionSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid instance parameter: {0}")]
    InvalidParameter(String),
    #[error("instance json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettingKind {
    Linear,
    LinearContextual,
    NonlinearContextual,
}

impl SettingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SettingKind::Linear => "linear",
            SettingKind::LinearContextual => "linear-contextual",
            SettingKind::NonlinearContextual => "nonlinear-contextual",
        }
    }
}

/// Box from which raw contexts are drawn uniformly each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    pub raw_dim: usize,
    pub low: f64,
    pub high: f64,
}

impl Default for ContextSpec {
    fn default() -> Self {
        Self {
            raw_dim: 2,
            low: -1.0,
            high: 1.0,
        }
    }
}

/// Parameters of the linear-bandit instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearInstanceConfig {
    pub d: usize,
    pub sigma_v2: f64,
    pub sigma_w2: f64,
    pub num_actions: usize,
    /// Half-width of the coordinate box actions are sampled from.
    pub coordinate_bound: f64,
}

impl Default for LinearInstanceConfig {
    fn default() -> Self {
        Self {
            d: 5,
            sigma_v2: 0.01,
            sigma_w2: 0.01,
            num_actions: 100,
            coordinate_bound: 3.0,
        }
    }
}

/// Noise variances shared by the contextual instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub sigma_v2: f64,
    pub sigma_w2: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_v2: 0.01,
            sigma_w2: 0.01,
        }
    }
}

/// Environment definition. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemInstance {
    kind: SettingKind,
    d: usize,
    theta_star: Vec<f64>,
    theta_v: Vec<f64>,
    theta_w: Vec<Vec<f64>>,
    sigma_v2: f64,
    sigma_w2: Vec<f64>,
    #[serde(rename = "L")]
    action_bound: f64,
    #[serde(rename = "S")]
    norm_bound: f64,
    lambda: f64,
    delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    actions: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    context_spec: Option<ContextSpec>,
    seed: u64,
    /// Feedback noise drawn independently of the reward noise (`ρ = 0`).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    independent_feedback: bool,
    #[serde(skip)]
    action_cache: Option<ActionSet>,
}

/// Standard-normal draws for one round, scaled by the instance variances when
/// applied. Drawing them up front keeps noise streams aligned between learners
/// that pick different actions.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundNoise {
    pub reward: f64,
    pub aux: Vec<f64>,
}

impl RoundNoise {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, q: usize) -> Self {
        let reward = standard_normal(rng);
        let aux = (0..q).map(|_| standard_normal(rng)).collect();
        Self { reward, aux }
    }

    pub fn zero(q: usize) -> Self {
        Self {
            reward: 0.0,
            aux: vec![0.0; q],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundFeedback {
    pub reward: f64,
    pub aux: Vec<f64>,
}

fn unit_positive_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let n = norm2(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Splits `θ⋆` over `q + 1` components by coordinate: coordinate `j` goes to
/// component `j mod (q + 1)`, where components `0..q` are the auxiliary
/// parameters and component `q` is the private reward part. With `q = 1`
/// this puts coordinates 1, 3, 5, … (1-based) in `θ_w` and 2, 4, … in `θ_v`.
fn alternating_split(theta: &[f64], q: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = theta.len();
    let mut theta_v = vec![0.0; d];
    let mut theta_w = vec![vec![0.0; d]; q];
    for (j, &v) in theta.iter().enumerate() {
        let c = j % (q + 1);
        if c == q {
            theta_v[j] = v;
        } else {
            theta_w[c][j] = v;
        }
    }
    (theta_v, theta_w)
}

fn check_variance(name: &str, v: f64) -> Result<(), EnvError> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(EnvError::InvalidParameter(format!(
            "{name} must be a finite non-negative number, got {v}"
        )));
    }
    Ok(())
}

impl ProblemInstance {
    /// Linear bandit with one auxiliary feedback: `K` actions sampled once
    /// from the box `(-c, c)^d`, unit-norm positive `θ⋆`.
    pub fn linear(seed: u64, cfg: &LinearInstanceConfig) -> Result<Self, EnvError> {
        Self::linear_multi(
            seed,
            cfg.d,
            cfg.sigma_v2,
            &[cfg.sigma_w2],
            cfg.num_actions,
            cfg.coordinate_bound,
        )
    }

    /// Linear bandit with `q = sigma_w2.len()` auxiliary feedback channels,
    /// each with its own independent noise.
    pub fn linear_multi(
        seed: u64,
        d: usize,
        sigma_v2: f64,
        sigma_w2: &[f64],
        num_actions: usize,
        coordinate_bound: f64,
    ) -> Result<Self, EnvError> {
        if num_actions < 2 {
            return Err(EnvError::InvalidParameter(format!(
                "num_actions must be >= 2, got {num_actions}"
            )));
        }
        if d == 0 {
            return Err(EnvError::InvalidParameter("d must be >= 1".into()));
        }
        if sigma_w2.is_empty() {
            return Err(EnvError::InvalidParameter(
                "at least one auxiliary feedback is required".into(),
            ));
        }
        if !(coordinate_bound > 0.0) {
            return Err(EnvError::InvalidParameter(
                "coordinate_bound must be positive".into(),
            ));
        }
        check_variance("sigma_v2", sigma_v2)?;
        for &s in sigma_w2 {
            check_variance("sigma_w2", s)?;
        }
        let mut rng = rng_from_seed(seed);
        let theta_star = unit_positive_vector(&mut rng, d);
        let actions: Vec<Vec<f64>> = (0..num_actions)
            .map(|_| {
                (0..d)
                    .map(|_| rng.random_range(-coordinate_bound..coordinate_bound))
                    .collect()
            })
            .collect();
        let (theta_v, theta_w) = alternating_split(&theta_star, sigma_w2.len());
        let mut inst = Self {
            kind: SettingKind::Linear,
            d,
            theta_star,
            theta_v,
            theta_w,
            sigma_v2,
            sigma_w2: sigma_w2.to_vec(),
            action_bound: 2.236,
            norm_bound: 1.0,
            lambda: 0.01,
            delta: 0.05,
            actions: Some(actions),
            context_spec: None,
            seed,
            independent_feedback: false,
            action_cache: None,
        };
        inst.rebuild_cache();
        Ok(inst)
    }

    /// Two-dimensional contexts in `(-1, 1)²`, four sign-flipped actions per
    /// round.
    pub fn linear_contextual(seed: u64, noise: NoiseConfig) -> Result<Self, EnvError> {
        Self::contextual(seed, SettingKind::LinearContextual, 2, 1.41, noise)
    }

    /// Degree-2 polynomial features `(x₁, x₂, x₁², x₁x₂)` of a 2-d context,
    /// six signed actions per round.
    pub fn nonlinear_contextual(seed: u64, noise: NoiseConfig) -> Result<Self, EnvError> {
        Self::contextual(seed, SettingKind::NonlinearContextual, 4, 2.0, noise)
    }

    fn contextual(
        seed: u64,
        kind: SettingKind,
        d: usize,
        bound: f64,
        noise: NoiseConfig,
    ) -> Result<Self, EnvError> {
        check_variance("sigma_v2", noise.sigma_v2)?;
        check_variance("sigma_w2", noise.sigma_w2)?;
        let mut rng = rng_from_seed(seed);
        let theta_star = unit_positive_vector(&mut rng, d);
        let (theta_v, theta_w) = alternating_split(&theta_star, 1);
        Ok(Self {
            kind,
            d,
            theta_star,
            theta_v,
            theta_w,
            sigma_v2: noise.sigma_v2,
            sigma_w2: vec![noise.sigma_w2],
            action_bound: bound,
            norm_bound: 1.0,
            lambda: 0.01,
            delta: 0.05,
            actions: None,
            context_spec: Some(ContextSpec::default()),
            seed,
            independent_feedback: false,
            action_cache: None,
        })
    }

    /// Builds an instance of `kind` with default constants for that setting.
    pub fn of_kind(kind: SettingKind, seed: u64, noise: NoiseConfig) -> Result<Self, EnvError> {
        match kind {
            SettingKind::Linear => Self::linear(
                seed,
                &LinearInstanceConfig {
                    sigma_v2: noise.sigma_v2,
                    sigma_w2: noise.sigma_w2,
                    ..Default::default()
                },
            ),
            SettingKind::LinearContextual => Self::linear_contextual(seed, noise),
            SettingKind::NonlinearContextual => Self::nonlinear_contextual(seed, noise),
        }
    }

    /// Replaces the parameter split (and `θ⋆ = θ_v + Σθ_w`). Used for
    /// hand-built instances in tests and diagnostics.
    pub fn with_parameters(
        mut self,
        theta_v: Vec<f64>,
        theta_w: Vec<Vec<f64>>,
    ) -> Result<Self, EnvError> {
        if theta_v.len() != self.d
            || theta_w.iter().any(|t| t.len() != self.d)
            || theta_w.len() != self.sigma_w2.len()
        {
            return Err(EnvError::InvalidParameter(
                "parameter dimensions do not match instance".into(),
            ));
        }
        let mut star = theta_v.clone();
        for tw in &theta_w {
            for (s, v) in star.iter_mut().zip(tw) {
                *s += v;
            }
        }
        self.theta_star = star;
        self.theta_v = theta_v;
        self.theta_w = theta_w;
        Ok(self)
    }

    /// Replaces the fixed action list of a linear instance.
    pub fn with_actions(mut self, actions: Vec<Vec<f64>>) -> Result<Self, EnvError> {
        if self.kind != SettingKind::Linear {
            return Err(EnvError::InvalidParameter(
                "only linear instances have a fixed action list".into(),
            ));
        }
        if actions.len() < 2 || actions.iter().any(|a| a.len() != self.d) {
            return Err(EnvError::InvalidParameter(
                "actions must be >= 2 vectors of length d".into(),
            ));
        }
        self.actions = Some(actions);
        self.rebuild_cache();
        Ok(self)
    }

    /// Overrides the confidence-width constants `(L, S, λ, δ)`.
    pub fn with_constants(
        mut self,
        action_bound: f64,
        norm_bound: f64,
        lambda: f64,
        delta: f64,
    ) -> Self {
        self.action_bound = action_bound;
        self.norm_bound = norm_bound;
        self.lambda = lambda;
        self.delta = delta;
        self
    }

    fn rebuild_cache(&mut self) {
        self.action_cache = self.actions.as_ref().map(|a| ActionSet::new(a.clone()));
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidParameter(m));
        if self.d == 0 {
            return bad("d must be >= 1".into());
        }
        if self.theta_star.len() != self.d || self.theta_v.len() != self.d {
            return bad("theta_star / theta_v must have length d".into());
        }
        if self.theta_w.is_empty() || self.theta_w.len() != self.sigma_w2.len() {
            return bad(
                "theta_w and sigma_w2 must list the same (non-zero) number of feedback channels"
                    .into(),
            );
        }
        if self.theta_w.iter().any(|t| t.len() != self.d) {
            return bad("every theta_w vector must have length d".into());
        }
        if norm2(&self.theta_star) > self.norm_bound + 1e-9 {
            return bad(format!("||theta_star|| exceeds S = {}", self.norm_bound));
        }
        for j in 0..self.d {
            let sum = self.theta_v[j] + self.theta_w.iter().map(|t| t[j]).sum::<f64>();
            if (sum - self.theta_star[j]).abs() > 1e-9 {
                return bad("theta_star must equal theta_v + sum(theta_w)".into());
            }
        }
        check_variance("sigma_v2", self.sigma_v2)?;
        for &s in &self.sigma_w2 {
            check_variance("sigma_w2", s)?;
        }
        if !(self.lambda > 0.0)
            || !(self.delta > 0.0 && self.delta < 1.0)
            || !(self.action_bound >= 0.0)
        {
            return bad("lambda must be > 0, delta in (0,1), L >= 0".into());
        }
        match self.kind {
            SettingKind::Linear => match &self.actions {
                Some(a) if a.len() >= 2 && a.iter().all(|x| x.len() == self.d) => {}
                _ => return bad("linear instances need >= 2 actions of length d".into()),
            },
            _ => {
                let spec = self.context_spec.as_ref();
                if spec.map_or(true, |c| c.raw_dim != 2 || !(c.low < c.high)) {
                    return bad(
                        "contextual instances need a 2-d context_spec with low < high".into(),
                    );
                }
                let expected = if self.kind == SettingKind::LinearContextual {
                    2
                } else {
                    4
                };
                if self.d != expected {
                    return bad(format!(
                        "{} instances have d = {expected}",
                        self.kind.as_str()
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let mut inst: Self =
            serde_json::from_str(text).map_err(|e| EnvError::Json(e.to_string()))?;
        inst.validate()?;
        inst.rebuild_cache();
        Ok(inst)
    }

    pub fn kind(&self) -> SettingKind {
        self.kind
    }
    pub fn dim(&self) -> usize {
        self.d
    }
    /// Number of auxiliary feedback channels `q`.
    pub fn num_feedback(&self) -> usize {
        self.theta_w.len()
    }
    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }
    pub fn theta_v(&self) -> &[f64] {
        &self.theta_v
    }
    pub fn theta_w(&self) -> &[Vec<f64>] {
        &self.theta_w
    }
    pub fn sigma_v2(&self) -> f64 {
        self.sigma_v2
    }
    pub fn sigma_w2(&self) -> &[f64] {
        &self.sigma_w2
    }
    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn context_spec(&self) -> Option<&ContextSpec> {
        self.context_spec.as_ref()
    }

    /// Reward noise variance `σ² = σ_v² + Σσ²_w,i`, or `σ_v²` when the
    /// feedback noise is independent of the reward.
    pub fn total_variance(&self) -> f64 {
        if self.independent_feedback {
            return self.sigma_v2;
        }
        self.sigma_v2 + self.sigma_w2.iter().sum::<f64>()
    }

    /// Same means, but the feedback noise no longer enters the reward, so the
    /// feedback carries no information about the reward noise.
    pub fn with_independent_feedback(mut self) -> Self {
        self.independent_feedback = true;
        self
    }

    pub fn independent_feedback(&self) -> bool {
        self.independent_feedback
    }

    /// Multiple correlation between the reward and its feedback,
    /// `sqrt(Σσ²_w / (σ_v² + Σσ²_w))`. Zero for a noiseless instance.
    pub fn true_correlation(&self) -> f64 {
        let total = self.total_variance();
        if total <= 0.0 || self.independent_feedback {
            return 0.0;
        }
        (self.sigma_w2.iter().sum::<f64>() / total).sqrt()
    }

    /// Feedback covariance `Σ_ww` (diagonal: channels have independent noise).
    pub fn sigma_ww(&self) -> Matrix {
        Matrix::from_diagonal(&self.sigma_w2)
    }

    /// Reward/feedback covariances `σ_yw`.
    pub fn sigma_yw(&self) -> Vec<f64> {
        if self.independent_feedback {
            return vec![0.0; self.sigma_w2.len()];
        }
        self.sigma_w2.clone()
    }

    pub fn mean_reward(&self, x: &[f64]) -> f64 {
        dot(x, &self.theta_star)
    }

    /// `g_i(x) = xᵀθ_w,i` for every channel.
    pub fn aux_mean(&self, x: &[f64]) -> Vec<f64> {
        self.theta_w.iter().map(|t| dot(x, t)).collect()
    }

    /// Action set for one round. Linear instances return their fixed list
    /// without touching `rng`; contextual instances draw a fresh context.
    pub fn action_set<R: Rng + ?Sized>(&self, rng: &mut R) -> Cow<'_, ActionSet> {
        match self.kind {
            SettingKind::Linear => Cow::Borrowed(
                self.action_cache
                    .as_ref()
                    .expect("linear instance has actions"),
            ),
            SettingKind::LinearContextual | SettingKind::NonlinearContextual => {
                let spec = self.context_spec.clone().unwrap_or_default();
                let raw = [
                    rng.random_range(spec.low..spec.high),
                    rng.random_range(spec.low..spec.high),
                ];
                Cow::Owned(self.actions_for_context(raw))
            }
        }
    }

    /// Deterministic action set for a given raw context.
    pub fn actions_for_context(&self, raw: [f64; 2]) -> ActionSet {
        match self.kind {
            SettingKind::Linear => self
                .action_cache
                .clone()
                .expect("linear instance has actions"),
            SettingKind::LinearContextual => sign_flip_actions(raw),
            SettingKind::NonlinearContextual => polynomial_sign_actions(raw),
        }
    }

    /// Applies pre-drawn standard-normal noise at action `x`.
    pub fn feedback_with_noise(&self, x: &[f64], noise: &RoundNoise) -> RoundFeedback {
        let sv = self.sigma_v2.sqrt();
        let aux: Vec<f64> = self
            .theta_w
            .iter()
            .zip(&self.sigma_w2)
            .zip(&noise.aux)
            .map(|((t, s2), z)| dot(x, t) + s2.sqrt() * z)
            .collect();
        let aux_part: f64 = if self.independent_feedback {
            self.theta_w.iter().map(|t| dot(x, t)).sum()
        } else {
            aux.iter().sum()
        };
        let reward = dot(x, &self.theta_v) + sv * noise.reward + aux_part;
        RoundFeedback { reward, aux }
    }

    /// Reward and feedback at `x`; the reward reuses the feedback noise.
    pub fn pull<R: Rng + ?Sized>(&self, rng: &mut R, x: &[f64]) -> RoundFeedback {
        let noise = RoundNoise::draw(rng, self.num_feedback());
        self.feedback_with_noise(x, &noise)
    }

    /// A fresh auxiliary-only observation at `x` with independent noise.
    pub fn sample_aux_only<R: Rng + ?Sized>(&self, rng: &mut R, x: &[f64]) -> Vec<f64> {
        self.aux_with_noise(
            x,
            &(0..self.num_feedback())
                .map(|_| standard_normal(rng))
                .collect::<Vec<_>>(),
        )
    }

    pub fn aux_with_noise(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        self.theta_w
            .iter()
            .zip(&self.sigma_w2)
            .zip(z)
            .map(|((t, s2), z)| dot(x, t) + s2.sqrt() * z)
            .collect()
    }

    /// Lowest index attaining the largest mean reward.
    pub fn optimal_index(&self, set: &ActionSet) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, a) in set.iter().enumerate() {
            let v = self.mean_reward(a);
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        best
    }

    /// Gap between the best mean in `set` and the mean of `set[chosen]`.
    pub fn instantaneous_regret(&self, set: &ActionSet, chosen: usize) -> f64 {
        let best = set
            .iter()
            .map(|a| self.mean_reward(a))
            .fold(f64::NEG_INFINITY, f64::max);
        (best - self.mean_reward(set.get(chosen))).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng_from_seed;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn linear_defaults() {
        let inst = ProblemInstance::linear(3, &LinearInstanceConfig::default()).unwrap();
        assert!((inst.true_correlation() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((norm2(inst.theta_star()) - 1.0).abs() < 1e-12);
        assert!(inst.theta_star().iter().all(|&v| v > 0.0 && v < 1.0));
        // alternating support: θ_v = (0, θ2, 0, θ4, 0), θ_w = (θ1, 0, θ3, 0, θ5)
        let ts = inst.theta_star();
        assert_eq!(inst.theta_v(), &[0.0, ts[1], 0.0, ts[3], 0.0]);
        assert_eq!(inst.theta_w()[0], vec![ts[0], 0.0, ts[2], 0.0, ts[4]]);
        assert_eq!(inst.action_set(&mut rng_from_seed(0)).len(), 100);
        assert_eq!(
            (
                inst.lambda(),
                inst.action_bound(),
                inst.norm_bound(),
                inst.delta()
            ),
            (0.01, 2.236, 1.0, 0.05)
        );
        assert!(inst.validate().is_ok());
        assert!(ProblemInstance::linear(
            3,
            &LinearInstanceConfig {
                num_actions: 1,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn correlation_identity_cases() {
        let zero_v = LinearInstanceConfig {
            sigma_v2: 0.0,
            ..Default::default()
        };
        assert_eq!(
            ProblemInstance::linear(1, &zero_v)
                .unwrap()
                .true_correlation(),
            1.0
        );
        let cfg = LinearInstanceConfig {
            sigma_v2: 0.09,
            sigma_w2: 0.01,
            ..Default::default()
        };
        let rho = ProblemInstance::linear(1, &cfg).unwrap().true_correlation();
        assert!((rho - 0.1 / 0.1f64.sqrt()).abs() < 1e-12);
        assert!((rho - 0.31623).abs() < 1e-5);
    }

    #[test]
    fn contextual_actions() {
        let inst = ProblemInstance::linear_contextual(5, NoiseConfig::default()).unwrap();
        let set = inst.actions_for_context([0.5, -0.25]);
        assert_eq!(set.len(), 4);
        assert!(set.iter().any(|a| a == [-0.5, -0.25]));
        let degenerate = inst.actions_for_context([0.0, 0.0]);
        assert!(degenerate.iter().all(|a| a == degenerate.get(0)));
        let mut rng = rng_from_seed(11);
        for _ in 0..100 {
            let set = inst.action_set(&mut rng);
            assert!(set.iter().all(|a| norm2(a) <= inst.action_bound()));
        }
        assert_eq!(inst.dim(), 2);
        assert!(inst.validate().is_ok());
    }

    #[test]
    fn nonlinear_actions_bounded() {
        let inst = ProblemInstance::nonlinear_contextual(5, NoiseConfig::default()).unwrap();
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let set = inst.action_set(&mut rng);
            assert_eq!(set.len(), 6);
            assert!(set.iter().all(|a| norm2(a) <= inst.action_bound()));
        }
        assert_eq!(inst.theta_v()[0], 0.0);
        assert_eq!(inst.theta_w()[0][1], 0.0);
    }

    #[test]
    fn noiseless_pull_is_exact() {
        let inst = ProblemInstance::linear_contextual(
            2,
            NoiseConfig {
                sigma_v2: 0.0,
                sigma_w2: 0.0,
            },
        )
        .unwrap();
        let mut rng = rng_from_seed(1);
        let set = inst.actions_for_context([0.3, 0.7]);
        for a in set.iter() {
            let fb = inst.pull(&mut rng, a);
            assert!((fb.reward - inst.mean_reward(a)).abs() < 1e-15);
            assert!((fb.aux[0] - dot(a, &inst.theta_w()[0])).abs() < 1e-15);
            assert_eq!(inst.sample_aux_only(&mut rng, a), inst.aux_mean(a));
        }
    }

    #[test]
    fn pull_correlation_and_variance() {
        let inst = ProblemInstance::linear(8, &LinearInstanceConfig::default()).unwrap();
        let x = inst.action_set(&mut rng_from_seed(0)).get(0).to_vec();
        let mut rng = rng_from_seed(99);
        let n = 100_000;
        let (ys, ws): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|_| {
                let fb = inst.pull(&mut rng, &x);
                (fb.reward, fb.aux[0])
            })
            .unzip();
        assert!((corr(&ys, &ws) - inst.true_correlation()).abs() < 0.01);
        let my = ys.iter().sum::<f64>() / n as f64;
        let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((vy / inst.total_variance() - 1.0).abs() < 0.02);
        let se = (inst.total_variance() / n as f64).sqrt();
        assert!((my - inst.mean_reward(&x)).abs() < 3.0 * se);
        let mw = ws.iter().sum::<f64>() / n as f64;
        assert!((mw - inst.aux_mean(&x)[0]).abs() < 3.0 * (0.01 / n as f64).sqrt());
    }

    #[test]
    fn independent_feedback_is_uncorrelated() {
        let inst = ProblemInstance::linear(8, &LinearInstanceConfig::default())
            .unwrap()
            .with_independent_feedback();
        assert_eq!(inst.true_correlation(), 0.0);
        assert_eq!(inst.total_variance(), 0.01);
        let x = inst.action_set(&mut rng_from_seed(0)).get(1).to_vec();
        let mut rng = rng_from_seed(4);
        let n = 50_000;
        let (ys, ws): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|_| {
                let fb = inst.pull(&mut rng, &x);
                (fb.reward, fb.aux[0])
            })
            .unzip();
        assert!(corr(&ys, &ws).abs() < 0.02);
        let my = ys.iter().sum::<f64>() / n as f64;
        assert!((my - inst.mean_reward(&x)).abs() < 3.0 * (0.01 / n as f64).sqrt());
        let back = ProblemInstance::from_json(&inst.to_json()).unwrap();
        assert!(back.independent_feedback());
    }

    #[test]
    fn aux_only_draws_independent() {
        let inst = ProblemInstance::linear(8, &LinearInstanceConfig::default()).unwrap();
        let x = inst.action_set(&mut rng_from_seed(0)).get(3).to_vec();
        let mut rng = rng_from_seed(5);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| inst.sample_aux_only(&mut rng, &x)[0])
            .collect();
        assert!(corr(&draws[..9_999], &draws[1..]).abs() < 0.02);
        let big: Vec<f64> = (0..100_000)
            .map(|_| inst.sample_aux_only(&mut rng, &x)[0])
            .collect();
        let m = big.iter().sum::<f64>() / big.len() as f64;
        assert!((m - inst.aux_mean(&x)[0]).abs() < 3.0 * (0.01 / 1e5f64).sqrt());
    }

    #[test]
    fn regret_examples() {
        let inst = ProblemInstance::linear(
            1,
            &LinearInstanceConfig {
                d: 1,
                ..Default::default()
            },
        )
        .unwrap()
        .with_parameters(vec![0.0], vec![vec![1.0]])
        .unwrap();
        let set = ActionSet::new(vec![vec![1.0], vec![0.3]]);
        assert_eq!(inst.instantaneous_regret(&set, 0), 0.0);
        assert!((inst.instantaneous_regret(&set, 1) - 0.7).abs() < 1e-12);
        let ties = ActionSet::new(vec![vec![0.3], vec![1.0], vec![1.0]]);
        assert_eq!(inst.optimal_index(&ties), 1);
        assert_eq!(inst.instantaneous_regret(&ties, 2), 0.0);
    }

    #[test]
    fn regret_matches_enumeration() {
        let inst = ProblemInstance::linear(21, &LinearInstanceConfig::default()).unwrap();
        let set = inst.action_set(&mut rng_from_seed(0)).into_owned();
        let means: Vec<f64> = set
            .iter()
            .map(|a| a.iter().zip(inst.theta_star()).map(|(x, t)| x * t).sum())
            .collect();
        let best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (i, m) in means.iter().enumerate() {
            let r = inst.instantaneous_regret(&set, i);
            assert!(r >= 0.0);
            assert!((r - (best - m)).abs() < 1e-12);
        }
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let inst = ProblemInstance::linear(4, &LinearInstanceConfig::default()).unwrap();
        let text = inst.to_json();
        for key in [
            "\"kind\"",
            "\"theta_star\"",
            "\"theta_v\"",
            "\"theta_w\"",
            "\"sigma_v2\"",
            "\"L\"",
            "\"S\"",
            "\"lambda\"",
            "\"delta\"",
            "\"actions\"",
            "\"seed\"",
        ] {
            assert!(text.contains(key), "missing {key}");
        }
        assert_eq!(ProblemInstance::from_json(&text).unwrap(), inst);
        let ctx = ProblemInstance::nonlinear_contextual(4, NoiseConfig::default()).unwrap();
        let text = ctx.to_json();
        assert!(text.contains("context_spec"));
        assert_eq!(ProblemInstance::from_json(&text).unwrap(), ctx);
        let broken = text.replace("\"lambda\"", "\"lambda_typo\"");
        assert!(ProblemInstance::from_json(&broken).is_err());
    }

    #[test]
    fn same_seed_same_pulls() {
        let inst = ProblemInstance::linear_contextual(12, NoiseConfig::default()).unwrap();
        let run = |seed| {
            let mut rng = rng_from_seed(seed);
            (0..50)
                .map(|_| {
                    let set = inst.action_set(&mut rng).into_owned();
                    inst.pull(&mut rng, set.get(1)).reward.to_bits()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(77), run(77));
        assert_ne!(run(77), run(78));
    }
}
