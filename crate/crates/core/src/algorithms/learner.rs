use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::environments::ActionSet;
use crate::numerics::{dot, quad_form, rank1_update_in_place, Cholesky, Matrix};

use super::AlgoError;

/// `α_t = sqrt(d log((1 + t L²/λ) / δ))`.
pub fn confidence_width(t: usize, d: usize, action_bound: f64, lambda: f64, delta: f64) -> f64 {
    let arg = (1.0 + t as f64 * action_bound * action_bound / lambda) / delta;
    (d as f64 * arg.ln()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMap {
    #[default]
    Identity,
    /// `(x₁, x₂) ↦ (x₁, x₂, x₁², x₁x₂)`.
    Polynomial2,
}

impl FeatureMap {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => input_dim,
            FeatureMap::Polynomial2 => 4,
        }
    }

    pub fn apply<'a>(&self, x: &'a [f64]) -> Cow<'a, [f64]> {
        match self {
            FeatureMap::Identity => Cow::Borrowed(x),
            FeatureMap::Polynomial2 => {
                let f = crate::environments::polynomial_features([x[0], x[1]]);
                Cow::Owned(f.to_vec())
            }
        }
    }
}

/// Terms of the optimistic index `xᵀθ̂ + scale·h` and the ellipsoid radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceBound {
    /// `α_t ‖x‖_{V̄⁻¹}`.
    pub h_term: f64,
    /// `λ^{1/2} S ‖x‖_{V̄⁻¹}`.
    pub l_term: f64,
    /// `sqrt(min(σ², ν̄))`.
    pub scale: f64,
}

impl ConfidenceBound {
    pub fn bonus(&self) -> f64 {
        self.scale * self.h_term
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConstants {
    pub lambda: f64,
    /// Bound `L` on action norms used in `α_t`.
    pub action_bound: f64,
    /// Bound `S` on `‖θ⋆‖`.
    pub norm_bound: f64,
    pub delta: f64,
    pub sigma2: f64,
}

/// Ridge-regression learner with an optimistic linear index.
///
/// The reward aggregate `b = Σ x_s z_s` can be replaced wholesale each round,
/// which is how hybrid rewards for all past rounds are refreshed at once.
#[derive(Debug, Clone)]
pub struct AfcLearner {
    d: usize,
    constants: LearnerConstants,
    feature_map: FeatureMap,
    v_bar: Matrix,
    v_inv: Matrix,
    min_pivot: f64,
    b: Vec<f64>,
    theta: Vec<f64>,
    updates: usize,
}

impl AfcLearner {
    pub fn new(
        d: usize,
        constants: LearnerConstants,
        feature_map: FeatureMap,
    ) -> Result<Self, AlgoError> {
        if !(constants.lambda > 0.0) {
            return Err(AlgoError::InvalidParameter(
                "lambda must be positive".into(),
            ));
        }
        if !(constants.sigma2 > 0.0) {
            return Err(AlgoError::InvalidParameter(
                "sigma2 must be positive".into(),
            ));
        }
        if !(constants.delta > 0.0 && constants.delta < 1.0) {
            return Err(AlgoError::InvalidParameter(
                "delta must lie in (0, 1)".into(),
            ));
        }
        let v_bar = Matrix::scaled_identity(d, constants.lambda);
        Ok(Self {
            d,
            feature_map,
            v_inv: Matrix::scaled_identity(d, 1.0 / constants.lambda),
            min_pivot: constants.lambda,
            v_bar,
            b: vec![0.0; d],
            theta: vec![0.0; d],
            updates: 0,
            constants,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn constants(&self) -> &LearnerConstants {
        &self.constants
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn v_bar(&self) -> &Matrix {
        &self.v_bar
    }

    pub fn reward_aggregate(&self) -> &[f64] {
        &self.b
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Smallest Cholesky pivot of `V̄` after the last update.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// Index of the round about to be played, starting at 1.
    pub fn round(&self) -> usize {
        self.updates + 1
    }

    pub fn alpha(&self) -> f64 {
        confidence_width(
            self.round(),
            self.d,
            self.constants.action_bound,
            self.constants.lambda,
            self.constants.delta,
        )
    }

    fn features<'a>(&self, x: &'a [f64]) -> Cow<'a, [f64]> {
        self.feature_map.apply(x)
    }

    /// `‖φ(x)‖_{V̄⁻¹}`.
    pub fn exploration_norm(&self, x: &[f64]) -> f64 {
        let phi = self.features(x);
        quad_form(&phi, &self.v_inv)
            .map(|v| v.max(0.0).sqrt())
            .unwrap_or(0.0)
    }

    pub fn confidence_bound(&self, x: &[f64], noise_variance: f64) -> ConfidenceBound {
        let n = self.exploration_norm(x);
        ConfidenceBound {
            h_term: self.alpha() * n,
            l_term: self.constants.lambda.sqrt() * self.constants.norm_bound * n,
            scale: noise_variance.min(self.constants.sigma2).max(0.0).sqrt(),
        }
    }

    pub fn ucb(&self, x: &[f64], noise_variance: f64) -> f64 {
        let phi = self.features(x);
        dot(&phi, &self.theta) + self.confidence_bound(x, noise_variance).bonus()
    }

    /// Optimistic action; the lowest index wins ties.
    pub fn select_action(&self, actions: &ActionSet, noise_variance: f64) -> usize {
        let scale = noise_variance.min(self.constants.sigma2).max(0.0).sqrt();
        let alpha = self.alpha();
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for (i, x) in actions.iter().enumerate() {
            let phi = self.features(x);
            let norm = quad_form(&phi, &self.v_inv)
                .map(|v| v.max(0.0).sqrt())
                .unwrap_or(0.0);
            let value = dot(&phi, &self.theta) + scale * alpha * norm;
            if value > best_value {
                best = i;
                best_value = value;
            }
        }
        best
    }

    /// Radius `sqrt(min(σ², ν̄)) α_t + λ^{1/2} S` of the confidence ellipsoid.
    pub fn confidence_radius(&self, noise_variance: f64) -> f64 {
        noise_variance.min(self.constants.sigma2).max(0.0).sqrt() * self.alpha()
            + self.constants.lambda.sqrt() * self.constants.norm_bound
    }

    /// `‖θ̂ − θ‖_{V̄}`.
    pub fn ellipsoid_distance(&self, theta: &[f64]) -> f64 {
        let diff: Vec<f64> = self.theta.iter().zip(theta).map(|(a, b)| a - b).collect();
        quad_form(&diff, &self.v_bar)
            .map(|v| v.max(0.0).sqrt())
            .unwrap_or(f64::INFINITY)
    }

    fn push_design(&mut self, phi: &[f64]) -> Result<(), AlgoError> {
        rank1_update_in_place(&mut self.v_bar, phi, 1.0)?;
        Ok(())
    }

    fn resolve(&mut self) -> Result<(), AlgoError> {
        let chol = Cholesky::factor(&self.v_bar)?;
        self.theta = chol.solve(&self.b)?;
        self.v_inv = chol.inverse();
        self.min_pivot = chol.min_pivot();
        self.updates += 1;
        Ok(())
    }

    /// Adds `φ(x)φ(x)ᵀ` to `V̄` and `φ(x) z` to the reward aggregate.
    pub fn update(&mut self, x: &[f64], z: f64) -> Result<(), AlgoError> {
        let phi = self.features(x).into_owned();
        self.push_design(&phi)?;
        for (b, p) in self.b.iter_mut().zip(&phi) {
            *b += p * z;
        }
        self.resolve()
    }

    /// Adds `φ(x)φ(x)ᵀ` to `V̄` and replaces the reward aggregate by `b`.
    pub fn update_with_aggregate(&mut self, x: &[f64], b: Vec<f64>) -> Result<(), AlgoError> {
        if b.len() != self.d {
            return Err(AlgoError::InvalidParameter(format!(
                "reward aggregate has length {}, expected {}",
                b.len(),
                self.d
            )));
        }
        let phi = self.features(x).into_owned();
        self.push_design(&phi)?;
        self.b = b;
        self.resolve()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng_from_seed;
    use rand::Rng;

    fn constants(lambda: f64) -> LearnerConstants {
        LearnerConstants {
            lambda,
            action_bound: 1.0,
            norm_bound: 1.0,
            delta: 0.05,
            sigma2: 0.02,
        }
    }

    #[test]
    fn width_examples() {
        let a = confidence_width(7, 1, 0.0, 1.0, 0.05);
        assert!((a - (1.0f64 / 0.05).ln().sqrt()).abs() < 1e-14);
        let a = confidence_width(100, 5, 2.236, 0.01, 0.05);
        let oracle = (5.0 * ((1.0 + 100.0 * 2.236f64 * 2.236 / 0.01) / 0.05).ln()).sqrt();
        assert!((a - oracle).abs() < 1e-12);
        assert!((a - 8.312).abs() < 1e-2, "{a}");
        let mut prev = confidence_width(1, 5, 2.236, 0.01, 0.05);
        for t in 2..=10_000 {
            let next = confidence_width(t, 5, 2.236, 0.01, 0.05);
            assert!(next > prev);
            prev = next;
        }
    }

    #[test]
    fn first_round_is_pure_exploration() {
        let l = AfcLearner::new(2, constants(1.0), FeatureMap::Identity).unwrap();
        let set = ActionSet::new(vec![vec![0.1, 0.1], vec![0.0, 0.9], vec![-0.5, 0.5]]);
        assert_eq!(l.select_action(&set, 0.02), 1);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let l = AfcLearner::new(2, constants(1.0), FeatureMap::Identity).unwrap();
        let set = ActionSet::new(vec![vec![0.3, 0.4], vec![0.3, 0.4]]);
        assert_eq!(l.select_action(&set, 0.02), 0);
    }

    #[test]
    fn selection_matches_enumeration() {
        let mut rng = rng_from_seed(8);
        let mut l = AfcLearner::new(3, constants(0.5), FeatureMap::Identity).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            l.update(&x, rng.random_range(-1.0..1.0)).unwrap();
        }
        let set = ActionSet::new(
            (0..10)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        );
        for nv in [0.02, 0.005, 0.0] {
            let values: Vec<f64> = set.iter().map(|x| l.ucb(x, nv)).collect();
            let oracle =
                (0..values.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b });
            assert_eq!(l.select_action(&set, nv), oracle);
        }
    }

    #[test]
    fn single_update_hand_solve() {
        let mut l = AfcLearner::new(3, constants(1.0), FeatureMap::Identity).unwrap();
        l.update(&[1.0, 0.0, 0.0], 2.0).unwrap();
        assert_eq!(l.v_bar().diagonal(), vec![2.0, 1.0, 1.0]);
        for (a, b) in l.theta().iter().zip([1.0, 0.0, 0.0]) {
            assert!((a - b).abs() <= f64::EPSILON);
        }
    }

    #[test]
    fn matches_batch_ridge() {
        let mut rng = rng_from_seed(21);
        let d = 4;
        let lambda = 0.3;
        let mut l = AfcLearner::new(d, constants(lambda), FeatureMap::Identity).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..50 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = rng.random_range(-1.0..1.0);
            l.update(&x, y).unwrap();
            xs.push(x);
            ys.push(y);
            assert!(l.min_pivot() >= lambda * (1.0 - 1e-9));
        }
        // Gaussian elimination on the normal equations.
        let mut a = vec![vec![0.0; d + 1]; d];
        for i in 0..d {
            a[i][i] = lambda;
        }
        for (x, y) in xs.iter().zip(&ys) {
            for i in 0..d {
                for j in 0..d {
                    a[i][j] += x[i] * x[j];
                }
                a[i][d] += x[i] * y;
            }
        }
        for c in 0..d {
            for r in c + 1..d {
                let k = a[r][c] / a[c][c];
                for j in c..=d {
                    a[r][j] -= k * a[c][j];
                }
            }
        }
        let mut sol = vec![0.0; d];
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|j| a[i][j] * sol[j]).sum();
            sol[i] = (a[i][d] - s) / a[i][i];
        }
        for (a, b) in l.theta().iter().zip(&sol) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn aggregate_update_equals_plain_update_when_unchanged() {
        let mut a = AfcLearner::new(2, constants(1.0), FeatureMap::Identity).unwrap();
        let mut b = a.clone();
        let xs = [[0.5, -0.2], [0.1, 0.9], [-0.7, 0.3]];
        let ys = [0.3, -0.4, 1.1];
        let mut agg = vec![0.0; 2];
        for (x, y) in xs.iter().zip(ys) {
            a.update(x, y).unwrap();
            for (g, xi) in agg.iter_mut().zip(x) {
                *g += xi * y;
            }
            b.update_with_aggregate(x, agg.clone()).unwrap();
        }
        assert_eq!(a.theta(), b.theta());
    }

    #[test]
    fn polynomial_feature_map() {
        let mut l = AfcLearner::new(4, constants(1.0), FeatureMap::Polynomial2).unwrap();
        assert_eq!(FeatureMap::Polynomial2.output_dim(2), 4);
        l.update(&[1.0, 1.0], 1.0).unwrap();
        assert_eq!(l.v_bar().get(2, 3), 1.0);
        let cb = l.confidence_bound(&[0.5, -0.5], 0.01);
        assert!(cb.scale <= 0.02f64.sqrt());
        assert!(cb.h_term > 0.0 && cb.l_term > 0.0);
    }
}
