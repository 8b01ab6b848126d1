use serde::{Deserialize, Serialize};

/// Finite list of equal-length action feature vectors, stored flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSet {
    dim: usize,
    data: Vec<f64>,
}

impl ActionSet {
    /// Panics on an empty list or ragged rows.
    pub fn new(actions: Vec<Vec<f64>>) -> Self {
        assert!(!actions.is_empty(), "action set must be nonempty");
        let dim = actions[0].len();
        assert!(actions.iter().all(|a| a.len() == dim), "ragged action set");
        Self {
            dim,
            data: actions.into_iter().flatten().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }

    /// Every feature multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }
}

/// `{(x₁,x₂), (x₁,−x₂), (−x₁,x₂), (−x₁,−x₂)}`.
pub fn sign_flip_actions(raw: [f64; 2]) -> ActionSet {
    let [a, b] = raw;
    ActionSet::new(vec![vec![a, b], vec![a, -b], vec![-a, b], vec![-a, -b]])
}

/// Degree-2 polynomial features with the constant and `x₂²` terms dropped.
pub fn polynomial_features(raw: [f64; 2]) -> [f64; 4] {
    let [a, b] = raw;
    [a, b, a * a, a * b]
}

/// The six signed polynomial feature vectors used by the nonlinear
/// contextual instance.
pub fn polynomial_sign_actions(raw: [f64; 2]) -> ActionSet {
    let [x1, x2, sq, cross] = polynomial_features(raw);
    ActionSet::new(vec![
        vec![x1, x2, -sq, -cross],
        vec![x1, -x2, sq, -cross],
        vec![-x1, x2, sq, -cross],
        vec![x1, -x2, -sq, cross],
        vec![-x1, x2, -sq, cross],
        vec![-x1, -x2, sq, cross],
    ])
}
