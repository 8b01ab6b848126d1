use serde::{Deserialize, Serialize};

use crate::numerics::{dot, Matrix};

use super::SamplingStrategy;

/// How the auxiliary mean functions `ĝ_i` were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AuxModelKind {
    /// Exact `g_i`.
    Known,
    /// `g_i(x) + bias` for every action.
    Biased { bias: f64 },
    /// Ridge fit on `samples` historical observations, frozen afterwards.
    EstimatedHistory { samples: usize },
    /// Re-fitted every round from the paired samples plus extra
    /// auxiliary-only draws; `ratios[i]` is the sample ratio `r_i`.
    Sampled {
        strategy: SamplingStrategy,
        ratios: Vec<f64>,
    },
}

/// Affine auxiliary mean model `ĝ_i(x) = xᵀc_i + o_i`.
///
/// Every model used here (exact, biased, ridge-fitted) is affine in the
/// action features, which lets the observation log centre its aggregates in
/// closed form instead of revisiting past records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxModel {
    kind: AuxModelKind,
    coefficients: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

impl AuxModel {
    pub fn known(theta_w: &[Vec<f64>]) -> Self {
        Self {
            kind: AuxModelKind::Known,
            offsets: vec![0.0; theta_w.len()],
            coefficients: theta_w.to_vec(),
        }
    }

    pub fn biased(theta_w: &[Vec<f64>], bias: f64) -> Self {
        Self {
            kind: AuxModelKind::Biased { bias },
            offsets: vec![bias; theta_w.len()],
            coefficients: theta_w.to_vec(),
        }
    }

    pub fn estimated_history(coefficients: Vec<Vec<f64>>, samples: usize) -> Self {
        Self {
            kind: AuxModelKind::EstimatedHistory { samples },
            offsets: vec![0.0; coefficients.len()],
            coefficients,
        }
    }

    /// Sampled model starting from `ĝ ≡ 0` until the first refit.
    pub fn sampled(d: usize, strategy: SamplingStrategy, ratios: Vec<f64>) -> Self {
        let q = ratios.len();
        Self {
            kind: AuxModelKind::Sampled { strategy, ratios },
            coefficients: vec![vec![0.0; d]; q],
            offsets: vec![0.0; q],
        }
    }

    pub fn kind(&self) -> &AuxModelKind {
        &self.kind
    }

    pub fn num_feedback(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn set_coefficients(&mut self, coefficients: Vec<Vec<f64>>) {
        assert_eq!(coefficients.len(), self.coefficients.len());
        self.coefficients = coefficients;
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.offsets)
            .map(|(c, o)| dot(x, c) + o)
            .collect()
    }

    /// `(d+1) × q` matrix whose column `i` is `(c_i, o_i)`, acting on the
    /// augmented feature `(x, 1)`.
    pub fn augmented(&self, d: usize) -> Matrix {
        let q = self.coefficients.len();
        let mut g = Matrix::zeros(d + 1, q);
        for (i, (c, o)) in self.coefficients.iter().zip(&self.offsets).enumerate() {
            for (j, &v) in c.iter().enumerate() {
                g.set(j, i, v);
            }
            g.set(d, i, *o);
        }
        g
    }
}
