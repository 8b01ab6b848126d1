//! Confidence-bound learners and their auxiliary-feedback variants.

mod agent;
mod learner;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_variates::{CvError, SamplingStrategy, VarianceBoundConfig};
use crate::environments::EnvError;
use crate::numerics::NumericsError;

pub use agent::{draw_history_samples, fit_history_model, Agent, SampledAuxEstimator, StepOutcome};
pub use learner::{confidence_width, AfcLearner, ConfidenceBound, FeatureMap, LearnerConstants};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgoError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    ControlVariate(#[from] CvError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Environment(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Oful,
    LinUcb,
    NLinUcb,
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Oful => "OFUL",
            LearnerKind::LinUcb => "Lin-UCB",
            LearnerKind::NLinUcb => "NLin-UCB",
        }
    }
}

/// Where the extra auxiliary-only samples of the sampled variants are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtraSampleSite {
    #[default]
    ChosenAction,
    RandomAction,
}

fn default_ratio() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Variant {
    /// Observed rewards only.
    Vanilla,
    /// Hybrid rewards with the exact auxiliary means.
    Af,
    /// Hybrid rewards with auxiliary means re-estimated every round from
    /// `ratio − 1` extra auxiliary-only samples per feedback.
    Sampled {
        strategy: SamplingStrategy,
        #[serde(default = "default_ratio")]
        ratio: u32,
        #[serde(default)]
        site: ExtraSampleSite,
    },
    /// Hybrid rewards with auxiliary means shifted by `bias`.
    Biased { bias: f64 },
    /// Hybrid rewards with auxiliary means fitted on `samples` historical draws.
    History { samples: usize },
}

impl Variant {
    pub fn suffix(&self) -> &'static str {
        match self {
            Variant::Vanilla => "",
            Variant::Af => "-AF",
            Variant::Sampled {
                strategy: SamplingStrategy::IndependentSamples,
                ..
            } => "-IS",
            Variant::Sampled {
                strategy: SamplingStrategy::MultipleFeedbacks,
                ..
            } => "-MF",
            Variant::Biased { .. } => "-BE",
            Variant::History { .. } => "-EH",
        }
    }

    pub fn uses_feedback(&self) -> bool {
        !matches!(self, Variant::Vanilla)
    }
}

fn default_ridge() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub learner: LearnerKind,
    pub variant: Variant,
    #[serde(default)]
    pub bound: VarianceBoundConfig,
    /// Ridge penalty for fitted auxiliary means (history and sampled variants).
    #[serde(default = "default_ridge")]
    pub aux_ridge: f64,
    /// Display name; defaults to the learner name plus the variant suffix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl VariantConfig {
    pub fn new(learner: LearnerKind, variant: Variant) -> Self {
        Self {
            learner,
            variant,
            bound: VarianceBoundConfig::default(),
            aux_ridge: default_ridge(),
            label: None,
        }
    }

    pub fn name(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}{}", self.learner.name(), self.variant.suffix()))
    }

    pub fn validate(&self) -> Result<(), AlgoError> {
        match &self.variant {
            Variant::Sampled { ratio, .. } if *ratio < 1 => {
                return Err(AlgoError::InvalidParameter(
                    "variant.ratio must be at least 1".into(),
                ))
            }
            Variant::Biased { bias } if !bias.is_finite() => {
                return Err(AlgoError::InvalidParameter(
                    "variant.bias must be finite".into(),
                ))
            }
            Variant::History { samples } if *samples == 0 => {
                return Err(AlgoError::InvalidParameter(
                    "variant.samples must be at least 1".into(),
                ))
            }
            _ => {}
        }
        if !(self.aux_ridge > 0.0) {
            return Err(AlgoError::InvalidParameter(
                "aux_ridge must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_suffixes() {
        let c = VariantConfig::new(LearnerKind::Oful, Variant::Af);
        assert_eq!(c.name(), "OFUL-AF");
        let c = VariantConfig::new(
            LearnerKind::LinUcb,
            Variant::Sampled {
                strategy: SamplingStrategy::MultipleFeedbacks,
                ratio: 2,
                site: ExtraSampleSite::ChosenAction,
            },
        );
        assert_eq!(c.name(), "Lin-UCB-MF");
        assert_eq!(
            VariantConfig::new(LearnerKind::NLinUcb, Variant::Vanilla).name(),
            "NLin-UCB"
        );
        assert_eq!(
            VariantConfig::new(LearnerKind::LinUcb, Variant::History { samples: 5 }).name(),
            "Lin-UCB-EH"
        );
    }

    #[test]
    fn config_json_is_strict() {
        let ok = r#"{"learner":"oful","variant":{"kind":"biased","bias":0.1}}"#;
        let c: VariantConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(c.variant, Variant::Biased { bias: 0.1 });
        assert_eq!(c.aux_ridge, 1e-6);
        let bad = r#"{"learner":"oful","variant":{"kind":"af"},"extra":1}"#;
        assert!(serde_json::from_str::<VariantConfig>(bad).is_err());
        let s = r#"{"learner":"lin-ucb","variant":{"kind":"sampled","strategy":"independent-samples"}}"#;
        let c: VariantConfig = serde_json::from_str(s).unwrap();
        assert!(matches!(c.variant, Variant::Sampled { ratio: 2, .. }));
    }

    #[test]
    fn validation() {
        assert!(
            VariantConfig::new(LearnerKind::Oful, Variant::History { samples: 0 })
                .validate()
                .is_err()
        );
        assert!(
            VariantConfig::new(LearnerKind::Oful, Variant::Biased { bias: f64::NAN })
                .validate()
                .is_err()
        );
        assert!(VariantConfig::new(LearnerKind::Oful, Variant::Af)
            .validate()
            .is_ok());
    }
}
