//! Parameterized bandits with correlated auxiliary feedback.
//!
//! Auxiliary observations that arrive with each reward are used as control
//! variates: the learner replaces the observed reward by a *hybrid reward*
//! `z = y - (w - ĝ(x))ᵀβ̂`, which is unbiased for the mean reward and has a
//! smaller variance whenever the feedback is correlated with the reward. Any
//! confidence-bound learner whose width scales with the noise standard
//! deviation (OFUL, Lin-UCB) can then shrink its width accordingly.
//!
//! Layout:
//! - [`numerics`]: Cholesky solves, chi-squared quantiles, seeded RNG streams.
//! - [`environments`]: synthetic linear / contextual instances with coupled
//!   reward and auxiliary noise.
//! - [`control_variates`]: observation log, coefficient estimators,
//!   variance estimators and the hybrid-reward state.
//! - [`algorithms`]: the OFUL-style learner and the auxiliary-feedback variants.
//! - [`harness`]: seeded replications, sweeps, aggregation and CSV output.
//! - [`diagnostics`]: Monte Carlo property checks shared by the CLI and tests.

pub mod algorithms;
pub mod control_variates;
pub mod diagnostics;
pub mod environments;
pub mod harness;
pub mod numerics;

pub use algorithms::{AfcLearner, Agent, ConfidenceBound, LearnerKind, Variant, VariantConfig};
pub use control_variates::{AuxModel, HybridState, ObservationLog, SamplingStrategy};
pub use environments::{ActionSet, ProblemInstance, RoundFeedback, SettingKind};
pub use harness::{ExperimentSpec, RegretTrace};
pub use numerics::{Matrix, NumericsError};
