//! Surrogate dynamics models for deterministic simulated environments.
//!
//! Datasets are gathered either by space-filling designs (LHS, Sobol,
//! uniform, GP active learning) or by policy rollouts (random, expert and
//! maximum-entropy agents and their mixtures). Each dataset trains a
//! surrogate `(state, action) -> next_state`, and every surrogate is scored
//! against every dataset.

pub mod agents;
pub mod dataset;
pub mod entropy;
pub mod env;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod rng;
pub mod sampling;
pub mod surrogate;

pub use dataset::{Dataset, DatasetMeta, Transition};
pub use entropy::{knn_entropy, EntropyEstimate};
pub use env::{make_env, Action, ActionSpace, EnvKind, EnvSpec, Environment, Interval, StepResult};
pub use error::{Error, Result};
pub use eval::{EvalMatrix, GroupSummary, SamplerGroup};
pub use sampling::{SamplePlan, SpaceMethod};
pub use surrogate::{Family, SurrogateModel, TrainConfig};
