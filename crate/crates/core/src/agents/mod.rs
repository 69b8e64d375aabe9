//! Agent-based samplers: policies, trajectory collection and dataset mixes.

pub mod mea;
pub mod network;
pub mod policy;
pub mod rollout;

pub use mea::{state_entropy, train_max_entropy_policy, visited_states, MeaConfig, MeaOutcome};
pub use network::{PolicyNet, StateScaler};
pub use policy::{expert_action, random_action, Policy, PolicyKind};
pub use rollout::{collect, mix_datasets};
