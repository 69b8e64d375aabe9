use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::network::{PolicyNet, StateScaler};
use crate::env::{Action, ActionSpace, EnvKind};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    Expert,
    /// Trained network; discrete envs take the argmax of the logits,
    /// continuous envs squash the output with `tanh` into the action bounds.
    MaxEntropy {
        scaler: StateScaler,
        net: PolicyNet,
    },
    /// Expert action with probability `1 - epsilon`, uniform otherwise.
    Partial {
        epsilon: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub env: EnvKind,
    #[serde(flatten)]
    pub kind: PolicyKind,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format_version: u32,
    #[serde(flatten)]
    policy: Policy,
}

impl Policy {
    pub fn random(env: EnvKind) -> Self {
        Policy { env, kind: PolicyKind::Random }
    }

    pub fn expert(env: EnvKind) -> Self {
        Policy { env, kind: PolicyKind::Expert }
    }

    pub fn partial(env: EnvKind, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 1]")));
        }
        Ok(Policy { env, kind: PolicyKind::Partial { epsilon } })
    }

    pub fn max_entropy(env: EnvKind, net: PolicyNet) -> Result<Self> {
        let spec = env.spec();
        let out = match &spec.action_space {
            ActionSpace::Discrete(m) => *m,
            ActionSpace::Continuous(b) => b.len(),
        };
        if net.input != spec.state_dim || net.output != out {
            return Err(Error::InvalidArgument(format!(
                "network shape {}->{} does not fit {} ({}->{})",
                net.input, net.output, env, spec.state_dim, out
            )));
        }
        if net.params.len() != PolicyNet::param_count(net.input, net.hidden, net.output) {
            return Err(Error::InvalidArgument("parameter vector length does not match architecture".into()));
        }
        let scaler = StateScaler::from_bounds(&spec.sampling_bounds);
        Ok(Policy { env, kind: PolicyKind::MaxEntropy { scaler, net } })
    }

    pub fn act(&self, state: &[f64], rng: &mut Rng) -> Action {
        match &self.kind {
            PolicyKind::Random => random_action(self.env, rng),
            PolicyKind::Expert => expert_action(self.env, state),
            PolicyKind::Partial { epsilon } => {
                // Always draw the coin so the stream does not depend on epsilon.
                let explore = rng.random::<f64>() < *epsilon;
                if explore {
                    random_action(self.env, rng)
                } else {
                    expert_action(self.env, state)
                }
            }
            PolicyKind::MaxEntropy { scaler, net } => {
                let out = net.forward(&scaler.apply(state));
                match self.env.spec().action_space {
                    ActionSpace::Discrete(_) => {
                        let mut best = 0;
                        for (i, v) in out.iter().enumerate() {
                            if *v > out[best] {
                                best = i;
                            }
                        }
                        Action::Discrete(best)
                    }
                    ActionSpace::Continuous(bounds) => Action::Continuous(
                        out.iter().zip(&bounds).map(|(y, b)| b.mid() + 0.5 * b.width() * y.tanh()).collect(),
                    ),
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = PolicyFile { format_version: POLICY_FORMAT_VERSION, policy: self.clone() };
        let json = serde_json::to_string_pretty(&file)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Policy> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: PolicyFile = serde_json::from_str(&text)?;
        if file.format_version != POLICY_FORMAT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("unsupported policy format version {}", file.format_version),
            });
        }
        Ok(file.policy)
    }
}

pub fn random_action(env: EnvKind, rng: &mut Rng) -> Action {
    match env.spec().action_space {
        ActionSpace::Discrete(m) => Action::Discrete(rng.random_range(0..m)),
        ActionSpace::Continuous(bounds) => {
            Action::Continuous(bounds.iter().map(|b| b.lerp(rng.random::<f64>())).collect())
        }
    }
}

/// Hand-written controllers that pursue each task's goal.
pub fn expert_action(env: EnvKind, s: &[f64]) -> Action {
    match env {
        // PD rule on the pole angle.
        EnvKind::CartPole => Action::Discrete(usize::from(0.5 * s[2] + 1.0 * s[3] > 0.0)),
        // Energy pumping: push along the velocity.
        EnvKind::MountainCar => Action::Discrete(if s[1] >= 0.0 { 2 } else { 0 }),
        EnvKind::Pendulum => Action::Continuous(vec![pendulum_swing_up(s)]),
    }
}

fn pendulum_swing_up(s: &[f64]) -> f64 {
    let (c, theta_dot) = (s[0], s[2]);
    let theta = s[1].atan2(c);
    let max = crate::env::pendulum::MAX_TORQUE;
    let u = if c > 0.85 {
        -(10.0 * theta + 2.0 * theta_dot)
    } else if theta_dot.abs() < 1e-3 {
        max
    } else {
        // Scaled mechanical energy; the upright rest state has energy 5.
        let energy = theta_dot * theta_dot / 6.0 + 5.0 * c;
        (5.0 - energy) * theta_dot
    };
    u.clamp(-max, max)
}
