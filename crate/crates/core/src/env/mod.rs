//! Deterministic classic-control environments exposed as MDPs.
//!
//! Unlike the usual gym-style API, every environment here supports
//! [`Environment::set_state`], so a generative sampler can simulate a single
//! transition from an arbitrary point of the state space.

pub mod cartpole;
pub mod mountain_car;
pub mod pendulum;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cartpole::CartPole;
pub use mountain_car::MountainCar;
pub use pendulum::Pendulum;

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` in environment units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Maps `u` in `[0, 1]` affinely onto the interval.
    pub fn lerp(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(Vec<Interval>),
}

impl ActionSpace {
    /// Width of the action once encoded as surrogate input features.
    pub fn encoded_dim(&self) -> usize {
        match self {
            ActionSpace::Discrete(_) => 1,
            ActionSpace::Continuous(b) => b.len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete(_))
    }

    pub fn validate(&self, action: &Action) -> Result<()> {
        match (self, action) {
            (ActionSpace::Discrete(n), Action::Discrete(i)) => {
                if i < n {
                    Ok(())
                } else {
                    Err(Error::InvalidAction(format!("index {i} outside [0, {n})")))
                }
            }
            (ActionSpace::Continuous(bounds), Action::Continuous(v)) => {
                if v.len() != bounds.len() {
                    return Err(Error::Dimension { expected: bounds.len(), got: v.len() });
                }
                for (x, b) in v.iter().zip(bounds) {
                    if !x.is_finite() || !b.contains(*x) {
                        return Err(Error::InvalidAction(format!("value {x} outside [{}, {}]", b.lo, b.hi)));
                    }
                }
                Ok(())
            }
            (ActionSpace::Discrete(_), Action::Continuous(_)) => {
                Err(Error::InvalidAction("continuous action for a discrete space".into()))
            }
            (ActionSpace::Continuous(_), Action::Discrete(_)) => {
                Err(Error::InvalidAction("discrete action for a continuous space".into()))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    /// Action as surrogate input features: the index itself for discrete
    /// actions, the raw vector for continuous ones.
    pub fn encode(&self) -> Vec<f64> {
        match self {
            Action::Discrete(i) => vec![*i as f64],
            Action::Continuous(v) => v.clone(),
        }
    }

    /// Inverse of [`Action::encode`].
    pub fn decode(space: &ActionSpace, values: &[f64]) -> Result<Action> {
        match space {
            ActionSpace::Discrete(n) => {
                if values.len() != 1 {
                    return Err(Error::Dimension { expected: 1, got: values.len() });
                }
                let x = values[0];
                if !(x.is_finite() && x >= 0.0 && x.fract() == 0.0 && (x as usize) < *n) {
                    return Err(Error::InvalidAction(format!("{x} is not an action index below {n}")));
                }
                Ok(Action::Discrete(x as usize))
            }
            ActionSpace::Continuous(b) => {
                if values.len() != b.len() {
                    return Err(Error::Dimension { expected: b.len(), got: values.len() });
                }
                Ok(Action::Continuous(values.to_vec()))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_space: ActionSpace,
    pub sampling_bounds: Vec<Interval>,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(Error::Dimension { expected: self.state_dim, got: state.len() });
        }
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        Ok(())
    }

    /// Bounds of the space a generative sampler draws from: the state
    /// bounds, followed by the action bounds for continuous actions.
    pub fn generative_bounds(&self) -> Vec<Interval> {
        let mut b = self.sampling_bounds.clone();
        if let ActionSpace::Continuous(a) = &self.action_space {
            b.extend_from_slice(a);
        }
        b
    }

    /// Every action of a discrete space, in index order.
    pub fn discrete_actions(&self) -> Option<Vec<Action>> {
        match self.action_space {
            ActionSpace::Discrete(n) => Some((0..n).map(Action::Discrete).collect()),
            ActionSpace::Continuous(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// A deterministic simulator wrapped as an MDP.
pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Draws an initial state from the standard distribution and zeroes the
    /// step counter. Identical seeds give identical states.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one step. `done` is set when either the pre- or post-step
    /// state is terminal or the episode cap is reached.
    fn step(&mut self, action: &Action) -> Result<StepResult>;

    /// Places the simulator in `state` and zeroes the step counter.
    fn set_state(&mut self, state: &[f64]) -> Result<()>;

    fn state(&self) -> Vec<f64>;

    fn kind(&self) -> EnvKind;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    CartPole,
    MountainCar,
    Pendulum,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::CartPole, EnvKind::MountainCar, EnvKind::Pendulum];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::CartPole => "cartpole",
            EnvKind::MountainCar => "mountaincar",
            EnvKind::Pendulum => "pendulum",
        }
    }

    pub fn spec(self) -> EnvSpec {
        match self {
            EnvKind::CartPole => cartpole::spec(),
            EnvKind::MountainCar => mountain_car::spec(),
            EnvKind::Pendulum => pendulum::spec(),
        }
    }

    pub fn make(self) -> Box<dyn Environment> {
        match self {
            EnvKind::CartPole => Box::new(CartPole::new()),
            EnvKind::MountainCar => Box::new(MountainCar::new()),
            EnvKind::Pendulum => Box::new(Pendulum::new()),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cartpole" => Ok(EnvKind::CartPole),
            "mountaincar" => Ok(EnvKind::MountainCar),
            "pendulum" => Ok(EnvKind::Pendulum),
            _ => Err(Error::UnknownEnv(s.to_string())),
        }
    }
}

/// Builds an environment from its config name.
pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    Ok(name.parse::<EnvKind>()?.make())
}
