use rand::Rng as _;

use super::{Action, ActionSpace, EnvKind, EnvSpec, Environment, Interval, StepResult};
use crate::error::Result;
use crate::rng::rng_from;

const MIN_POSITION: f64 = -1.2;
const MAX_POSITION: f64 = 0.6;
const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        name: "mountaincar".into(),
        state_dim: 2,
        action_space: ActionSpace::Discrete(3),
        sampling_bounds: vec![Interval::new(MIN_POSITION, MAX_POSITION), Interval::new(-MAX_SPEED, MAX_SPEED)],
        max_episode_steps: 200,
    }
}

/// Under-powered car in a valley, state `(position, velocity)`.
/// Actions: 0 push left, 1 coast, 2 push right.
#[derive(Clone, Debug)]
pub struct MountainCar {
    spec: EnvSpec,
    state: [f64; 2],
    steps: usize,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl MountainCar {
    pub fn new() -> Self {
        MountainCar { spec: spec(), state: [-0.5, 0.0], steps: 0 }
    }

    fn terminal(s: &[f64; 2]) -> bool {
        s[0] >= GOAL_POSITION
    }

    pub fn dynamics(s: &[f64; 2], action: usize) -> [f64; 2] {
        let [p, v] = *s;
        let v = (v + (action as f64 - 1.0) * FORCE - GRAVITY * (3.0 * p).cos()).clamp(-MAX_SPEED, MAX_SPEED);
        let p = (p + v).clamp(MIN_POSITION, MAX_POSITION);
        let v = if p == MIN_POSITION && v < 0.0 { 0.0 } else { v };
        [p, v]
    }
}

impl Environment for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed, &[crate::rng::tag("mountaincar/reset")]);
        self.state = [rng.random_range(-0.6..=-0.4), 0.0];
        self.steps = 0;
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.spec.action_space.validate(action)?;
        let Action::Discrete(a) = *action else { unreachable!("validated above") };
        let was_terminal = Self::terminal(&self.state);
        self.state = Self::dynamics(&self.state, a);
        self.steps += 1;
        let done = was_terminal || Self::terminal(&self.state) || self.steps >= self.spec.max_episode_steps;
        Ok(StepResult { next_state: self.state.to_vec(), reward: -1.0, done })
    }

    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        self.spec.check_state(state)?;
        self.state.copy_from_slice(state);
        self.steps = 0;
        Ok(())
    }

    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }

    fn kind(&self) -> EnvKind {
        EnvKind::MountainCar
    }
}
