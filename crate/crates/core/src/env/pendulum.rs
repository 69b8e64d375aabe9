use std::f64::consts::PI;

use rand::Rng as _;

use super::{Action, ActionSpace, EnvKind, EnvSpec, Environment, Interval, StepResult};
use crate::error::Result;
use crate::rng::rng_from;

pub const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;
const DT: f64 = 0.05;
const G: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        name: "pendulum".into(),
        state_dim: 3,
        action_space: ActionSpace::Continuous(vec![Interval::new(-MAX_TORQUE, MAX_TORQUE)]),
        sampling_bounds: vec![Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0), Interval::new(-MAX_SPEED, MAX_SPEED)],
        max_episode_steps: 200,
    }
}

/// Torque-limited pendulum swing-up. Observed state is
/// `(cos theta, sin theta, theta_dot)` with `theta = 0` upright; the internal
/// angle is recovered with `atan2`, so injected states need not lie exactly
/// on the unit circle. The task never terminates; only the step cap ends an
/// episode.
/// The state is held exactly as observed, `(cos θ, sin θ, θ̇)`, so a
/// state injected with `set_state` is indistinguishable from one reached by
/// stepping.
#[derive(Clone, Debug)]
pub struct Pendulum {
    spec: EnvSpec,
    cos: f64,
    sin: f64,
    theta_dot: f64,
    steps: usize,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Pendulum {
    pub fn new() -> Self {
        Pendulum { spec: spec(), cos: -1.0, sin: 0.0, theta_dot: 0.0, steps: 0 }
    }

    fn set_angle(&mut self, theta: f64) {
        let (s, c) = theta.sin_cos();
        self.cos = c;
        self.sin = s;
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.cos, self.sin, self.theta_dot]
    }
}

/// Largest tolerated deviation of `c² + s²` from 1 before an injected
/// state is projected back onto the circle.
const CIRCLE_TOL: f64 = 1e-9;

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed, &[crate::rng::tag("pendulum/reset")]);
        self.set_angle(rng.random_range(-PI..=PI));
        self.theta_dot = rng.random_range(-1.0..=1.0);
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.spec.action_space.validate(action)?;
        let Action::Continuous(u) = action else { unreachable!("validated above") };
        let u = u[0];
        let th = self.sin.atan2(self.cos);
        let reward = -(th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);
        let acc = 3.0 * G / (2.0 * LENGTH) * th.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
        self.theta_dot = (self.theta_dot + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.set_angle(th + self.theta_dot * DT);
        self.steps += 1;
        let done = self.steps >= self.spec.max_episode_steps;
        Ok(StepResult { next_state: self.observe(), reward, done })
    }

    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        self.spec.check_state(state)?;
        let r2 = state[0] * state[0] + state[1] * state[1];
        if (r2 - 1.0).abs() > CIRCLE_TOL {
            self.set_angle(state[1].atan2(state[0]));
        } else {
            self.cos = state[0];
            self.sin = state[1];
        }
        self.theta_dot = state[2];
        self.steps = 0;
        Ok(())
    }

    fn state(&self) -> Vec<f64> {
        self.observe()
    }

    fn kind(&self) -> EnvKind {
        EnvKind::Pendulum
    }
}
