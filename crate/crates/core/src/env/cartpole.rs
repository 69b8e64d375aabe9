use rand::Rng as _;

use super::{Action, ActionSpace, EnvKind, EnvSpec, Environment, Interval, StepResult};
use crate::error::Result;
use crate::rng::rng_from;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
pub const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const X_THRESHOLD: f64 = 2.4;

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        name: "cartpole".into(),
        state_dim: 4,
        action_space: ActionSpace::Discrete(2),
        sampling_bounds: vec![
            Interval::new(-4.8, 4.8),
            Interval::new(-4.0, 4.0),
            Interval::new(-0.418, 0.418),
            Interval::new(-4.0, 4.0),
        ],
        max_episode_steps: 500,
    }
}

/// Cart-pole balancing, state `(x, x_dot, theta, theta_dot)`, explicit Euler
/// with `dt = 0.02`. Action 0 pushes left, 1 pushes right.
#[derive(Clone, Debug)]
pub struct CartPole {
    spec: EnvSpec,
    state: [f64; 4],
    steps: usize,
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl CartPole {
    pub fn new() -> Self {
        CartPole { spec: spec(), state: [0.0; 4], steps: 0 }
    }

    fn terminal(s: &[f64; 4]) -> bool {
        s[0].abs() > X_THRESHOLD || s[2].abs() > THETA_THRESHOLD
    }

    /// One Euler step of the cart-pole equations of motion.
    pub fn dynamics(s: &[f64; 4], push_right: bool) -> [f64; 4] {
        let [x, x_dot, theta, theta_dot] = *s;
        let force = if push_right { FORCE_MAG } else { -FORCE_MAG };
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        [x + TAU * x_dot, x_dot + TAU * x_acc, theta + TAU * theta_dot, theta_dot + TAU * theta_acc]
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed, &[crate::rng::tag("cartpole/reset")]);
        for v in &mut self.state {
            *v = rng.random_range(-0.05..=0.05);
        }
        self.steps = 0;
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.spec.action_space.validate(action)?;
        let push_right = matches!(action, Action::Discrete(1));
        let was_terminal = Self::terminal(&self.state);
        self.state = Self::dynamics(&self.state, push_right);
        self.steps += 1;
        let done = was_terminal || Self::terminal(&self.state) || self.steps >= self.spec.max_episode_steps;
        Ok(StepResult { next_state: self.state.to_vec(), reward: 1.0, done })
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
        EnvKind::CartPole
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn reset_is_small_and_deterministic() {
        let mut env = CartPole::new();
        let s = env.reset(7);
        assert!(s.iter().all(|x| x.abs() <= 0.05));
        assert_eq!(s, env.reset(7));
        assert_ne!(s, env.reset(8));
    }

    #[test]
    fn push_right_from_rest_matches_hand_evaluation() {
        // temp = 10 / 1.1; theta_acc = -temp / (0.5 * (4/3 - 0.1/1.1));
        // x_acc = temp - 0.05 * theta_acc / 1.1; velocities gain dt * acc.
        let temp = 10.0 / 1.1;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
        let x_acc = temp - 0.05 * theta_acc / 1.1;
        let mut env = CartPole::new();
        env.set_state(&[0.0; 4]).unwrap();
        let r = env.step(&Action::Discrete(1)).unwrap();
        assert_eq!(r.next_state[0], 0.0);
        assert!((r.next_state[1] - 0.02 * x_acc).abs() < 1e-12);
        assert_eq!(r.next_state[2], 0.0);
        assert!((r.next_state[3] - 0.02 * theta_acc).abs() < 1e-12);
        assert!((r.next_state[1] - 0.1951).abs() < 1e-4);
        assert!((r.next_state[3] + 0.2927).abs() < 1e-4);
        assert!(!r.done);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let mut env = CartPole::new();
        assert!(matches!(env.set_state(&[0.0, 0.0, 0.0]), Err(Error::Dimension { expected: 4, got: 3 })));
        assert!(env.set_state(&[0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn invalid_action_is_rejected() {
        let mut env = CartPole::new();
        env.reset(0);
        assert!(env.step(&Action::Discrete(2)).is_err());
        assert!(env.step(&Action::Continuous(vec![0.0])).is_err());
    }

    #[test]
    fn falling_pole_terminates() {
        let mut env = CartPole::new();
        env.set_state(&[0.0, 0.0, 0.2, 2.0]).unwrap();
        assert!(env.step(&Action::Discrete(0)).unwrap().done);
    }
}
