use rand::Rng;

use super::{check_action, finished_error, EnvSpec, Environment, StepResult};
use crate::error::Result;
use crate::SeededRng;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const X_LIMIT: f64 = 2.4;
const MAX_STEPS: usize = 500;

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        state_dim: 4,
        action_count: 2,
        sampling_box: vec![(-2.4, 2.4), (-3.0, 3.0), (-0.21, 0.21), (-3.0, 3.0)],
        max_episode_steps: Some(MAX_STEPS),
    }
}

/// One Euler step of the cart-pole dynamics. Action 0 pushes left, 1 right.
/// Returns the next state and whether the pole fell or the cart left the track.
pub fn cartpole_step(state: [f64; 4], action: usize) -> Result<([f64; 4], bool)> {
    check_action(action, 2)?;
    let [x, x_dot, theta, theta_dot] = state;
    let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
    let (sin, cos) = theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin - cos * temp)
        / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
    let next = [
        x + TAU * x_dot,
        x_dot + TAU * x_acc,
        theta + TAU * theta_dot,
        theta_dot + TAU * theta_acc,
    ];
    let failed =
        next[0] < -X_LIMIT || next[0] > X_LIMIT || next[2] < -THETA_LIMIT || next[2] > THETA_LIMIT;
    Ok((next, failed))
}

/// Cart-pole balancing: reward 1 per step, truncated at 500 steps.
#[derive(Debug, Clone)]
pub struct CartPole {
    spec: EnvSpec,
    state: [f64; 4],
    steps: usize,
    done: bool,
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl CartPole {
    pub fn new() -> Self {
        Self {
            spec: spec(),
            state: [0.0; 4],
            steps: 0,
            done: true,
        }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64> {
        for v in &mut self.state {
            *v = rng.random_range(-0.05..0.05);
        }
        self.steps = 0;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(finished_error());
        }
        let (next, terminal) = cartpole_step(self.state, action)?;
        self.state = next;
        self.steps += 1;
        let truncated = !terminal && self.steps >= MAX_STEPS;
        self.done = terminal || truncated;
        Ok(StepResult {
            next_state: next.to_vec(),
            reward: 1.0,
            terminal,
            truncated,
        })
    }
}
