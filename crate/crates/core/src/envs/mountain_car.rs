use rand::Rng;

use super::{check_action, finished_error, EnvSpec, Environment, StepResult};
use crate::error::Result;
use crate::SeededRng;

const MIN_POSITION: f64 = -1.2;
const MAX_POSITION: f64 = 0.6;
const MAX_SPEED: f64 = 0.07;
const GOAL_POSITION: f64 = 0.5;
const GOAL_VELOCITY: f64 = 0.0;
const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;
const MAX_STEPS: usize = 200;

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        state_dim: 2,
        action_count: 3,
        sampling_box: vec![(MIN_POSITION, MAX_POSITION), (-MAX_SPEED, MAX_SPEED)],
        max_episode_steps: Some(MAX_STEPS),
    }
}

/// One step of the mountain-car update. Actions: 0 left, 1 none, 2 right.
/// Returns the next `[position, velocity]` and whether the goal was reached.
pub fn mountain_car_step(state: [f64; 2], action: usize) -> Result<([f64; 2], bool)> {
    check_action(action, 3)?;
    let [mut position, mut velocity] = state;
    velocity += (action as f64 - 1.0) * FORCE + (3.0 * position).cos() * (-GRAVITY);
    velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
    position += velocity;
    position = position.clamp(MIN_POSITION, MAX_POSITION);
    if position == MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    let reached = position >= GOAL_POSITION && velocity >= GOAL_VELOCITY;
    Ok(([position, velocity], reached))
}

/// Under-powered car in a sinusoidal valley: reward -1 per step, truncated at 200.
#[derive(Debug, Clone)]
pub struct MountainCar {
    spec: EnvSpec,
    state: [f64; 2],
    steps: usize,
    done: bool,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl MountainCar {
    pub fn new() -> Self {
        Self {
            spec: spec(),
            state: [0.0; 2],
            steps: 0,
            done: true,
        }
    }
}

impl Environment for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64> {
        self.state = [rng.random_range(-0.6..-0.4), 0.0];
        self.steps = 0;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(finished_error());
        }
        let (next, terminal) = mountain_car_step(self.state, action)?;
        self.state = next;
        self.steps += 1;
        let truncated = !terminal && self.steps >= MAX_STEPS;
        self.done = terminal || truncated;
        Ok(StepResult {
            next_state: next.to_vec(),
            reward: -1.0,
            terminal,
            truncated,
        })
    }
}
