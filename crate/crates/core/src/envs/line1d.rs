use rand::Rng;

use super::{EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};
use crate::SeededRng;

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        state_dim: 1,
        action_count: 2,
        sampling_box: vec![(-5.0, 5.0)],
        max_episode_steps: Some(0),
    }
}

/// One-dimensional state space `[-5, 5]` with two actions and no dynamics;
/// used only to visualise prior networks.
#[derive(Debug, Clone)]
pub struct Line1d {
    spec: EnvSpec,
}

impl Default for Line1d {
    fn default() -> Self {
        Self::new()
    }
}

impl Line1d {
    pub fn new() -> Self {
        Self { spec: spec() }
    }

    /// `points` evenly spaced states from -5 to 5 inclusive.
    pub fn grid(points: usize) -> Vec<f64> {
        match points {
            0 => Vec::new(),
            1 => vec![0.0],
            _ => (0..points)
                .map(|i| -5.0 + 10.0 * i as f64 / (points - 1) as f64)
                .collect(),
        }
    }
}

impl Environment for Line1d {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64> {
        vec![rng.random_range(-5.0..5.0)]
    }

    fn step(&mut self, _action: usize) -> Result<StepResult> {
        Err(Error::Protocol("line1d has no dynamics".into()))
    }
}
