use rand::Rng;

use super::{check_action, finished_error, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};
use crate::SeededRng;

/// Chain of `n` binary decisions against a hidden ground-truth action vector.
///
/// A correct action advances one position; any wrong action ends the episode
/// with reward 0. Only completing the whole vector pays reward 1.
/// Observations are one-hot over the `n + 1` positions.
#[derive(Debug, Clone)]
pub struct BinaryChain {
    spec: EnvSpec,
    truth: Vec<u8>,
    position: usize,
    done: bool,
}

impl BinaryChain {
    pub fn new(truth: Vec<u8>) -> Result<Self> {
        let spec = Self::spec_for(truth.len())?;
        if truth.iter().any(|&a| a > 1) {
            return Err(Error::Config("ground truth must be a binary vector".into()));
        }
        Ok(Self {
            spec,
            truth,
            position: 0,
            done: false,
        })
    }

    /// Draws a uniform ground truth of length `n`.
    pub fn random(n: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::new((0..n).map(|_| rng.random_range(0..2u8)).collect())
    }

    pub fn spec_for(n: usize) -> Result<EnvSpec> {
        if n == 0 {
            return Err(Error::Config("chain size must be at least 1".into()));
        }
        Ok(EnvSpec {
            state_dim: n + 1,
            action_count: 2,
            sampling_box: vec![(0.0, 1.0); n + 1],
            max_episode_steps: None,
        })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn ground_truth(&self) -> &[u8] {
        &self.truth
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn observation(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.truth.len() + 1];
        obs[self.position] = 1.0;
        obs
    }
}

impl Environment for BinaryChain {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut SeededRng) -> Vec<f64> {
        self.position = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(finished_error());
        }
        check_action(action, 2)?;
        let n = self.truth.len();
        let (reward, terminal) = if action == self.truth[self.position] as usize {
            self.position += 1;
            if self.position == n {
                (1.0, true)
            } else {
                (0.0, false)
            }
        } else {
            (0.0, true)
        };
        self.done = terminal;
        Ok(StepResult {
            next_state: self.observation(),
            reward,
            terminal,
            truncated: false,
        })
    }
}
