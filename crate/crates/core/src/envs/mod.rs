//! Episodic discrete-action environments.
//!
//! Classic-control dynamics follow the standard public (Gym) formulations,
//! transcribed in double precision.

mod acrobot;
mod binary_chain;
mod cartpole;
mod line1d;
mod mountain_car;

use std::fmt;
use std::str::FromStr;

pub use acrobot::{acrobot_step, Acrobot};
pub use binary_chain::BinaryChain;
pub use cartpole::{cartpole_step, CartPole};
pub use line1d::Line1d;
pub use mountain_car::{mountain_car_step, MountainCar};

use crate::error::{Error, Result};
use crate::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_count: usize,
    /// Per-dimension `(low, high)` box used when sampling states for prior
    /// diversification.
    pub sampling_box: Vec<(f64, f64)>,
    /// Steps after which an episode is truncated; `None` when the episode
    /// always ends on its own.
    pub max_episode_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// The MDP reached a terminal state; no bootstrapping past it.
    pub terminal: bool,
    /// The episode was cut by the time limit.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Reset/step contract shared by every environment.
pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode and returns its initial observation.
    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64>;

    /// Advances one step. Stepping a finished episode is a protocol error.
    fn step(&mut self, action: usize) -> Result<StepResult>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    BinaryChain,
    CartPole,
    MountainCar,
    Acrobot,
    Line1d,
}

impl EnvKind {
    pub const ALL: [EnvKind; 5] = [
        EnvKind::BinaryChain,
        EnvKind::CartPole,
        EnvKind::MountainCar,
        EnvKind::Acrobot,
        EnvKind::Line1d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::BinaryChain => "binary_chain",
            EnvKind::CartPole => "cartpole",
            EnvKind::MountainCar => "mountain_car",
            EnvKind::Acrobot => "acrobot",
            EnvKind::Line1d => "line1d",
        }
    }

    pub fn is_classic_control(self) -> bool {
        matches!(
            self,
            EnvKind::CartPole | EnvKind::MountainCar | EnvKind::Acrobot
        )
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
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown environment '{s}'")))
    }
}

/// Builds an environment. `chain_size` only matters for BinaryChain, whose
/// ground-truth action vector is drawn from `rng`.
pub fn make_env(
    kind: EnvKind,
    chain_size: usize,
    rng: &mut SeededRng,
) -> Result<Box<dyn Environment>> {
    Ok(match kind {
        EnvKind::BinaryChain => Box::new(BinaryChain::random(chain_size, rng)?),
        EnvKind::CartPole => Box::new(CartPole::new()),
        EnvKind::MountainCar => Box::new(MountainCar::new()),
        EnvKind::Acrobot => Box::new(Acrobot::new()),
        EnvKind::Line1d => Box::new(Line1d::new()),
    })
}

/// The spec of an environment kind without constructing a run.
pub fn env_spec(kind: EnvKind, chain_size: usize) -> Result<EnvSpec> {
    Ok(match kind {
        EnvKind::BinaryChain => BinaryChain::spec_for(chain_size)?,
        EnvKind::CartPole => cartpole::spec(),
        EnvKind::MountainCar => mountain_car::spec(),
        EnvKind::Acrobot => acrobot::spec(),
        EnvKind::Line1d => line1d::spec(),
    })
}

pub(crate) fn check_action(action: usize, count: usize) -> Result<()> {
    if action < count {
        Ok(())
    } else {
        Err(Error::Protocol(format!(
            "action {action} is not one of the {count} available actions"
        )))
    }
}

pub(crate) fn finished_error() -> Error {
    Error::Protocol("step called on a finished episode; call reset first".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in EnvKind::ALL {
            assert_eq!(k.name().parse::<EnvKind>().unwrap(), k);
        }
        assert!("pong".parse::<EnvKind>().is_err());
    }

    #[test]
    fn specs_have_finite_boxes_and_enough_actions() {
        for k in EnvKind::ALL {
            let spec = env_spec(k, 5).unwrap();
            assert!(spec.action_count >= 2);
            assert_eq!(spec.sampling_box.len(), spec.state_dim);
            assert!(spec
                .sampling_box
                .iter()
                .all(|(l, h)| l.is_finite() && h.is_finite() && l < h));
        }
    }
}
