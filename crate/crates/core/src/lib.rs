//! Bootstrapped DQN with diverse prior networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`math`]: dense networks with analytic backpropagation, SGD/Adam, and the
//!   softmax / KL / clip / finite-difference primitives.
//! - [`diverse_prior`]: the three diversity losses and the prior
//!   initialization procedure that optimizes prior networks before training.
//! - [`replay`]: a bounded FIFO replay buffer with per-member bootstrap masks.
//! - [`envs`]: BinaryChain, CartPole, MountainCar, Acrobot and the 1-D demo space.
//! - [`agents`]: the Q-ensemble, TD training and the episode loop for
//!   BSDP, BSP, BS, epsilon-greedy DQN and a uniform random baseline.
//! - [`harness`]: configuration, seed sweeps, metrics, CSV output and the CLI.

pub mod agents;
pub mod diverse_prior;
pub mod envs;
mod error;
pub mod harness;
pub mod math;
pub mod replay;

pub use error::{Error, Result};

/// Random source used throughout the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds a seeded generator on an independent stream.
///
/// Runs draw from several streams (network init, prior init, exploration, ...)
/// so that changing how one component consumes randomness never perturbs another.
pub fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    use rand::SeedableRng;
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
