//! Experiment configuration, seed sweeps, metrics, CSV output, the prior
//! demo, gradient checks and the command-line interface.

mod cli;
pub mod config;
pub mod demo;
pub mod experiment;
pub mod gradcheck;
pub mod metrics;

pub use cli::cli_main;
pub use config::{ExperimentConfig, CHAIN_EPISODE_CAP};
pub use experiment::{
    run_experiment, run_single, sweep_chain, write_outputs, RunResult, SweepRow, STREAM_ENV,
    STREAM_EPISODES,
};
pub use metrics::{
    aggregate_curves, episodes_to_solve, exploration_rate, moving_average, AggregateCurve,
};
