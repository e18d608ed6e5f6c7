use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::config::ExperimentConfig;
use super::demo::{dump_prior_curves, DemoConfig};
use super::experiment::{run_experiment, sweep_chain, write_outputs, write_sweep};
use super::gradcheck;
use crate::agents::AgentKind;
use crate::envs::EnvKind;
use crate::error::Error;

#[derive(Debug, Parser)]
#[command(
    name = "bsdp",
    about = "Bootstrapped DQN with diverse priors: experiments and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment config and write per-run and aggregated CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed_base: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallel: Option<usize>,
        /// Print the resolved config and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Episodes-to-solve of one algorithm on BinaryChain-1..=nmax.
    SweepChain {
        #[arg(long)]
        algo: AgentKind,
        #[arg(long)]
        nmax: usize,
        #[arg(long, default_value = "binary_chain")]
        env: EnvKind,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Dump prior Q-curves on the line setup for four prior regimes.
    DemoPriors {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
    },
    /// Finite-difference check of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
    },
}

const EXIT_FAILURE: i32 = 1;
const EXIT_USAGE: i32 = 2;

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32, Error> {
    match command {
        Command::Run {
            config,
            seed_base,
            out,
            parallel,
            print_config,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            if let Some(s) = seed_base {
                cfg.seed_base = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(p) = parallel {
                cfg.parallel = p;
            }
            cfg.validate()?;
            if print_config {
                print!("{}", cfg.to_text());
                return Ok(0);
            }
            let runs = run_experiment(&cfg)?;
            for p in write_outputs(&cfg, &runs, &cfg.output_dir)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::SweepChain {
            algo,
            nmax,
            env,
            seed_base,
            out,
            parallel,
        } => {
            if env != EnvKind::BinaryChain {
                return Err(Error::Config(
                    "sweep-chain only supports --env binary_chain".into(),
                ));
            }
            if nmax == 0 {
                return Err(Error::Config("--nmax must be at least 1".into()));
            }
            let mut cfg = ExperimentConfig::defaults(algo, env, 1);
            cfg.seed_base = seed_base;
            cfg.parallel = parallel;
            let sizes: Vec<usize> = (1..=nmax).collect();
            let rows = sweep_chain(&cfg, &sizes)?;
            let path = out.join(format!("sweep_chain_{algo}.csv"));
            write_sweep(&rows, &path)?;
            println!("n,median_episodes_to_solve,unsolved_runs");
            for r in &rows {
                println!(
                    "{},{},{}",
                    r.chain_size, r.median_episodes_to_solve, r.unsolved_runs
                );
            }
            Ok(0)
        }
        Command::DemoPriors { out, seed_base } => {
            let cfg = DemoConfig {
                seed: seed_base,
                ..DemoConfig::default()
            };
            for p in dump_prior_curves(&cfg, &out)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Gradcheck {
            instances,
            seed_base,
        } => {
            let mut ok = true;
            for r in gradcheck::run_all(instances, seed_base)? {
                let verdict = if r.passed() { "PASS" } else { "FAIL" };
                println!(
                    "{verdict} {}: {} instances, max relative error {:.3e} (tolerance {:.0e})",
                    r.name,
                    r.instances,
                    r.max_relative_error,
                    gradcheck::GRADCHECK_TOLERANCE
                );
                ok &= r.passed();
            }
            Ok(if ok { 0 } else { EXIT_FAILURE })
        }
    }
}
