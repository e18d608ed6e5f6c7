use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::metrics::{
    aggregate_curves, episodes_to_solve, exploration_rate, median, moving_average,
};
use crate::agents::Agent;
use crate::envs::{make_env, EnvKind};
use crate::error::{Error, Result};
use crate::stream_rng;

/// Smoothing window applied before aggregating curves.
pub const SMOOTHING_WINDOW: usize = 50;

/// Random stream of the BinaryChain truth vector.
pub const STREAM_ENV: u64 = 5;
/// Random stream of episode resets and action selection.
pub const STREAM_EPISODES: u64 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub rewards: Vec<f64>,
    pub exploration_rates: Vec<f64>,
    /// BinaryChain only; `None` when unsolved within the cap.
    pub episodes_to_solve: Option<usize>,
    pub duration: Duration,
}

impl RunResult {
    pub fn episodes(&self) -> usize {
        self.rewards.len()
    }
}

/// One isolated run: fresh agent (diversified priors for BSDP), environment,
/// buffer and random streams, all derived from `seed`.
pub fn run_single(cfg: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    let start = Instant::now();
    let mut env_rng = stream_rng(seed, STREAM_ENV);
    let mut env = make_env(cfg.env, cfg.chain_size, &mut env_rng)?;
    let mut agent = Agent::new(cfg.algorithm, cfg.agent.clone(), env.spec(), seed)?;
    let mut buffer = agent.new_buffer(cfg.replay_capacity)?;
    let mut rng = stream_rng(seed, STREAM_EPISODES);
    let chain = cfg.env == EnvKind::BinaryChain;
    let mut rewards = Vec::new();
    let mut rates = Vec::new();
    for _ in 0..cfg.episodes {
        let rec = agent.train_episode(env.as_mut(), &mut buffer, &mut rng)?;
        rewards.push(rec.reward);
        rates.push(exploration_rate(&rec.exploration_flags)?);
        if chain && rec.reward > 0.0 {
            break;
        }
    }
    Ok(RunResult {
        seed,
        episodes_to_solve: if chain {
            episodes_to_solve(&rewards, cfg.episodes)
        } else {
            None
        },
        rewards,
        exploration_rates: rates,
        duration: start.elapsed(),
    })
}

/// Runs `cfg.repeats` seeds starting at `cfg.seed_base`, on up to
/// `cfg.parallel` threads. Results are ordered by seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.repeats as u64).map(|i| cfg.seed_base + i).collect();
    if cfg.parallel <= 1 {
        return seeds.iter().map(|&s| run_single(cfg, s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| run_single(cfg, s)).collect())
}

/// Episodes-to-solve with unsolved runs counted at the cap.
pub fn capped_solve_episodes(runs: &[RunResult], cap: usize) -> Vec<f64> {
    runs.iter()
        .map(|r| r.episodes_to_solve.unwrap_or(cap) as f64)
        .collect()
}

fn write_curves(path: &Path, runs: &[RunResult], pick: fn(&RunResult) -> &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["episode".to_string()];
    header.extend(runs.iter().map(|r| format!("seed_{}", r.seed)));
    w.write_record(&header)?;
    let len = runs.iter().map(|r| pick(r).len()).max().unwrap_or(0);
    for i in 0..len {
        let mut row = vec![(i + 1).to_string()];
        row.extend(
            runs.iter()
                .map(|r| pick(r).get(i).map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by the curve writer back into per-seed columns.
/// Blank cells (runs that stopped early) end that column.
pub fn read_curves(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let names: Vec<String> = r.headers()?.iter().skip(1).map(String::from).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for rec in r.records() {
        let rec = rec?;
        for (c, cell) in cols.iter_mut().zip(rec.iter().skip(1)) {
            if !cell.is_empty() {
                c.push(
                    cell.parse()
                        .map_err(|_| Error::Config(format!("bad number '{cell}'")))?,
                );
            }
        }
    }
    Ok(names.into_iter().zip(cols).collect())
}

/// Writes `reward.csv` and `erate.csv` (one row per episode, one column per
/// seed). Equal-length runs also get `aggregate.csv` with smoothed mean and
/// band columns; BinaryChain runs get `solve.csv` instead.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    runs: &[RunResult],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = vec![dir.join("reward.csv"), dir.join("erate.csv")];
    write_curves(&paths[0], runs, |r| &r.rewards)?;
    write_curves(&paths[1], runs, |r| &r.exploration_rates)?;
    if cfg.env == EnvKind::BinaryChain {
        let path = dir.join("solve.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["seed", "episodes_to_solve", "unsolved"])?;
        for r in runs {
            let eps = r.episodes_to_solve.unwrap_or(cfg.episodes);
            w.write_record([
                r.seed.to_string(),
                eps.to_string(),
                r.episodes_to_solve.is_none().to_string(),
            ])?;
        }
        w.flush()?;
        paths.push(path);
    } else {
        let smooth = |pick: fn(&RunResult) -> &[f64]| {
            runs.iter()
                .map(|r| moving_average(pick(r), SMOOTHING_WINDOW))
                .collect::<Result<Vec<_>>>()
        };
        let reward = aggregate_curves(&smooth(|r| &r.rewards)?)?;
        let erate = aggregate_curves(&smooth(|r| &r.exploration_rates)?)?;
        let path = dir.join("aggregate.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "episode",
            "reward_mean",
            "reward_lower",
            "reward_upper",
            "erate_mean",
            "erate_lower",
            "erate_upper",
        ])?;
        for i in 0..reward.len() {
            w.write_record([
                (i + 1).to_string(),
                reward.mean[i].to_string(),
                reward.lower[i].to_string(),
                reward.upper[i].to_string(),
                erate.mean[i].to_string(),
                erate.lower[i].to_string(),
                erate.upper[i].to_string(),
            ])?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// One row of a chain sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub chain_size: usize,
    pub median_episodes_to_solve: f64,
    pub unsolved_runs: usize,
}

/// Runs `base` on BinaryChain-N for every N in `sizes`.
pub fn sweep_chain(base: &ExperimentConfig, sizes: &[usize]) -> Result<Vec<SweepRow>> {
    if base.env != EnvKind::BinaryChain {
        return Err(Error::Config("sweep-chain needs env = binary_chain".into()));
    }
    sizes
        .iter()
        .map(|&n| {
            let cfg = ExperimentConfig {
                chain_size: n,
                ..base.clone()
            };
            let runs = run_experiment(&cfg)?;
            Ok(SweepRow {
                chain_size: n,
                median_episodes_to_solve: median(&capped_solve_episodes(&runs, cfg.episodes))?,
                unsolved_runs: runs
                    .iter()
                    .filter(|r| r.episodes_to_solve.is_none())
                    .count(),
            })
        })
        .collect()
}

pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "median_episodes_to_solve", "unsolved_runs"])?;
    for r in rows {
        w.write_record([
            r.chain_size.to_string(),
            r.median_episodes_to_solve.to_string(),
            r.unsolved_runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentKind;

    fn quick(algo: AgentKind, env: EnvKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::defaults(algo, env, 3);
        c.episodes = 4;
        c.repeats = 2;
        c.agent.trainable_hidden = vec![8];
        c.agent.prior_hidden = vec![8];
        c.agent.warmup = 16;
        c.agent.batch_size = 8;
        c.agent.diversity.steps = 10;
        c.agent.diversity.batch_size = 8;
        c
    }

    #[test]
    fn repeats_use_distinct_seeds() {
        let mut c = quick(AgentKind::Bsp, EnvKind::CartPole);
        c.seed_base = 7;
        c.repeats = 5;
        c.episodes = 1;
        let runs = run_experiment(&c).unwrap();
        let seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![7, 8, 9, 10, 11]);
    }

    #[test]
    fn identical_configs_reproduce() {
        let c = quick(AgentKind::Bsdp, EnvKind::MountainCar);
        let strip = |v: Vec<RunResult>| {
            v.into_iter()
                .map(|r| (r.rewards, r.exploration_rates))
                .collect::<Vec<_>>()
        };
        assert_eq!(
            strip(run_experiment(&c).unwrap()),
            strip(run_experiment(&c).unwrap())
        );
    }

    #[test]
    fn parallel_matches_serial() {
        let mut c = quick(AgentKind::Bs, EnvKind::CartPole);
        let serial: Vec<_> = run_experiment(&c)
            .unwrap()
            .into_iter()
            .map(|r| r.rewards)
            .collect();
        c.parallel = 2;
        let par: Vec<_> = run_experiment(&c)
            .unwrap()
            .into_iter()
            .map(|r| r.rewards)
            .collect();
        assert_eq!(serial, par);
    }

    #[test]
    fn chain_runs_stop_at_solve() {
        let mut c = quick(AgentKind::Random, EnvKind::BinaryChain);
        c.chain_size = 2;
        c.episodes = 5000;
        for r in run_experiment(&c).unwrap() {
            let k = r.episodes_to_solve.unwrap();
            assert_eq!(r.rewards.len(), k);
            assert_eq!(r.rewards[k - 1], 1.0);
        }
    }

    #[test]
    fn outputs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = quick(AgentKind::Bsp, EnvKind::CartPole);
        let runs = run_experiment(&c).unwrap();
        let paths = write_outputs(&c, &runs, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let back = read_curves(&paths[0]).unwrap();
        for ((name, col), r) in back.iter().zip(&runs) {
            assert_eq!(name, &format!("seed_{}", r.seed));
            for (a, b) in col.iter().zip(&r.rewards) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        assert!(dir.path().join("aggregate.csv").exists());
    }

    #[test]
    fn chain_outputs_include_solve_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = quick(AgentKind::Random, EnvKind::BinaryChain);
        c.episodes = 2;
        c.chain_size = 12;
        let runs = run_experiment(&c).unwrap();
        write_outputs(&c, &runs, dir.path()).unwrap();
        let mut r = csv::Reader::from_path(dir.path().join("solve.csv")).unwrap();
        for rec in r.records() {
            let rec = rec.unwrap();
            if &rec[2] == "true" {
                assert_eq!(&rec[1], "2");
            }
        }
    }
}
