//! Line-oriented `key = value` experiment configuration.
//!
//! ```text
//! [experiment]
//! algorithm = bsdp
//! env = cartpole
//! episodes = 500
//!
//! [agent]
//! learning_rate = 0.0001
//! ```
//!
//! Sections are `experiment`, `agent`, `diversity`, `schedule` and `replay`.
//! `#` starts a comment. Unknown sections or keys are errors. Knobs left out
//! take defaults that depend on the environment (see
//! [`ExperimentConfig::defaults`]).

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::agents::{AgentConfig, AgentKind};
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::math::OptimizerKind;

/// Episode cap for BinaryChain runs.
pub const CHAIN_EPISODE_CAP: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: AgentKind,
    pub env: EnvKind,
    /// Chain length N; only used by BinaryChain.
    pub chain_size: usize,
    /// Episodes per run; for BinaryChain the cap on episodes before a run
    /// counts as unsolved.
    pub episodes: usize,
    pub repeats: usize,
    pub seed_base: u64,
    /// Worker threads for running repeats concurrently.
    pub parallel: usize,
    pub output_dir: PathBuf,
    pub agent: AgentConfig,
    pub replay_capacity: usize,
}

impl ExperimentConfig {
    /// Defaults for one algorithm on one environment.
    ///
    /// BinaryChain: 5000-episode cap, learning rate 0.05, 10 members,
    /// discount 0.9, one hidden layer of 32 and per-step member resampling.
    /// Classic control: 500 episodes, learning rate 1e-4, 5 members,
    /// discount 0.99 and two hidden layers of 64.
    pub fn defaults(algorithm: AgentKind, env: EnvKind, chain_size: usize) -> Self {
        let mut agent = AgentConfig::default();
        let episodes = if env == EnvKind::BinaryChain {
            agent.learning_rate = 0.05;
            agent.ensemble_size = 10;
            agent.gamma = 0.9;
            agent.trainable_hidden = vec![32];
            agent.prior_hidden = vec![32];
            agent.per_step_resampling = true;
            CHAIN_EPISODE_CAP
        } else {
            if env == EnvKind::Line1d {
                agent.trainable_hidden = vec![32];
                agent.prior_hidden = vec![32];
                agent.ensemble_size = 10;
            }
            500
        };
        agent.prior_learning_rate = agent.learning_rate;
        Self {
            algorithm,
            env,
            chain_size,
            episodes,
            repeats: 5,
            seed_base: 0,
            parallel: 1,
            output_dir: PathBuf::from("out"),
            agent,
            replay_capacity: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.env == EnvKind::Line1d {
            return Err(Error::Config(
                "line1d has no dynamics; use demo-priors".into(),
            ));
        }
        if self.env == EnvKind::BinaryChain && self.chain_size == 0 {
            return Err(Error::Config("chain_size must be at least 1".into()));
        }
        if self.episodes == 0
            || self.repeats == 0
            || self.parallel == 0
            || self.replay_capacity == 0
        {
            return Err(Error::Config(
                "episodes, repeats, parallel and replay capacity must be positive".into(),
            ));
        }
        if self.algorithm == AgentKind::Bsdp {
            self.agent.diversity.validate()?;
            if self.agent.ensemble_size < 2 {
                return Err(Error::Config("bsdp needs an ensemble of at least 2".into()));
            }
        }
        self.agent.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = entries(text)?;
        let lookup = |key: &str| {
            entries
                .iter()
                .find(|e| e.section == "experiment" && e.key == key)
        };
        let algorithm = match lookup("algorithm") {
            Some(e) => e.parse::<AgentKind>()?,
            None => return Err(Error::Config("experiment.algorithm is required".into())),
        };
        let env = match lookup("env") {
            Some(e) => e.parse::<EnvKind>()?,
            None => return Err(Error::Config("experiment.env is required".into())),
        };
        let chain_size = lookup("chain_size")
            .map(|e| e.parse::<usize>())
            .transpose()?
            .unwrap_or(10);
        let mut cfg = Self::defaults(algorithm, env, chain_size);
        // The prior learning rate follows the TD one unless set explicitly.
        let mut prior_lr_set = false;
        for e in &entries {
            let a = &mut cfg.agent;
            match (e.section.as_str(), e.key.as_str()) {
                ("experiment", "algorithm" | "env" | "chain_size") => {}
                ("experiment", "episodes") => cfg.episodes = e.parse()?,
                ("experiment", "repeats") => cfg.repeats = e.parse()?,
                ("experiment", "seed_base") => cfg.seed_base = e.parse()?,
                ("experiment", "parallel") => cfg.parallel = e.parse()?,
                ("experiment", "output_dir") => cfg.output_dir = PathBuf::from(&e.value),
                ("agent", "ensemble_size") => a.ensemble_size = e.parse()?,
                ("agent", "learning_rate") => a.learning_rate = e.parse()?,
                ("agent", "optimizer") => a.optimizer = parse_optimizer(e)?,
                ("agent", "gamma") => a.gamma = e.parse()?,
                ("agent", "batch_size") => a.batch_size = e.parse()?,
                ("agent", "warmup") => a.warmup = e.parse()?,
                ("agent", "target_sync") => a.target_sync = e.parse()?,
                ("agent", "mask_probability") => a.mask_probability = e.parse()?,
                ("agent", "per_step_resampling") => a.per_step_resampling = e.parse()?,
                ("agent", "hidden") => a.trainable_hidden = e.parse_list()?,
                ("agent", "prior_hidden") => a.prior_hidden = e.parse_list()?,
                ("diversity", "epsilon") => a.diversity.epsilon = e.parse()?,
                ("diversity", "alpha1") => a.diversity.alpha1 = e.parse()?,
                ("diversity", "alpha2") => a.diversity.alpha2 = e.parse()?,
                ("diversity", "steps") => a.diversity.steps = e.parse()?,
                ("diversity", "fdm_step") => a.diversity.fdm_step = e.parse()?,
                ("diversity", "batch_size") => a.diversity.batch_size = e.parse()?,
                ("diversity", "learning_rate") => {
                    a.prior_learning_rate = e.parse()?;
                    prior_lr_set = true;
                }
                ("schedule", "beta1") => a.schedule.beta1 = e.parse()?,
                ("schedule", "beta2") => a.schedule.beta2 = e.parse()?,
                ("schedule", "lambda") => a.schedule.lambda = e.parse()?,
                ("replay", "capacity") => cfg.replay_capacity = e.parse()?,
                (s, k) => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{k}' in [{s}]",
                        e.line
                    )));
                }
            }
        }
        if !prior_lr_set {
            cfg.agent.prior_learning_rate = cfg.agent.learning_rate;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders every knob in the format accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let a = &self.agent;
        let d = &a.diversity;
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let optimizer = match a.optimizer {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam { .. } => "adam",
        };
        let mut s = String::new();
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "algorithm = {}", self.algorithm);
        let _ = writeln!(s, "env = {}", self.env);
        let _ = writeln!(s, "chain_size = {}", self.chain_size);
        let _ = writeln!(s, "episodes = {}", self.episodes);
        let _ = writeln!(s, "repeats = {}", self.repeats);
        let _ = writeln!(s, "seed_base = {}", self.seed_base);
        let _ = writeln!(s, "parallel = {}", self.parallel);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "\n[agent]");
        let _ = writeln!(s, "ensemble_size = {}", a.ensemble_size);
        let _ = writeln!(s, "learning_rate = {}", a.learning_rate);
        let _ = writeln!(s, "optimizer = {optimizer}");
        let _ = writeln!(s, "gamma = {}", a.gamma);
        let _ = writeln!(s, "batch_size = {}", a.batch_size);
        let _ = writeln!(s, "warmup = {}", a.warmup);
        let _ = writeln!(s, "target_sync = {}", a.target_sync);
        let _ = writeln!(s, "mask_probability = {}", a.mask_probability);
        let _ = writeln!(s, "per_step_resampling = {}", a.per_step_resampling);
        let _ = writeln!(s, "hidden = {}", list(&a.trainable_hidden));
        let _ = writeln!(s, "prior_hidden = {}", list(&a.prior_hidden));
        let _ = writeln!(s, "\n[diversity]");
        let _ = writeln!(s, "epsilon = {}", d.epsilon);
        let _ = writeln!(s, "alpha1 = {}", d.alpha1);
        let _ = writeln!(s, "alpha2 = {}", d.alpha2);
        let _ = writeln!(s, "steps = {}", d.steps);
        let _ = writeln!(s, "fdm_step = {}", d.fdm_step);
        let _ = writeln!(s, "batch_size = {}", d.batch_size);
        let _ = writeln!(s, "learning_rate = {}", a.prior_learning_rate);
        let _ = writeln!(s, "\n[schedule]");
        let _ = writeln!(s, "beta1 = {}", a.schedule.beta1);
        let _ = writeln!(s, "beta2 = {}", a.schedule.beta2);
        let _ = writeln!(s, "lambda = {}", a.schedule.lambda);
        let _ = writeln!(s, "\n[replay]");
        let _ = writeln!(s, "capacity = {}", self.replay_capacity);
        s
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

struct Entry {
    line: usize,
    section: String,
    key: String,
    value: String,
}

impl Entry {
    fn parse<T: FromStr>(&self) -> Result<T> {
        self.value.parse().map_err(|_| {
            Error::Config(format!(
                "line {}: invalid value '{}' for '{}'",
                self.line, self.value, self.key
            ))
        })
    }

    fn parse_list(&self) -> Result<Vec<usize>> {
        if self.value.is_empty() {
            return Ok(Vec::new());
        }
        self.value
            .split(',')
            .map(|v| {
                v.trim().parse().map_err(|_| {
                    Error::Config(format!(
                        "line {}: invalid layer width '{}'",
                        self.line,
                        v.trim()
                    ))
                })
            })
            .collect()
    }
}

fn parse_optimizer(e: &Entry) -> Result<OptimizerKind> {
    match e.value.as_str() {
        "adam" => Ok(OptimizerKind::ADAM_DEFAULT),
        "sgd" => Ok(OptimizerKind::Sgd),
        other => Err(Error::Config(format!(
            "line {}: unknown optimizer '{other}'",
            e.line
        ))),
    }
}

const SECTIONS: [&str; 5] = ["experiment", "agent", "diversity", "schedule", "replay"];

fn entries(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(Error::Config(format!(
                    "line {line}: unknown section [{name}]"
                )));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line}: expected 'key = value'")))?;
        let section = section
            .clone()
            .ok_or_else(|| Error::Config(format!("line {line}: key outside any section")))?;
        let key = key.trim().to_string();
        if out.iter().any(|e| e.section == section && e.key == key) {
            return Err(Error::Config(format!(
                "line {line}: duplicate key '{key}' in [{section}]"
            )));
        }
        out.push(Entry {
            line,
            section,
            key,
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_env_defaults() {
        let c =
            ExperimentConfig::parse("[experiment]\nalgorithm = bsdp\nenv = cartpole\n").unwrap();
        assert_eq!(c.episodes, 500);
        assert_eq!(c.agent.learning_rate, 1e-4);
        assert_eq!(c.agent.ensemble_size, 5);
        assert_eq!(c.agent.trainable_hidden, vec![64, 64]);
        let chain = ExperimentConfig::parse(
            "[experiment]\nalgorithm = bs\nenv = binary_chain\nchain_size = 7",
        )
        .unwrap();
        assert_eq!(chain.episodes, 5000);
        assert_eq!(chain.agent.learning_rate, 0.05);
        assert_eq!(chain.agent.ensemble_size, 10);
        assert_eq!(chain.agent.gamma, 0.9);
        assert!(chain.agent.per_step_resampling);
        assert_eq!(chain.chain_size, 7);
    }

    #[test]
    fn echo_round_trips() {
        let text = "[experiment]\nalgorithm = dqn\nenv = mountain_car\nepisodes = 123\n\
                    [schedule]\nbeta1 = 0.01\nlambda = 250\n[diversity]\nalpha2 = 0.3\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn errors() {
        let base = "[experiment]\nalgorithm = bsdp\nenv = cartpole\n";
        assert!(ExperimentConfig::parse(&format!("{base}[agent]\nlearnin_rate = 1\n")).is_err());
        assert!(ExperimentConfig::parse(&format!("{base}[bogus]\n")).is_err());
        assert!(ExperimentConfig::parse(&format!("{base}[agent]\ngamma = x\n")).is_err());
        assert!(
            ExperimentConfig::parse(&format!("{base}[agent]\ngamma = 0.9\ngamma = 0.8\n")).is_err()
        );
        assert!(ExperimentConfig::parse("algorithm = bsdp\n").is_err());
        assert!(
            ExperimentConfig::parse("[experiment]\nalgorithm = zzz\nenv = cartpole\n").is_err()
        );
        assert!(ExperimentConfig::parse("[experiment]\nalgorithm = bs\nenv = line1d\n").is_err());
        assert!(ExperimentConfig::parse("[experiment]\nenv = cartpole\n").is_err());
    }

    #[test]
    fn prior_learning_rate_follows_td_rate_unless_set() {
        let base =
            "[experiment]\nalgorithm = bsdp\nenv = acrobot\n[agent]\nlearning_rate = 0.003\n";
        assert_eq!(
            ExperimentConfig::parse(base)
                .unwrap()
                .agent
                .prior_learning_rate,
            0.003
        );
        let set = format!("{base}[diversity]\nlearning_rate = 0.01\n");
        assert_eq!(
            ExperimentConfig::parse(&set)
                .unwrap()
                .agent
                .prior_learning_rate,
            0.01
        );
    }
}
