use std::collections::VecDeque;

use rand::Rng;

use super::member::QEnsembleMember;
use super::policy::{argmax, select_member, EpsilonSchedule};
use super::AgentKind;
use crate::diverse_prior::{diverse_prior_init, DiversityParams, StateSampler};
use crate::envs::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::math::{Activation, Mlp, Optimizer, OptimizerKind};
use crate::replay::{sample_mask, MaskedTransition, ReplayBuffer};
use crate::{stream_rng, SeededRng};

// Independent random streams derived from a run seed.
const STREAM_TRAINABLE: u64 = 1;
const STREAM_PRIOR: u64 = 2;
const STREAM_DIVERSITY_STATES: u64 = 3;
const STREAM_DIVERSITY_PICK: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub ensemble_size: usize,
    pub trainable_hidden: Vec<usize>,
    pub prior_hidden: Vec<usize>,
    pub trainable_activation: Activation,
    pub prior_activation: Activation,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Buffer size below which no gradient updates happen.
    pub warmup: usize,
    /// Environment steps between hard target-network copies.
    pub target_sync: usize,
    pub mask_probability: f64,
    /// Draw a new acting member every step instead of every episode.
    pub per_step_resampling: bool,
    pub schedule: EpsilonSchedule,
    pub diversity: DiversityParams,
    pub prior_learning_rate: f64,
    /// Keep, per member, the ids of every transition it was trained on.
    pub record_updates: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 5,
            trainable_hidden: vec![64, 64],
            prior_hidden: vec![64, 64],
            trainable_activation: Activation::Relu,
            prior_activation: Activation::Tanh,
            optimizer: OptimizerKind::ADAM_DEFAULT,
            learning_rate: 1e-4,
            gamma: 0.99,
            batch_size: 64,
            warmup: 500,
            target_sync: 100,
            mask_probability: 0.5,
            per_step_resampling: false,
            schedule: EpsilonSchedule::default(),
            diversity: DiversityParams::default(),
            prior_learning_rate: 1e-4,
            record_updates: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble_size must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.batch_size == 0 || self.target_sync == 0 {
            return Err(Error::Config(
                "batch_size and target_sync must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mask_probability) {
            return Err(Error::Config("mask_probability must lie in [0, 1]".into()));
        }
        if self.trainable_hidden.contains(&0) || self.prior_hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(self.schedule.lambda > 0.0) {
            return Err(Error::Config("schedule lambda must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub reward: f64,
    pub steps: usize,
    /// Per step: the chosen action differed from the exploitation action.
    pub exploration_flags: Vec<bool>,
    pub updates: usize,
}

impl EpisodeRecord {
    pub fn exploration_rate(&self) -> f64 {
        if self.exploration_flags.is_empty() {
            return 0.0;
        }
        self.exploration_flags.iter().filter(|&&f| f).count() as f64
            / self.exploration_flags.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    kind: AgentKind,
    config: AgentConfig,
    state_dim: usize,
    action_count: usize,
    members: Vec<QEnsembleMember>,
    optimizers: Vec<Optimizer>,
    global_step: u64,
    update_log: Vec<Vec<u64>>,
    prior_cache: PriorCache,
}

/// Frozen-prior outputs of every member at the state and next state of each
/// transition this agent stored, keyed by replay id. Priors never change
/// after construction, so these are computed once per transition.
#[derive(Debug, Clone, Default)]
struct PriorCache {
    entries: VecDeque<(u64, Vec<f64>)>,
}

impl PriorCache {
    fn row(&self, id: u64) -> Option<&[f64]> {
        let front = self.entries.front()?.0;
        let idx = usize::try_from(id.checked_sub(front)?).ok()?;
        self.entries
            .get(idx)
            .filter(|(stored, _)| *stored == id)
            .map(|(_, row)| row.as_slice())
    }

    fn evict_before(&mut self, oldest: u64) {
        while self.entries.front().is_some_and(|(id, _)| *id < oldest) {
            self.entries.pop_front();
        }
    }
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(input);
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

impl Agent {
    /// Builds an agent for `spec`, running prior diversification for BSDP.
    ///
    /// Trainable networks, priors and prior diversification each draw from
    /// their own stream of `seed`, so BS, BSP and BSDP built from the same
    /// seed share identical trainable initializations.
    pub fn new(kind: AgentKind, config: AgentConfig, spec: &EnvSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        let (dim, actions) = (spec.state_dim, spec.action_count);
        let count = match kind {
            AgentKind::Random => 0,
            AgentKind::EpsGreedyDqn => 1,
            _ => config.ensemble_size,
        };
        let trainable_sizes = sizes(dim, &config.trainable_hidden, actions);
        let prior_sizes = sizes(dim, &config.prior_hidden, actions);
        let mut train_rng = stream_rng(seed, STREAM_TRAINABLE);
        let mut prior_rng = stream_rng(seed, STREAM_PRIOR);
        let mut members = Vec::with_capacity(count);
        for _ in 0..count {
            let f = Mlp::he_init(
                &trainable_sizes,
                config.trainable_activation,
                &mut train_rng,
            )?;
            let p = match kind {
                AgentKind::Bsp | AgentKind::Bsdp => {
                    Mlp::he_init(&prior_sizes, config.prior_activation, &mut prior_rng)?
                }
                _ => Mlp::zeros(&prior_sizes, config.prior_activation)?,
            };
            members.push(QEnsembleMember::new(f, p)?);
        }
        if kind == AgentKind::Bsdp {
            let mut sampler = StateSampler::new(
                &spec.sampling_box,
                stream_rng(seed, STREAM_DIVERSITY_STATES),
            )?;
            let opt = Optimizer::new(config.optimizer, config.prior_learning_rate)?;
            diverse_prior_init(
                &mut members,
                &mut sampler,
                &config.diversity,
                &opt,
                &mut stream_rng(seed, STREAM_DIVERSITY_PICK),
            )?;
        }
        for m in &mut members {
            m.freeze_prior();
        }
        let optimizers = (0..count)
            .map(|_| Optimizer::new(config.optimizer, config.learning_rate))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            state_dim: dim,
            action_count: actions,
            update_log: vec![Vec::new(); count],
            members,
            optimizers,
            config,
            global_step: 0,
            prior_cache: PriorCache::default(),
        })
    }

    /// Replaces every prior by a zero network of the same shape.
    ///
    /// Only meant for ablations before training starts: a BSDP agent with
    /// zeroed priors must behave exactly like BS.
    pub fn with_zeroed_priors(mut self) -> Result<Self> {
        self.members = self
            .members
            .iter()
            .map(|m| {
                let p = Mlp::zeros(m.prior().sizes(), m.prior().activation())?;
                let mut fresh = QEnsembleMember::new(m.trainable().clone(), p)?;
                fresh.freeze_prior();
                Ok(fresh)
            })
            .collect::<Result<Vec<_>>>()?;
        self.prior_cache = PriorCache::default();
        Ok(self)
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn members(&self) -> &[QEnsembleMember] {
        &self.members
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    /// Transition ids each member was trained on (empty unless
    /// `record_updates` is set).
    pub fn update_log(&self) -> &[Vec<u64>] {
        &self.update_log
    }

    /// Width of the bootstrap masks this agent writes into the buffer.
    pub fn mask_width(&self) -> usize {
        self.members.len().max(1)
    }

    /// A replay buffer sized for this agent's masks.
    pub fn new_buffer(&self, capacity: usize) -> Result<ReplayBuffer> {
        ReplayBuffer::new(capacity, self.mask_width())
    }

    fn member(&self, index: usize) -> Result<&QEnsembleMember> {
        self.members.get(index).ok_or(Error::Shape {
            context: "active member",
            expected: self.members.len(),
            got: index,
        })
    }

    /// Greedy action of one member: `argmax_a Q_k(s, a)`.
    pub fn act_thompson(&self, state: &[f64], active_member: usize) -> Result<usize> {
        Ok(argmax(&self.member(active_member)?.q_values(state)?))
    }

    /// Argmax of the mean Q vector over all members.
    pub fn ensemble_mean_greedy_action(&self, state: &[f64]) -> Result<usize> {
        if self.members.is_empty() {
            return Err(Error::InvalidEnsemble("agent holds no networks".into()));
        }
        let mut mean = vec![0.0; self.action_count];
        for m in &self.members {
            for (acc, q) in mean.iter_mut().zip(m.q_values(state)?) {
                *acc += q;
            }
        }
        let k = self.members.len() as f64;
        for v in &mut mean {
            *v /= k;
        }
        Ok(argmax(&mean))
    }

    /// Epsilon-greedy action of the single DQN network at global step `step`.
    pub fn act_eps_greedy(&self, state: &[f64], step: u64, rng: &mut SeededRng) -> Result<usize> {
        let eps = self.config.schedule.epsilon(step);
        if rng.random_bool(eps.clamp(0.0, 1.0)) {
            Ok(rng.random_range(0..self.action_count))
        } else {
            self.act_thompson(state, 0)
        }
    }

    /// Runs one episode: act, store masked transitions, update every member
    /// on its own masked mini-batch each step, and sync targets periodically.
    pub fn train_episode(
        &mut self,
        env: &mut dyn Environment,
        buffer: &mut ReplayBuffer,
        rng: &mut SeededRng,
    ) -> Result<EpisodeRecord> {
        if env.spec().state_dim != self.state_dim || env.spec().action_count != self.action_count {
            return Err(Error::Config(
                "environment does not match the agent's shape".into(),
            ));
        }
        if self.kind != AgentKind::Random && buffer.ensemble_size() != self.mask_width() {
            return Err(Error::Shape {
                context: "replay mask width",
                expected: self.mask_width(),
                got: buffer.ensemble_size(),
            });
        }
        let k = self.members.len();
        let mut state = env.reset(rng);
        let mut active = if self.kind.is_ensemble() {
            select_member(k, rng)?
        } else {
            0
        };
        let mut record = EpisodeRecord {
            reward: 0.0,
            steps: 0,
            exploration_flags: Vec::new(),
            updates: 0,
        };
        loop {
            let (action, explored) = match self.kind {
                AgentKind::Random => (rng.random_range(0..self.action_count), true),
                AgentKind::EpsGreedyDqn => {
                    let greedy = self.act_thompson(&state, 0)?;
                    let a = self.act_eps_greedy(&state, self.global_step, rng)?;
                    (a, a != greedy)
                }
                _ => {
                    if self.config.per_step_resampling && record.steps > 0 {
                        active = select_member(k, rng)?;
                    }
                    let greedy = self.ensemble_mean_greedy_action(&state)?;
                    let a = self.act_thompson(&state, active)?;
                    (a, a != greedy)
                }
            };
            let step = env.step(action)?;
            record.reward += step.reward;
            record.steps += 1;
            record.exploration_flags.push(explored);
            self.global_step += 1;

            if self.kind != AgentKind::Random {
                let mask = if self.kind == AgentKind::EpsGreedyDqn {
                    vec![true]
                } else {
                    sample_mask(k, self.config.mask_probability, rng)?
                };
                let row = self.prior_row(&state, &step.next_state)?;
                let id = buffer.push(MaskedTransition {
                    state: std::mem::take(&mut state),
                    action,
                    reward: step.reward,
                    next_state: step.next_state.clone(),
                    terminal: step.terminal,
                    mask,
                })?;
                self.prior_cache.entries.push_back((id, row));
                if let Some(oldest) = buffer.iter().next() {
                    self.prior_cache.evict_before(oldest.id);
                }
                if buffer.len() >= self.config.warmup {
                    record.updates += self.update_members(buffer, rng)?;
                }
                if self.global_step % self.config.target_sync as u64 == 0 {
                    for m in &mut self.members {
                        m.sync_target();
                    }
                }
            }

            if step.done() {
                break;
            }
            state = step.next_state;
        }
        Ok(record)
    }

    // Per member: p(s) followed by p(s').
    fn prior_row(&self, state: &[f64], next_state: &[f64]) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.members.len() * 2 * self.action_count);
        for m in &self.members {
            row.extend(m.prior().forward(state)?);
            row.extend(m.prior().forward(next_state)?);
        }
        Ok(row)
    }

    fn update_members(&mut self, buffer: &ReplayBuffer, rng: &mut SeededRng) -> Result<usize> {
        let mut updates = 0;
        for j in 0..self.members.len() {
            let batch = match buffer.sample_for_member(j, self.config.batch_size, rng) {
                Ok(b) => b,
                Err(Error::InsufficientData { .. }) => continue,
                Err(e) => return Err(e),
            };
            let transitions: Vec<&MaskedTransition> = batch.iter().map(|s| &s.transition).collect();
            let a = self.action_count;
            let rows: Option<Vec<&[f64]>> =
                batch.iter().map(|s| self.prior_cache.row(s.id)).collect();
            let member = &self.members[j];
            let (_, grads) = match rows {
                Some(rows) => {
                    let at = |off: usize| {
                        rows.iter()
                            .map(|r| &r[j * 2 * a + off..j * 2 * a + off + a])
                            .collect::<Vec<_>>()
                    };
                    member.td_loss_with_prior(&transitions, &at(0), &at(a), self.config.gamma)?
                }
                None => member.td_loss(&transitions, self.config.gamma)?,
            };
            self.optimizers[j].step(self.members[j].trainable_mut(), &grads)?;
            if self.config.record_updates {
                self.update_log[j].extend(batch.iter().map(|s| s.id));
            }
            updates += 1;
        }
        Ok(updates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{BinaryChain, CartPole};

    fn small_config() -> AgentConfig {
        AgentConfig {
            ensemble_size: 3,
            trainable_hidden: vec![16],
            prior_hidden: vec![16],
            warmup: 32,
            batch_size: 16,
            learning_rate: 1e-3,
            diversity: DiversityParams {
                steps: 20,
                batch_size: 8,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn q_fixed_member(q: &[f64]) -> QEnsembleMember {
        let mut f = Mlp::zeros(&[1, q.len()], Activation::Identity).unwrap();
        f.bias_mut(0).copy_from_slice(q);
        let p = Mlp::zeros(&[1, q.len()], Activation::Identity).unwrap();
        QEnsembleMember::new(f, p).unwrap()
    }

    fn agent_with(members: Vec<QEnsembleMember>) -> Agent {
        let spec = crate::envs::env_spec(crate::envs::EnvKind::Line1d, 0).unwrap();
        let mut agent = Agent::new(AgentKind::Bs, small_config(), &spec, 0).unwrap();
        agent.action_count = members[0].action_count();
        agent.optimizers = members
            .iter()
            .map(|_| Optimizer::adam(0.1).unwrap())
            .collect();
        agent.update_log = vec![Vec::new(); members.len()];
        agent.members = members;
        agent
    }

    #[test]
    fn thompson_action_is_member_argmax() {
        let agent = agent_with(vec![
            q_fixed_member(&[0.0, 5.0, 1.0]),
            q_fixed_member(&[2.0, 2.0, 0.0]),
        ]);
        assert_eq!(agent.act_thompson(&[0.0], 0).unwrap(), 1);
        assert_eq!(agent.act_thompson(&[0.0], 1).unwrap(), 0);
        assert!(agent.act_thompson(&[0.0], 2).is_err());
    }

    #[test]
    fn mean_greedy_action() {
        let agent = agent_with(vec![
            q_fixed_member(&[1.0, 0.0]),
            q_fixed_member(&[0.0, 3.0]),
        ]);
        assert_eq!(agent.ensemble_mean_greedy_action(&[0.0]).unwrap(), 1);
        let single = agent_with(vec![q_fixed_member(&[4.0, 1.0])]);
        assert_eq!(
            single.ensemble_mean_greedy_action(&[0.0]).unwrap(),
            single.act_thompson(&[0.0], 0).unwrap()
        );
    }

    #[test]
    fn greedy_schedule_is_pure_argmax() {
        let mut agent = agent_with(vec![q_fixed_member(&[0.0, 1.0, 0.5])]);
        agent.kind = AgentKind::EpsGreedyDqn;
        agent.config.schedule = EpsilonSchedule::GREEDY;
        let mut rng = stream_rng(0, 0);
        assert!((0..200).all(|_| agent.act_eps_greedy(&[0.0], 0, &mut rng).unwrap() == 1));
    }

    #[test]
    fn priors_by_kind() {
        let spec = CartPole::new().spec().clone();
        let bs = Agent::new(AgentKind::Bs, small_config(), &spec, 3).unwrap();
        let bsp = Agent::new(AgentKind::Bsp, small_config(), &spec, 3).unwrap();
        let bsdp = Agent::new(AgentKind::Bsdp, small_config(), &spec, 3).unwrap();
        for m in bs.members() {
            assert!(m.prior().params().iter().all(|&v| v == 0.0));
            assert!(m.prior_frozen());
        }
        for ((a, b), c) in bs.members().iter().zip(bsp.members()).zip(bsdp.members()) {
            assert_eq!(a.trainable(), b.trainable());
            assert_eq!(a.trainable(), c.trainable());
            assert!(b.prior().params().iter().any(|&v| v != 0.0));
            assert_ne!(b.prior(), c.prior());
            assert!(c.prior_frozen());
        }
        assert_eq!(
            Agent::new(AgentKind::EpsGreedyDqn, small_config(), &spec, 3)
                .unwrap()
                .members()
                .len(),
            1
        );
        assert!(Agent::new(AgentKind::Random, small_config(), &spec, 3)
            .unwrap()
            .members()
            .is_empty());
    }

    #[test]
    fn warmup_blocks_updates() {
        let spec = CartPole::new().spec().clone();
        let config = AgentConfig {
            warmup: 10_000,
            ..small_config()
        };
        let mut agent = Agent::new(AgentKind::Bsp, config, &spec, 0).unwrap();
        let before = agent.members().to_vec();
        let mut env = CartPole::new();
        let mut buffer = agent.new_buffer(1000).unwrap();
        let rec = agent
            .train_episode(&mut env, &mut buffer, &mut stream_rng(0, 9))
            .unwrap();
        assert_eq!(rec.updates, 0);
        for (a, b) in agent.members().iter().zip(&before) {
            assert_eq!(a.trainable(), b.trainable());
        }
    }

    #[test]
    fn zero_learning_rate_runs_are_reproducible() {
        let spec = CartPole::new().spec().clone();
        let config = AgentConfig {
            learning_rate: 0.0,
            ..small_config()
        };
        let run = || {
            let mut agent = Agent::new(AgentKind::Bsdp, config.clone(), &spec, 4).unwrap();
            let mut env = CartPole::new();
            let mut buffer = agent.new_buffer(1000).unwrap();
            let mut rng = stream_rng(4, 0);
            (0..5)
                .map(|_| {
                    agent
                        .train_episode(&mut env, &mut buffer, &mut rng)
                        .unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn random_agent_solves_chain_one_half_the_time() {
        let spec = BinaryChain::spec_for(1).unwrap();
        let mut agent = Agent::new(AgentKind::Random, small_config(), &spec, 0).unwrap();
        let mut env = BinaryChain::new(vec![1]).unwrap();
        let mut buffer = agent.new_buffer(10).unwrap();
        let mut rng = stream_rng(2, 0);
        let episodes = 10_000;
        let solved = (0..episodes)
            .filter(|_| {
                agent
                    .train_episode(&mut env, &mut buffer, &mut rng)
                    .unwrap()
                    .reward
                    > 0.0
            })
            .count();
        assert!((solved as f64 / episodes as f64 - 0.5).abs() < 0.02);
        assert!(buffer.is_empty());
    }

    #[test]
    fn exploration_flags_cover_every_step() {
        let spec = CartPole::new().spec().clone();
        let mut agent = Agent::new(AgentKind::Bsp, small_config(), &spec, 1).unwrap();
        let mut env = CartPole::new();
        let mut buffer = agent.new_buffer(1000).unwrap();
        let rec = agent
            .train_episode(&mut env, &mut buffer, &mut stream_rng(1, 0))
            .unwrap();
        assert_eq!(rec.exploration_flags.len(), rec.steps);
        assert!((0.0..=1.0).contains(&rec.exploration_rate()));
    }
}
