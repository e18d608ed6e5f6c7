//! Q-ensemble agents: BSDP, BSP, BS, epsilon-greedy DQN and a uniform
//! random baseline.

mod agent;
mod member;
mod policy;

use std::fmt;
use std::str::FromStr;

pub use agent::{Agent, AgentConfig, EpisodeRecord};
pub use member::QEnsembleMember;
pub use policy::{argmax, select_member, EpsilonSchedule};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    /// Bootstrapped DQN with diversified priors.
    Bsdp,
    /// Bootstrapped DQN with He-initialized random priors.
    Bsp,
    /// Bootstrapped DQN without priors.
    Bs,
    /// Single DQN with a decaying epsilon-greedy schedule.
    EpsGreedyDqn,
    /// Uniform random actions; no networks.
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::Bsdp,
        AgentKind::Bsp,
        AgentKind::Bs,
        AgentKind::EpsGreedyDqn,
        AgentKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Bsdp => "bsdp",
            AgentKind::Bsp => "bsp",
            AgentKind::Bs => "bs",
            AgentKind::EpsGreedyDqn => "dqn",
            AgentKind::Random => "random",
        }
    }

    pub fn is_ensemble(self) -> bool {
        matches!(self, AgentKind::Bsdp | AgentKind::Bsp | AgentKind::Bs)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}
