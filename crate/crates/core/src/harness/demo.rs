//! Prior-curve dump on the one-dimensional line setup.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::agents::{Agent, AgentConfig, AgentKind, QEnsembleMember};
use crate::diverse_prior::DiversityParams;
use crate::envs::{env_spec, EnvKind, Line1d};
use crate::error::{Error, Result};
use crate::math::{kl_divergence, softmax};

/// How the ten priors of the demo are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PriorRegime {
    He,
    Kl,
    KlBd,
    All,
}

impl PriorRegime {
    pub const ALL: [PriorRegime; 4] = [
        PriorRegime::He,
        PriorRegime::Kl,
        PriorRegime::KlBd,
        PriorRegime::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PriorRegime::He => "he",
            PriorRegime::Kl => "kl",
            PriorRegime::KlBd => "kl_bd",
            PriorRegime::All => "kl_nl_bd",
        }
    }

    /// `(alpha1, alpha2)` for the diversified regimes, `None` for plain He.
    pub fn weights(self) -> Option<(f64, f64)> {
        match self {
            PriorRegime::He => None,
            PriorRegime::Kl => Some((0.0, 0.0)),
            PriorRegime::KlBd => Some((0.0, 0.1)),
            PriorRegime::All => Some((1.0, 0.1)),
        }
    }
}

impl fmt::Display for PriorRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub ensemble_size: usize,
    pub hidden: Vec<usize>,
    pub grid_points: usize,
    pub prior_learning_rate: f64,
    /// Base diversity settings; each regime overrides `alpha1` and `alpha2`.
    pub diversity: DiversityParams,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 10,
            hidden: vec![32],
            grid_points: 101,
            prior_learning_rate: 1e-2,
            diversity: DiversityParams::default(),
            seed: 0,
        }
    }
}

/// Builds the demo ensemble for one regime. All regimes share trainable
/// networks and the He starting point of the priors.
pub fn regime_ensemble(regime: PriorRegime, cfg: &DemoConfig) -> Result<Vec<QEnsembleMember>> {
    let spec = env_spec(EnvKind::Line1d, 0)?;
    let mut agent_cfg = AgentConfig {
        ensemble_size: cfg.ensemble_size,
        trainable_hidden: cfg.hidden.clone(),
        prior_hidden: cfg.hidden.clone(),
        prior_learning_rate: cfg.prior_learning_rate,
        diversity: cfg.diversity,
        ..AgentConfig::default()
    };
    let kind = match regime.weights() {
        None => AgentKind::Bsp,
        Some((a1, a2)) => {
            agent_cfg.diversity.alpha1 = a1;
            agent_cfg.diversity.alpha2 = a2;
            AgentKind::Bsdp
        }
    };
    Ok(Agent::new(kind, agent_cfg, &spec, cfg.seed)?
        .members()
        .to_vec())
}

/// `table[i][k]` is member `k`'s `Q(grid[i], action)`.
pub fn q_table(ensemble: &[QEnsembleMember], grid: &[f64], action: usize) -> Result<Vec<Vec<f64>>> {
    grid.iter()
        .map(|&s| {
            ensemble
                .iter()
                .map(|m| {
                    let q = m.q_values(&[s])?;
                    q.get(action).copied().ok_or(Error::Shape {
                        context: "demo action",
                        expected: q.len(),
                        got: action,
                    })
                })
                .collect()
        })
        .collect()
}

/// Diversity statistics of an ensemble over a one-dimensional grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridStats {
    /// Mean over states and ordered member pairs of `KL(softmax Q_i || softmax Q_k)`.
    pub mean_pairwise_kl: f64,
    /// Mean of `|Q|` over states, members and actions.
    pub mean_abs_q: f64,
    /// Mean squared forward second difference over states, members and actions.
    pub mean_sq_curvature: f64,
}

pub fn grid_statistics(ensemble: &[QEnsembleMember], grid: &[f64], h: f64) -> Result<GridStats> {
    if ensemble.len() < 2 || grid.is_empty() {
        return Err(Error::UndefinedMetric(
            "grid statistics need 2 members and 1 state".into(),
        ));
    }
    let (mut kl, mut abs_q, mut curv) = (0.0, 0.0, 0.0);
    let (mut kl_n, mut q_n) = (0usize, 0usize);
    for &s in grid {
        let qs = ensemble
            .iter()
            .map(|m| m.q_values(&[s]))
            .collect::<Result<Vec<_>>>()?;
        let ps = qs.iter().map(|q| softmax(q)).collect::<Result<Vec<_>>>()?;
        for (i, pi) in ps.iter().enumerate() {
            for (k, pk) in ps.iter().enumerate() {
                if i != k {
                    kl += kl_divergence(pi, pk)?;
                    kl_n += 1;
                }
            }
        }
        for (m, q) in ensemble.iter().zip(&qs) {
            let q1 = m.q_values(&[s + h])?;
            let q2 = m.q_values(&[s + 2.0 * h])?;
            for a in 0..q.len() {
                abs_q += q[a].abs();
                curv += ((q2[a] - 2.0 * q1[a] + q[a]) / (h * h)).powi(2);
                q_n += 1;
            }
        }
    }
    Ok(GridStats {
        mean_pairwise_kl: kl / kl_n as f64,
        mean_abs_q: abs_q / q_n as f64,
        mean_sq_curvature: curv / q_n as f64,
    })
}

/// Finite-difference step used for the line demo statistics, in state units.
pub fn demo_fdm_step(cfg: &DemoConfig) -> f64 {
    10.0 * cfg.diversity.fdm_step
}

/// Writes `priors_<regime>.csv` for every regime into `out_dir`, each with
/// columns `state, member_0, ..` and one row per grid point, holding
/// `Q(s, action 0)`.
pub fn dump_prior_curves(cfg: &DemoConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let grid = Line1d::grid(cfg.grid_points);
    let mut paths = Vec::new();
    for regime in PriorRegime::ALL {
        let ensemble = regime_ensemble(regime, cfg)?;
        let table = q_table(&ensemble, &grid, 0)?;
        let path = out_dir.join(format!("priors_{}.csv", regime.name()));
        write_table(&path, &grid, &table, ensemble.len())?;
        paths.push(path);
    }
    Ok(paths)
}

pub(crate) fn write_table(
    path: &Path,
    grid: &[f64],
    table: &[Vec<f64>],
    members: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["state".to_string()];
    header.extend((0..members).map(|k| format!("member_{k}")));
    w.write_record(&header)?;
    for (s, row) in grid.iter().zip(table) {
        let mut rec = vec![s.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Activation, Mlp};

    fn quick() -> DemoConfig {
        DemoConfig {
            ensemble_size: 3,
            hidden: vec![8],
            grid_points: 11,
            diversity: DiversityParams {
                steps: 10,
                batch_size: 8,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn zero_ensemble_gives_zero_table() {
        let zero = || {
            let f = Mlp::zeros(&[1, 4, 2], Activation::Relu).unwrap();
            let p = Mlp::zeros(&[1, 4, 2], Activation::Tanh).unwrap();
            QEnsembleMember::new(f, p).unwrap()
        };
        let table = q_table(&[zero(), zero()], &Line1d::grid(101), 0).unwrap();
        assert_eq!(table.len(), 101);
        assert!(table.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn he_table_matches_direct_forward_sums() {
        let cfg = quick();
        let ens = regime_ensemble(PriorRegime::He, &cfg).unwrap();
        let grid = Line1d::grid(cfg.grid_points);
        let table = q_table(&ens, &grid, 0).unwrap();
        for (row, &s) in table.iter().zip(&grid) {
            for (v, m) in row.iter().zip(&ens) {
                let direct =
                    m.trainable().forward(&[s]).unwrap()[0] + m.prior().forward(&[s]).unwrap()[0];
                assert_eq!(*v, direct);
            }
        }
    }

    #[test]
    fn regimes_share_trainables() {
        let cfg = quick();
        let he = regime_ensemble(PriorRegime::He, &cfg).unwrap();
        let all = regime_ensemble(PriorRegime::All, &cfg).unwrap();
        for (a, b) in he.iter().zip(&all) {
            assert_eq!(a.trainable(), b.trainable());
            assert_ne!(a.prior(), b.prior());
        }
    }

    #[test]
    fn identical_members_have_zero_pairwise_kl() {
        let ens = regime_ensemble(PriorRegime::He, &quick()).unwrap();
        let same = vec![ens[0].clone(), ens[0].clone()];
        let stats = grid_statistics(&same, &Line1d::grid(11), 0.1).unwrap();
        assert_eq!(stats.mean_pairwise_kl, 0.0);
    }

    #[test]
    fn dump_writes_four_tables() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick();
        let paths = dump_prior_curves(&cfg, dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        for p in paths {
            let mut r = csv::Reader::from_path(p).unwrap();
            assert_eq!(r.headers().unwrap().len(), 4);
            assert_eq!(r.records().count(), 11);
        }
    }
}
