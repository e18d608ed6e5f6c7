//! Finite-difference verification of every analytic gradient in the crate.

use rand::Rng;

use crate::agents::QEnsembleMember;
use crate::diverse_prior::{kl_loss, DiversityBatch, DiversityParams};
use crate::error::Result;
use crate::math::{Activation, Mlp};
use crate::replay::MaskedTransition;
use crate::{stream_rng, SeededRng};

/// Maximum accepted relative error per instance.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub name: &'static str,
    pub instances: usize,
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|)` (Euclidean
    /// norms over the parameter vector) across instances.
    pub max_relative_error: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= GRADCHECK_TOLERANCE
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` with respect to every entry of `params`.
fn numeric_gradient<F>(params: &mut [f64], mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + FD_STEP;
        let plus = f(params)?;
        params[i] = orig - FD_STEP;
        let minus = f(params)?;
        params[i] = orig;
        out.push((plus - minus) / (2.0 * FD_STEP));
    }
    Ok(out)
}

fn random_sizes(rng: &mut SeededRng) -> Vec<usize> {
    let hidden = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=5)];
    sizes.extend((0..hidden).map(|_| rng.random_range(2..=8)));
    sizes.push(rng.random_range(1..=4));
    sizes
}

fn random_vec(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Network backward pass against the scalar `sum(w * forward(x))`.
pub fn check_mlp(instances: usize, seed: u64) -> Result<GradcheckReport> {
    let mut rng = stream_rng(seed, 101);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let act = [Activation::Tanh, Activation::Relu, Activation::Identity][i % 3];
        let sizes = random_sizes(&mut rng);
        let mut net = Mlp::he_init(&sizes, act, &mut rng)?;
        // Nonzero biases keep ReLU pre-activations off the kink at 0.
        for l in 0..net.num_layers() {
            for b in net.bias_mut(l) {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let x = random_vec(sizes[0], &mut rng);
        let w = random_vec(*sizes.last().expect("non-empty"), &mut rng);
        let analytic = net.backward(&x, &w)?;
        let mut params = net.params().to_vec();
        let numeric = numeric_gradient(&mut params, |p| {
            let probe = Mlp::from_params(&sizes, act, p.to_vec())?;
            Ok(probe
                .forward(&x)?
                .iter()
                .zip(&w)
                .map(|(o, wi)| o * wi)
                .sum())
        })?;
        worst = worst.max(relative_error(analytic.values(), &numeric));
    }
    Ok(GradcheckReport {
        name: "mlp_backward",
        instances,
        max_relative_error: worst,
    })
}

fn random_member(sizes: &[usize], rng: &mut SeededRng) -> Result<QEnsembleMember> {
    let f = Mlp::he_init(sizes, Activation::Relu, rng)?;
    let p = Mlp::he_init(sizes, Activation::Tanh, rng)?;
    QEnsembleMember::new(f, p)
}

/// TD loss with respect to the trainable parameters, target held fixed.
pub fn check_td_loss(instances: usize, seed: u64) -> Result<GradcheckReport> {
    let mut rng = stream_rng(seed, 102);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let sizes = random_sizes(&mut rng);
        let (dim, actions) = (sizes[0], *sizes.last().expect("non-empty"));
        let mut member = random_member(&sizes, &mut rng)?;
        // Move the online network away from its target copy.
        for v in member.trainable_mut().params_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        let batch: Vec<MaskedTransition> = (0..8)
            .map(|_| MaskedTransition {
                state: random_vec(dim, &mut rng),
                action: rng.random_range(0..actions),
                reward: rng.random_range(-1.0..1.0),
                next_state: random_vec(dim, &mut rng),
                terminal: rng.random_bool(0.25),
                mask: vec![true],
            })
            .collect();
        let refs: Vec<&MaskedTransition> = batch.iter().collect();
        let gamma = 0.99;
        let (_, analytic) = member.td_loss(&refs, gamma)?;
        let mut params = member.trainable().params().to_vec();
        let mut probe = member.clone();
        let numeric = numeric_gradient(&mut params, |p| {
            probe.trainable_mut().params_mut().copy_from_slice(p);
            Ok(probe.td_loss(&refs, gamma)?.0)
        })?;
        worst = worst.max(relative_error(analytic.values(), &numeric));
    }
    Ok(GradcheckReport {
        name: "td_loss",
        instances,
        max_relative_error: worst,
    })
}

/// Diversity objective with respect to one member's prior, median held
/// fixed. Instances whose per-state divergence sits within 10% of the clip
/// bound, or where every state is clipped, are redrawn.
pub fn check_diversity(instances: usize, seed: u64) -> Result<GradcheckReport> {
    let mut rng = stream_rng(seed, 103);
    let hp = DiversityParams::default();
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    while accepted < instances {
        let dim = rng.random_range(1..=3);
        let actions = rng.random_range(2..=3);
        let sizes = [dim, rng.random_range(3..=8), actions];
        let k = rng.random_range(3..=6);
        let ensemble = (0..k)
            .map(|_| random_member(&sizes, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let states: Vec<Vec<f64>> = (0..6).map(|_| random_vec(dim, &mut rng)).collect();
        let j = rng.random_range(0..k);
        let mut near_kink = false;
        let mut unclipped = 0;
        for s in &states {
            let kl = -kl_loss(j, std::slice::from_ref(s), &ensemble, f64::INFINITY)?;
            near_kink |= (kl - hp.epsilon).abs() < 0.1 * hp.epsilon;
            unclipped += (kl > 0.0 && kl < hp.epsilon) as usize;
        }
        // Also require the divergence term to contribute gradient somewhere.
        if near_kink || unclipped == 0 {
            continue;
        }
        let steps = vec![0.04; dim];
        let batch = DiversityBatch::new(&states, &ensemble, steps)?;
        let (_, analytic) = batch.gradient(&ensemble[j], &hp)?;
        let mut params = ensemble[j].prior().params().to_vec();
        let mut probe = ensemble[j].clone();
        let numeric = numeric_gradient(&mut params, |p| {
            probe.prior_mut()?.params_mut().copy_from_slice(p);
            Ok(batch.evaluate(&probe, hp.epsilon)?.objective(&hp))
        })?;
        worst = worst.max(relative_error(analytic.values(), &numeric));
        accepted += 1;
    }
    Ok(GradcheckReport {
        name: "diversity_objective",
        instances,
        max_relative_error: worst,
    })
}

pub fn run_all(instances: usize, seed: u64) -> Result<Vec<GradcheckReport>> {
    Ok(vec![
        check_mlp(instances, seed)?,
        check_td_loss(instances, seed)?,
        check_diversity(instances, seed)?,
    ])
}
