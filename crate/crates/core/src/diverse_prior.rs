//! Diversity losses and the prior initialization procedure.
//!
//! Before any environment interaction, each prior network `p_j` is optimized
//! to minimise
//!
//! ```text
//! J(p_j) = KL_loss(eps) + alpha1 * NL_loss + alpha2 * BD_loss
//! KL_loss = -E_s clip(KL(softmax(Q_j(s)) || softmax(Q_med(s))), 0, eps)
//! NL_loss = -E_s |Q_j''(s)|^2
//! BD_loss =  E_s |Q_j(s)|^2
//! ```
//!
//! where `Q_j = f_j + p_j` and `Q_med` is the per-action ensemble median.
//! The median is treated as a constant and only `p_j` receives gradient;
//! `f_j` participates in `Q_j` but is never updated here.

use rand::Rng;

use crate::agents::QEnsembleMember;
use crate::error::{check_len, Error, Result};
use crate::math::{fdm_second_derivative, kl_divergence, softmax, Gradients, Optimizer};
use crate::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversityParams {
    /// Upper clipping bound on the per-state KL term.
    pub epsilon: f64,
    /// Weight of the nonlinearity (second-derivative) loss.
    pub alpha1: f64,
    /// Weight of the output-bounding loss.
    pub alpha2: f64,
    /// Optimization iterations.
    pub steps: usize,
    /// Finite-difference step, as a fraction of each sampling-box width.
    pub fdm_step: f64,
    /// States per loss estimate.
    pub batch_size: usize,
}

impl Default for DiversityParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            alpha1: 1.0,
            alpha2: 0.1,
            steps: 2000,
            fdm_step: 1e-2,
            batch_size: 64,
        }
    }
}

impl DiversityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return Err(Error::Config(
                "alpha1 and alpha2 must be non-negative".into(),
            ));
        }
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "steps and batch_size must be at least 1".into(),
            ));
        }
        if !(self.fdm_step > 0.0 && self.fdm_step.is_finite()) {
            return Err(Error::Config(format!(
                "fdm_step must be positive, got {}",
                self.fdm_step
            )));
        }
        Ok(())
    }
}

/// Uniform sampler over an axis-aligned box of states.
#[derive(Debug, Clone)]
pub struct StateSampler {
    low: Vec<f64>,
    high: Vec<f64>,
    rng: SeededRng,
}

impl StateSampler {
    pub fn new(bounds: &[(f64, f64)], rng: SeededRng) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Config(
                "sampling box needs at least one dimension".into(),
            ));
        }
        for &(lo, hi) in bounds {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidRange { lo, hi });
            }
        }
        Ok(Self {
            low: bounds.iter().map(|b| b.0).collect(),
            high: bounds.iter().map(|b| b.1).collect(),
            rng,
        })
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(l, h)| h - l)
            .collect()
    }

    pub fn sample(&mut self) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(&l, &h)| self.rng.random_range(l..h))
            .collect()
    }

    pub fn sample_batch(&mut self, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample()).collect()
    }
}

fn member(ensemble: &[QEnsembleMember], index: usize) -> Result<&QEnsembleMember> {
    ensemble.get(index).ok_or(Error::Shape {
        context: "ensemble member index",
        expected: ensemble.len(),
        got: index,
    })
}

/// `f_j(s) + p_j(s)` for every action.
pub fn ensemble_q_all_actions(
    member_index: usize,
    state: &[f64],
    ensemble: &[QEnsembleMember],
) -> Result<Vec<f64>> {
    member(ensemble, member_index)?.q_values(state)
}

/// Median of a slice; even lengths average the two middle values.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-action median of the members' Q values at `state`.
pub fn ensemble_median_q(state: &[f64], ensemble: &[QEnsembleMember]) -> Result<Vec<f64>> {
    if ensemble.is_empty() {
        return Err(Error::InvalidEnsemble("median of an empty ensemble".into()));
    }
    let outputs = ensemble
        .iter()
        .map(|m| m.q_values(state))
        .collect::<Result<Vec<_>>>()?;
    let actions = outputs[0].len();
    let mut column = Vec::with_capacity(ensemble.len());
    Ok((0..actions)
        .map(|a| {
            column.clear();
            column.extend(outputs.iter().map(|q| q[a]));
            median(&mut column)
        })
        .collect())
}

/// Values of the three diversity terms on one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub kl: f64,
    pub nl: f64,
    pub bd: f64,
}

impl LossTerms {
    pub fn objective(&self, hp: &DiversityParams) -> f64 {
        self.kl + hp.alpha1 * self.nl + hp.alpha2 * self.bd
    }
}

/// A batch of states with the ensemble median frozen at construction time.
///
/// Evaluating and differentiating the objective against a fixed median is
/// what the initialization procedure does each iteration.
#[derive(Debug, Clone)]
pub struct DiversityBatch {
    batch: usize,
    dim: usize,
    actions: usize,
    medians: Vec<f64>,
    steps: Vec<f64>,
    // base states followed by the two stencil points per (state, dimension)
    stencil: Vec<f64>,
}

impl DiversityBatch {
    /// `fdm_steps` holds the finite-difference step for each state dimension.
    pub fn new(
        states: &[Vec<f64>],
        ensemble: &[QEnsembleMember],
        fdm_steps: Vec<f64>,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Shape {
                context: "diversity batch",
                expected: 1,
                got: 0,
            });
        }
        let first = ensemble
            .first()
            .ok_or_else(|| Error::InvalidEnsemble("empty ensemble".into()))?;
        let dim = first.state_dim();
        let actions = first.action_count();
        check_len("finite-difference steps", dim, fdm_steps.len())?;
        if fdm_steps.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Numeric(
                "finite-difference steps must be positive".into(),
            ));
        }
        let batch = states.len();
        let mut flat = Vec::with_capacity(batch * dim);
        for s in states {
            check_len("diversity state", dim, s.len())?;
            flat.extend_from_slice(s);
        }

        let all_q = ensemble
            .iter()
            .map(|m| m.q_batch(&flat, batch))
            .collect::<Result<Vec<_>>>()?;
        let mut medians = vec![0.0; batch * actions];
        let mut column = Vec::with_capacity(ensemble.len());
        for (idx, slot) in medians.iter_mut().enumerate() {
            column.clear();
            column.extend(all_q.iter().map(|q| q[idx]));
            *slot = median(&mut column);
        }

        let mut stencil = flat;
        stencil.reserve(2 * batch * dim * dim);
        for s in states {
            for (d, &h) in fdm_steps.iter().enumerate() {
                for mult in [1.0, 2.0] {
                    let start = stencil.len();
                    stencil.extend_from_slice(s);
                    stencil[start + d] += mult * h;
                }
            }
        }

        Ok(Self {
            batch,
            dim,
            actions,
            medians,
            steps: fdm_steps,
            stencil,
        })
    }

    pub fn len(&self) -> usize {
        self.batch
    }

    pub fn is_empty(&self) -> bool {
        self.batch == 0
    }

    pub fn medians(&self) -> &[f64] {
        &self.medians
    }

    fn stencil_points(&self) -> usize {
        self.batch * (1 + 2 * self.dim)
    }

    // Index of the stencil point `s + mult * h e_d` (mult in {1, 2}) for state i.
    fn stencil_index(&self, i: usize, d: usize, mult: usize) -> usize {
        self.batch + (i * self.dim + d) * 2 + (mult - 1)
    }

    fn member_q(&self, m: &QEnsembleMember) -> Result<(Vec<f64>, crate::math::ForwardTrace)> {
        check_len("member state dim", self.dim, m.state_dim())?;
        check_len("member actions", self.actions, m.action_count())?;
        let points = self.stencil_points();
        let trace = m.prior().forward_trace(&self.stencil, points)?;
        let mut q = m.trainable().forward_batch(&self.stencil, points)?;
        for (v, p) in q.iter_mut().zip(trace.output()) {
            *v += p;
        }
        Ok((q, trace))
    }

    /// Second-derivative stencil value for (state i, dim d, action a).
    fn second_derivative(&self, q: &[f64], i: usize, d: usize, a: usize) -> f64 {
        let na = self.actions;
        let f0 = q[i * na + a];
        let f1 = q[self.stencil_index(i, d, 1) * na + a];
        let f2 = q[self.stencil_index(i, d, 2) * na + a];
        let h = self.steps[d];
        (f2 - 2.0 * f1 + f0) / (h * h)
    }

    fn terms_from_q(&self, q: &[f64], epsilon: f64) -> Result<(LossTerms, Vec<f64>)> {
        let na = self.actions;
        let n = self.batch as f64;
        let mut kl_total = 0.0;
        let mut kls = Vec::with_capacity(self.batch);
        let mut nl_total = 0.0;
        let mut bd_total = 0.0;
        for i in 0..self.batch {
            let qi = &q[i * na..(i + 1) * na];
            let p = softmax(qi)?;
            let m = softmax(&self.medians[i * na..(i + 1) * na])?;
            let kl = kl_divergence(&p, &m)?;
            kls.push(kl);
            kl_total += kl.clamp(0.0, epsilon);
            bd_total += qi.iter().map(|v| v * v).sum::<f64>();
            for d in 0..self.dim {
                for a in 0..na {
                    nl_total += self.second_derivative(q, i, d, a).powi(2);
                }
            }
        }
        let terms = LossTerms {
            kl: -kl_total / n,
            nl: -nl_total / n,
            bd: bd_total / n,
        };
        if !(terms.kl.is_finite() && terms.nl.is_finite() && terms.bd.is_finite()) {
            return Err(Error::Numeric("non-finite diversity loss".into()));
        }
        Ok((terms, kls))
    }

    pub fn evaluate(&self, m: &QEnsembleMember, epsilon: f64) -> Result<LossTerms> {
        let (q, _) = self.member_q(m)?;
        Ok(self.terms_from_q(&q, epsilon)?.0)
    }

    /// Objective terms and the gradient of `J` with respect to the member's
    /// prior parameters.
    pub fn gradient(
        &self,
        m: &QEnsembleMember,
        hp: &DiversityParams,
    ) -> Result<(LossTerms, Gradients)> {
        let (q, trace) = self.member_q(m)?;
        let (terms, kls) = self.terms_from_q(&q, hp.epsilon)?;
        let na = self.actions;
        let n = self.batch as f64;
        let mut out_grad = vec![0.0; q.len()];

        for i in 0..self.batch {
            let qi = &q[i * na..(i + 1) * na];
            let g = &mut out_grad[i * na..(i + 1) * na];
            let kl = kls[i];
            // The clip has zero slope once the divergence reaches epsilon.
            if kl > 0.0 && kl < hp.epsilon {
                let log_p = log_softmax(qi);
                let log_m = log_softmax(&self.medians[i * na..(i + 1) * na]);
                for a in 0..na {
                    let p = log_p[a].exp();
                    g[a] -= p * (log_p[a] - log_m[a] - kl) / n;
                }
            }
            if hp.alpha2 != 0.0 {
                for a in 0..na {
                    g[a] += hp.alpha2 * 2.0 * qi[a] / n;
                }
            }
        }

        if hp.alpha1 != 0.0 {
            for i in 0..self.batch {
                for d in 0..self.dim {
                    let h2 = self.steps[d] * self.steps[d];
                    let i1 = self.stencil_index(i, d, 1);
                    let i2 = self.stencil_index(i, d, 2);
                    for a in 0..na {
                        let sd = self.second_derivative(&q, i, d, a);
                        let c = -hp.alpha1 * 2.0 * sd / (n * h2);
                        out_grad[i * na + a] += c;
                        out_grad[i1 * na + a] -= 2.0 * c;
                        out_grad[i2 * na + a] += c;
                    }
                }
            }
        }

        let mut grads = m.prior().zero_gradients();
        m.prior().backward_trace(&trace, &out_grad, &mut grads)?;
        Ok((terms, grads))
    }
}

fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

fn batch_for<'a>(
    member_index: usize,
    states: &[Vec<f64>],
    ensemble: &'a [QEnsembleMember],
    h: f64,
) -> Result<(DiversityBatch, &'a QEnsembleMember)> {
    let m = member(ensemble, member_index)?;
    let batch = DiversityBatch::new(states, ensemble, vec![h; m.state_dim()])?;
    Ok((batch, m))
}

// The finite-difference step is irrelevant to the KL and BD terms.
const UNUSED_STEP: f64 = 1e-2;

/// `-mean_s clip(KL(softmax(Q_j(s)) || softmax(Q_med(s))), 0, epsilon)`, in `[-epsilon, 0]`.
pub fn kl_loss(
    member_index: usize,
    states: &[Vec<f64>],
    ensemble: &[QEnsembleMember],
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let (batch, m) = batch_for(member_index, states, ensemble, UNUSED_STEP)?;
    Ok(batch.evaluate(m, epsilon)?.kl)
}

/// `-mean_s |Q_j''(s)|^2` with forward second differences of step `h` along
/// every state dimension, concatenated over dimensions and actions.
pub fn nl_loss(
    member_index: usize,
    states: &[Vec<f64>],
    ensemble: &[QEnsembleMember],
    h: f64,
) -> Result<f64> {
    let (batch, m) = batch_for(member_index, states, ensemble, h)?;
    Ok(batch.evaluate(m, 1.0)?.nl)
}

/// [`nl_loss`] for an arbitrary vector-valued Q function, evaluated one
/// stencil at a time.
pub fn nl_loss_with<F>(mut q: F, states: &[Vec<f64>], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if states.is_empty() {
        return Err(Error::Shape {
            context: "nl batch",
            expected: 1,
            got: 0,
        });
    }
    let mut total = 0.0;
    for s in states {
        for d in 0..s.len() {
            let second = fdm_second_derivative(&mut q, s, d, h)?;
            total += second.iter().map(|v| v * v).sum::<f64>();
        }
    }
    Ok(-total / states.len() as f64)
}

/// `mean_s |Q_j(s)|^2`.
pub fn bd_loss(
    member_index: usize,
    states: &[Vec<f64>],
    ensemble: &[QEnsembleMember],
) -> Result<f64> {
    let (batch, m) = batch_for(member_index, states, ensemble, UNUSED_STEP)?;
    Ok(batch.evaluate(m, 1.0)?.bd)
}

/// `KL_loss + alpha1 * NL_loss + alpha2 * BD_loss`, with `hp.fdm_step` used
/// as the raw finite-difference step.
pub fn diversity_objective(
    member_index: usize,
    states: &[Vec<f64>],
    ensemble: &[QEnsembleMember],
    hp: &DiversityParams,
) -> Result<f64> {
    hp.validate()?;
    let (batch, m) = batch_for(member_index, states, ensemble, hp.fdm_step)?;
    Ok(batch.evaluate(m, hp.epsilon)?.objective(hp))
}

/// Optimizes every member's prior network, then freezes all priors.
///
/// Each iteration samples a batch of states, picks one member uniformly, and
/// takes one optimizer step on that member's prior. Trainable networks are
/// never modified. The finite-difference step along dimension `d` is
/// `hp.fdm_step` times the sampler's width in that dimension.
pub fn diverse_prior_init<R: Rng + ?Sized>(
    ensemble: &mut [QEnsembleMember],
    sampler: &mut StateSampler,
    hp: &DiversityParams,
    optimizer: &Optimizer,
    rng: &mut R,
) -> Result<Vec<LossTerms>> {
    hp.validate()?;
    if ensemble.len() < 2 {
        return Err(Error::InvalidEnsemble(format!(
            "diverse prior initialization needs at least 2 members, got {}",
            ensemble.len()
        )));
    }
    check_len("sampler dimension", ensemble[0].state_dim(), sampler.dim())?;
    if ensemble.iter().any(|m| m.prior_frozen()) {
        return Err(Error::Protocol("priors are already frozen".into()));
    }
    let steps: Vec<f64> = sampler.widths().iter().map(|w| w * hp.fdm_step).collect();
    let mut optimizers = vec![optimizer.clone(); ensemble.len()];
    let mut history = Vec::with_capacity(hp.steps);
    for _ in 0..hp.steps {
        let states = sampler.sample_batch(hp.batch_size);
        let j = rng.random_range(0..ensemble.len());
        let batch = DiversityBatch::new(&states, ensemble, steps.clone())?;
        let (terms, grads) = batch.gradient(&ensemble[j], hp)?;
        optimizers[j].step(ensemble[j].prior_mut()?, &grads)?;
        history.push(terms);
    }
    for m in ensemble.iter_mut() {
        m.freeze_prior();
    }
    Ok(history)
}
