use crate::error::{check_len, Error, Result};
use crate::math::{Gradients, Mlp};
use crate::replay::MaskedTransition;

/// One ensemble member: `Q(s) = f(s) + p(s)` with a trainable network `f`,
/// its periodically synchronised target copy, and a prior network `p`.
///
/// Once the prior is frozen, the only way to reach its parameters is the
/// read-only [`QEnsembleMember::prior`] accessor.
#[derive(Debug, Clone)]
pub struct QEnsembleMember {
    trainable: Mlp,
    target: Mlp,
    prior: Mlp,
    prior_frozen: bool,
}

impl QEnsembleMember {
    pub fn new(trainable: Mlp, prior: Mlp) -> Result<Self> {
        check_len("prior input", trainable.input_dim(), prior.input_dim())?;
        check_len("prior output", trainable.output_dim(), prior.output_dim())?;
        Ok(Self {
            target: trainable.clone(),
            trainable,
            prior,
            prior_frozen: false,
        })
    }

    pub fn trainable(&self) -> &Mlp {
        &self.trainable
    }

    pub fn trainable_mut(&mut self) -> &mut Mlp {
        &mut self.trainable
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn prior(&self) -> &Mlp {
        &self.prior
    }

    pub fn prior_frozen(&self) -> bool {
        self.prior_frozen
    }

    /// Mutable prior access, refused once the prior is frozen.
    pub fn prior_mut(&mut self) -> Result<&mut Mlp> {
        if self.prior_frozen {
            return Err(Error::Protocol("prior network is frozen".into()));
        }
        Ok(&mut self.prior)
    }

    pub fn freeze_prior(&mut self) {
        self.prior_frozen = true;
    }

    /// Hard copy of the trainable parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target.clone_from(&self.trainable);
    }

    pub fn state_dim(&self) -> usize {
        self.trainable.input_dim()
    }

    pub fn action_count(&self) -> usize {
        self.trainable.output_dim()
    }

    /// `f(s) + p(s)` for every action.
    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut q = self.trainable.forward(state)?;
        for (v, p) in q.iter_mut().zip(self.prior.forward(state)?) {
            *v += p;
        }
        Ok(q)
    }

    /// Row-major `(batch x actions)` Q values.
    pub fn q_batch(&self, states: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut q = self.trainable.forward_batch(states, batch)?;
        for (v, p) in q.iter_mut().zip(self.prior.forward_batch(states, batch)?) {
            *v += p;
        }
        Ok(q)
    }

    /// `f_target(s) + p(s)`: the bootstrap side of the TD error shares the prior.
    pub fn target_q_batch(&self, states: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut q = self.target.forward_batch(states, batch)?;
        for (v, p) in q.iter_mut().zip(self.prior.forward_batch(states, batch)?) {
            *v += p;
        }
        Ok(q)
    }

    /// Mean squared TD error over `batch` and its gradient with respect to the
    /// trainable parameters only. Terminal transitions drop the bootstrap term.
    pub fn td_loss(&self, batch: &[&MaskedTransition], gamma: f64) -> Result<(f64, Gradients)> {
        let (states, next_states) = self.stack_states(batch)?;
        let n = batch.len();
        let prior_q = self.prior.forward_batch(&states, n)?;
        let prior_next_q = self.prior.forward_batch(&next_states, n)?;
        self.td_loss_inner(batch, &states, &next_states, &prior_q, &prior_next_q, gamma)
    }

    fn stack_states(&self, batch: &[&MaskedTransition]) -> Result<(Vec<f64>, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Shape {
                context: "td batch",
                expected: 1,
                got: 0,
            });
        }
        let n = batch.len();
        let dim = self.state_dim();
        let actions = self.action_count();
        let mut states = Vec::with_capacity(n * dim);
        let mut next_states = Vec::with_capacity(n * dim);
        for t in batch {
            check_len("td state", dim, t.state.len())?;
            check_len("td next state", dim, t.next_state.len())?;
            if t.action >= actions {
                return Err(Error::Protocol(format!(
                    "action {} out of range for {actions} actions",
                    t.action
                )));
            }
            states.extend_from_slice(&t.state);
            next_states.extend_from_slice(&t.next_state);
        }
        Ok((states, next_states))
    }

    /// [`QEnsembleMember::td_loss`] with the frozen prior's outputs supplied
    /// by the caller. `prior_q[i]` and `prior_next_q[i]` hold `p` at the
    /// state and next state of `batch[i]`.
    pub fn td_loss_with_prior(
        &self,
        batch: &[&MaskedTransition],
        prior_q: &[&[f64]],
        prior_next_q: &[&[f64]],
        gamma: f64,
    ) -> Result<(f64, Gradients)> {
        let (states, next_states) = self.stack_states(batch)?;
        let actions = self.action_count();
        check_len("cached prior rows", batch.len(), prior_q.len())?;
        check_len("cached prior rows", batch.len(), prior_next_q.len())?;
        let mut flat_q = Vec::with_capacity(batch.len() * actions);
        let mut flat_next = Vec::with_capacity(batch.len() * actions);
        for (q, nq) in prior_q.iter().zip(prior_next_q) {
            check_len("cached prior width", actions, q.len())?;
            check_len("cached prior width", actions, nq.len())?;
            flat_q.extend_from_slice(q);
            flat_next.extend_from_slice(nq);
        }
        self.td_loss_inner(batch, &states, &next_states, &flat_q, &flat_next, gamma)
    }

    fn td_loss_inner(
        &self,
        batch: &[&MaskedTransition],
        states: &[f64],
        next_states: &[f64],
        prior_q: &[f64],
        prior_next_q: &[f64],
        gamma: f64,
    ) -> Result<(f64, Gradients)> {
        let n = batch.len();
        let actions = self.action_count();
        let mut next_q = self.target.forward_batch(next_states, n)?;
        for (v, p) in next_q.iter_mut().zip(prior_next_q) {
            *v += p;
        }
        let trace = self.trainable.forward_trace(states, n)?;

        let mut loss = 0.0;
        let mut out_grad = vec![0.0; n * actions];
        for (i, t) in batch.iter().enumerate() {
            let target = if t.terminal {
                t.reward
            } else {
                let row = &next_q[i * actions..(i + 1) * actions];
                t.reward + gamma * row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let idx = i * actions + t.action;
            let current = trace.output()[idx] + prior_q[idx];
            let err = target - current;
            loss += err * err;
            out_grad[idx] = -2.0 * err / n as f64;
        }
        let mut grads = self.trainable.zero_gradients();
        self.trainable
            .backward_trace(&trace, &out_grad, &mut grads)?;
        Ok((loss / n as f64, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Activation;
    use crate::stream_rng;
    use rand::Rng;

    fn constant_net(outputs: &[f64], input_dim: usize) -> Mlp {
        let mut net = Mlp::zeros(&[input_dim, outputs.len()], Activation::Identity).unwrap();
        net.bias_mut(0).copy_from_slice(outputs);
        net
    }

    fn transition(
        state: Vec<f64>,
        action: usize,
        reward: f64,
        next: Vec<f64>,
        terminal: bool,
    ) -> MaskedTransition {
        MaskedTransition {
            state,
            action,
            reward,
            next_state: next,
            terminal,
            mask: vec![true],
        }
    }

    #[test]
    fn member_q_is_sum_of_networks() {
        let m = QEnsembleMember::new(constant_net(&[1.0, 2.0], 3), constant_net(&[3.0, 4.0], 3))
            .unwrap();
        assert_eq!(m.q_values(&[0.0; 3]).unwrap(), vec![4.0, 6.0]);
    }

    #[test]
    fn zero_prior_leaves_trainable_output() {
        let mut rng = stream_rng(0, 0);
        let f = Mlp::he_init(&[3, 8, 2], Activation::Relu, &mut rng).unwrap();
        let p = Mlp::zeros(&[3, 8, 2], Activation::Tanh).unwrap();
        let m = QEnsembleMember::new(f.clone(), p).unwrap();
        let s = [0.3, -0.2, 0.9];
        assert_eq!(m.q_values(&s).unwrap(), f.forward(&s).unwrap());
    }

    #[test]
    fn frozen_prior_refuses_mutation() {
        let mut m =
            QEnsembleMember::new(constant_net(&[0.0, 0.0], 1), constant_net(&[0.0, 0.0], 1))
                .unwrap();
        assert!(m.prior_mut().is_ok());
        m.freeze_prior();
        assert!(matches!(m.prior_mut(), Err(Error::Protocol(_))));
    }

    #[test]
    fn terminal_transition_with_matching_q_has_zero_error() {
        let m = QEnsembleMember::new(constant_net(&[1.0, 0.0], 1), constant_net(&[0.0, 0.0], 1))
            .unwrap();
        let t = transition(vec![0.0], 0, 1.0, vec![0.0], true);
        let (loss, grads) = m.td_loss(&[&t], 0.99).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.is_zero());
    }

    #[test]
    fn exact_bootstrap_match_has_zero_error() {
        // current Q(s, a) = 9.9, max target Q = 10, r = 0, gamma = 0.99
        let f = constant_net(&[4.9, 0.0], 1);
        let p = constant_net(&[5.0, 10.0], 1);
        let m = QEnsembleMember::new(f, p).unwrap();
        let t = transition(vec![0.0], 0, 0.0, vec![0.0], false);
        let (loss, _) = m.td_loss(&[&t], 0.99).unwrap();
        assert!(loss < 1e-24, "{loss}");
    }

    #[test]
    fn td_loss_matches_per_transition_oracle_and_finite_differences() {
        let mut rng = stream_rng(21, 0);
        let f = Mlp::he_init(&[3, 8, 2], Activation::Relu, &mut rng).unwrap();
        let p = Mlp::he_init(&[3, 8, 2], Activation::Tanh, &mut rng).unwrap();
        let mut m = QEnsembleMember::new(f, p).unwrap();
        for w in m.trainable_mut().params_mut() {
            *w += rng.random_range(-0.2..0.2);
        }
        let batch: Vec<MaskedTransition> = (0..12)
            .map(|i| {
                transition(
                    (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    i % 2,
                    rng.random_range(-1.0..1.0),
                    (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    i % 5 == 0,
                )
            })
            .collect();
        let refs: Vec<&MaskedTransition> = batch.iter().collect();
        let gamma = 0.9;
        let (loss, grads) = m.td_loss(&refs, gamma).unwrap();

        let oracle = |m: &QEnsembleMember| -> f64 {
            let mut total = 0.0;
            for t in &batch {
                let tq: Vec<f64> = m
                    .target()
                    .forward(&t.next_state)
                    .unwrap()
                    .iter()
                    .zip(m.prior().forward(&t.next_state).unwrap())
                    .map(|(a, b)| a + b)
                    .collect();
                let max_next = tq.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let y = if t.terminal {
                    t.reward
                } else {
                    t.reward + gamma * max_next
                };
                let q = m.trainable().forward(&t.state).unwrap()[t.action]
                    + m.prior().forward(&t.state).unwrap()[t.action];
                total += (y - q).powi(2);
            }
            total / batch.len() as f64
        };
        assert!((loss - oracle(&m)).abs() < 1e-10);

        let h = 1e-6;
        for i in 0..m.trainable().num_params() {
            let orig = m.trainable().params()[i];
            m.trainable_mut().params_mut()[i] = orig + h;
            let up = oracle(&m);
            m.trainable_mut().params_mut()[i] = orig - h;
            let down = oracle(&m);
            m.trainable_mut().params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grads.values()[i];
            let err = (a - numeric).abs();
            assert!(
                err < 1e-7 || err / a.abs().max(numeric.abs()) < 1e-3,
                "{i}: {a} vs {numeric}"
            );
        }
    }
}
