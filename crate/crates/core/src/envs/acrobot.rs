use std::f64::consts::PI;

use rand::Rng;

use super::{check_action, finished_error, EnvSpec, Environment, StepResult};
use crate::error::Result;
use crate::SeededRng;

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const MAX_VEL_1: f64 = 4.0 * PI;
const MAX_VEL_2: f64 = 9.0 * PI;
const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];
const G: f64 = 9.8;
const MAX_STEPS: usize = 500;

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        state_dim: 6,
        action_count: 3,
        sampling_box: vec![
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-MAX_VEL_1, MAX_VEL_1),
            (-MAX_VEL_2, MAX_VEL_2),
        ],
        max_episode_steps: Some(MAX_STEPS),
    }
}

// Time derivative of (theta1, theta2, dtheta1, dtheta2) under torque `a`.
fn derivatives(s: [f64; 4], a: f64) -> [f64; 4] {
    let (m1, m2, l1, lc1, lc2) = (
        LINK_MASS_1,
        LINK_MASS_2,
        LINK_LENGTH_1,
        LINK_COM_1,
        LINK_COM_2,
    );
    let (i1, i2) = (LINK_MOI, LINK_MOI);
    let [theta1, theta2, dtheta1, dtheta2] = s;
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * G * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * G * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (a + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn rk4(s: [f64; 4], a: f64, dt: f64) -> [f64; 4] {
    let add = |x: [f64; 4], k: [f64; 4], h: f64| std::array::from_fn(|i| x[i] + h * k[i]);
    let k1 = derivatives(s, a);
    let k2 = derivatives(add(s, k1, dt / 2.0), a);
    let k3 = derivatives(add(s, k2, dt / 2.0), a);
    let k4 = derivatives(add(s, k3, dt), a);
    std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn wrap(mut x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    while x > hi {
        x -= span;
    }
    while x < lo {
        x += span;
    }
    x
}

/// One control step of the two-link acrobot on the internal state
/// `(theta1, theta2, dtheta1, dtheta2)`. Actions apply torques -1, 0, +1.
/// Returns the next state and whether the tip rose above the goal height.
pub fn acrobot_step(state: [f64; 4], action: usize) -> Result<([f64; 4], bool)> {
    check_action(action, 3)?;
    let ns = rk4(state, TORQUES[action], DT);
    let next = [
        wrap(ns[0], -PI, PI),
        wrap(ns[1], -PI, PI),
        ns[2].clamp(-MAX_VEL_1, MAX_VEL_1),
        ns[3].clamp(-MAX_VEL_2, MAX_VEL_2),
    ];
    let reached = -next[0].cos() - (next[1] + next[0]).cos() > 1.0;
    Ok((next, reached))
}

/// `(cos t1, sin t1, cos t2, sin t2, dt1, dt2)`.
pub(crate) fn observe(s: [f64; 4]) -> Vec<f64> {
    vec![s[0].cos(), s[0].sin(), s[1].cos(), s[1].sin(), s[2], s[3]]
}

/// Swing-up of a two-link pendulum: reward -1 per step until the goal,
/// truncated at 500 steps.
#[derive(Debug, Clone)]
pub struct Acrobot {
    spec: EnvSpec,
    state: [f64; 4],
    steps: usize,
    done: bool,
}

impl Default for Acrobot {
    fn default() -> Self {
        Self::new()
    }
}

impl Acrobot {
    pub fn new() -> Self {
        Self {
            spec: spec(),
            state: [0.0; 4],
            steps: 0,
            done: true,
        }
    }
}

impl Environment for Acrobot {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64> {
        for v in &mut self.state {
            *v = rng.random_range(-0.1..0.1);
        }
        self.steps = 0;
        self.done = false;
        observe(self.state)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(finished_error());
        }
        let (next, terminal) = acrobot_step(self.state, action)?;
        self.state = next;
        self.steps += 1;
        let truncated = !terminal && self.steps >= MAX_STEPS;
        self.done = terminal || truncated;
        Ok(StepResult {
            next_state: observe(next),
            reward: if terminal { 0.0 } else { -1.0 },
            terminal,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream_rng;

    #[test]
    fn hanging_at_rest_is_an_equilibrium() {
        let (next, reached) = acrobot_step([0.0; 4], 1).unwrap();
        for v in next {
            assert!(v.abs() < 1e-12);
        }
        assert!(!reached);
    }

    #[test]
    fn energy_free_rk4_matches_small_step_integration() {
        // One rk4 step of 0.2 s against 2000 Euler sub-steps of the same ODE.
        let s0 = [0.3, -0.2, 0.5, -0.1];
        let big = rk4(s0, 1.0, DT);
        let mut fine = s0;
        let n = 20_000;
        for _ in 0..n {
            let d = derivatives(fine, 1.0);
            for i in 0..4 {
                fine[i] += DT / n as f64 * d[i];
            }
        }
        for i in 0..4 {
            assert!(
                (big[i] - fine[i]).abs() < 1e-3,
                "{i}: {} vs {}",
                big[i],
                fine[i]
            );
        }
    }

    #[test]
    fn observation_is_trig_encoding() {
        let obs = observe([0.5, -1.0, 2.0, 3.0]);
        assert_eq!(obs.len(), 6);
        assert!((obs[0] - 0.5f64.cos()).abs() < 1e-15);
        assert!((obs[3] - (-1.0f64).sin()).abs() < 1e-15);
        assert_eq!(&obs[4..], &[2.0, 3.0]);
    }

    #[test]
    fn angles_wrap_and_velocities_clip() {
        let (next, _) = acrobot_step([3.1, 3.1, 12.0, 28.0], 2).unwrap();
        assert!(next[0].abs() <= PI && next[1].abs() <= PI);
        assert!(next[2].abs() <= MAX_VEL_1 && next[3].abs() <= MAX_VEL_2);
    }

    #[test]
    fn rewards_and_truncation() {
        let mut env = Acrobot::new();
        let obs = env.reset(&mut stream_rng(0, 0));
        assert_eq!(obs.len(), 6);
        let mut steps = 0;
        loop {
            let r = env.step(1).unwrap();
            steps += 1;
            if r.done() {
                assert!(r.truncated);
                break;
            }
            assert_eq!(r.reward, -1.0);
        }
        assert_eq!(steps, 500);
    }

    #[test]
    fn goal_height_terminates() {
        // Both links pointing up: tip height -cos(pi) - cos(pi + 0) = 2.
        let (_, reached) = acrobot_step([PI - 0.01, 0.0, 0.0, 0.0], 1).unwrap();
        assert!(reached);
    }
}
