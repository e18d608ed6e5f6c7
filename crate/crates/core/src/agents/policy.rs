use rand::Rng;

use crate::error::{Error, Result};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Uniform member index in `[0, k)`.
pub fn select_member<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidEnsemble(
            "cannot select from an empty ensemble".into(),
        ));
    }
    Ok(rng.random_range(0..k))
}

/// Decaying exploration rate `beta1 + (beta2 - beta1) * exp(-k / lambda)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub beta1: f64,
    pub beta2: f64,
    pub lambda: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            beta1: 0.05,
            beta2: 0.9,
            lambda: 1000.0,
        }
    }
}

impl EpsilonSchedule {
    /// A schedule that never explores.
    pub const GREEDY: EpsilonSchedule = EpsilonSchedule {
        beta1: 0.0,
        beta2: 0.0,
        lambda: 1.0,
    };

    pub fn epsilon(&self, step: u64) -> f64 {
        self.beta1 + (self.beta2 - self.beta1) * (-(step as f64) / self.lambda).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream_rng;

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax(&[0.0, 5.0, 1.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
        assert_eq!(argmax(&[-1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn argmax_matches_exhaustive_scan() {
        let mut rng = stream_rng(5, 0);
        for _ in 0..1000 {
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(0..3) as f64).collect();
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = (0..v.len()).find(|&i| v[i] == max).unwrap();
            assert_eq!(argmax(&v), first);
        }
    }

    #[test]
    fn select_member_distribution() {
        let mut rng = stream_rng(1, 0);
        assert!((0..100).all(|_| select_member(1, &mut rng).unwrap() == 0));
        let mut counts = [0usize; 5];
        let draws = 100_000;
        for _ in 0..draws {
            counts[select_member(5, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.2).abs() < 0.01);
        }
        let a: Vec<usize> = (0..20)
            .map(|_| select_member(7, &mut stream_rng(3, 3)).unwrap())
            .collect();
        let mut r1 = stream_rng(3, 3);
        let mut r2 = stream_rng(3, 3);
        let s1: Vec<usize> = (0..20)
            .map(|_| select_member(7, &mut r1).unwrap())
            .collect();
        let s2: Vec<usize> = (0..20)
            .map(|_| select_member(7, &mut r2).unwrap())
            .collect();
        assert_eq!(s1, s2);
        assert!(a.iter().all(|&i| i < 7));
        assert!(select_member(0, &mut rng).is_err());
    }

    #[test]
    fn schedule_endpoints() {
        let s = EpsilonSchedule::default();
        assert!((s.epsilon(0) - 0.9).abs() < 1e-15);
        assert!((s.epsilon(1_000_000) - 0.05).abs() < 1e-12);
        assert!(s.epsilon(500) < s.epsilon(100));
        assert_eq!(EpsilonSchedule::GREEDY.epsilon(0), 0.0);
    }
}
