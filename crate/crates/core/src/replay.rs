//! Bounded replay buffer with per-member bootstrap masks.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{check_len, Error, Result};

/// One environment step plus the bootstrap mask deciding which members may
/// train on it.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedTransition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub mask: Vec<bool>,
}

/// A stored transition tagged with its insertion index.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTransition {
    pub id: u64,
    pub transition: MaskedTransition,
}

/// Draws `k` independent Bernoulli(`p`) bits.
pub fn sample_mask<R: Rng + ?Sized>(k: usize, p: f64, rng: &mut R) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Numeric(format!(
            "mask probability {p} outside [0, 1]"
        )));
    }
    Ok((0..k).map(|_| rng.random_bool(p)).collect())
}

/// FIFO ring of masked transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    ensemble_size: usize,
    items: VecDeque<StoredTransition>,
    eligible: Vec<usize>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, ensemble_size: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            ensemble_size,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            eligible: vec![0; ensemble_size],
            inserted: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble_size
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total number of transitions ever pushed.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Number of stored transitions whose mask bit `member` is set.
    pub fn eligible_count(&self, member: usize) -> usize {
        self.eligible.get(member).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredTransition> {
        self.items.iter()
    }

    /// Stores `t`, evicting the oldest entry when full. Returns the new entry's id.
    pub fn push(&mut self, t: MaskedTransition) -> Result<u64> {
        check_len("transition mask", self.ensemble_size, t.mask.len())?;
        if self.items.len() == self.capacity {
            let old = self.items.pop_front().expect("buffer is full");
            self.adjust_counts(&old.transition.mask, false);
        }
        self.adjust_counts(&t.mask, true);
        let id = self.inserted;
        self.inserted += 1;
        self.items.push_back(StoredTransition { id, transition: t });
        Ok(id)
    }

    fn adjust_counts(&mut self, mask: &[bool], add: bool) {
        for (count, &bit) in self.eligible.iter_mut().zip(mask) {
            if bit {
                if add {
                    *count += 1;
                } else {
                    *count -= 1;
                }
            }
        }
    }

    /// Samples `batch_size` entries uniformly, with replacement, from the
    /// transitions whose mask bit `member` is set.
    pub fn sample_for_member<R: Rng + ?Sized>(
        &self,
        member: usize,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&StoredTransition>> {
        if member >= self.ensemble_size {
            return Err(Error::Shape {
                context: "replay member index",
                expected: self.ensemble_size,
                got: member,
            });
        }
        let eligible = self.eligible[member];
        if eligible == 0 {
            return Err(Error::InsufficientData { member });
        }
        let len = self.items.len();
        let mut out = Vec::with_capacity(batch_size);
        if eligible * 4 >= len {
            // Rejection sampling is uniform over the eligible subset.
            while out.len() < batch_size {
                let item = &self.items[rng.random_range(0..len)];
                if item.transition.mask[member] {
                    out.push(item);
                }
            }
        } else {
            let indices: Vec<usize> = (0..len)
                .filter(|&i| self.items[i].transition.mask[member])
                .collect();
            for _ in 0..batch_size {
                out.push(&self.items[indices[rng.random_range(0..indices.len())]]);
            }
        }
        Ok(out)
    }
}
