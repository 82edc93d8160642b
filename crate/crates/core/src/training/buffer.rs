use std::collections::VecDeque;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::agent::Transition;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Bounded FIFO of transitions; the oldest entry is evicted when full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    transitions: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            transitions: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, tr: Transition) {
        if self.transitions.len() == self.capacity {
            self.transitions.pop_front();
        }
        self.transitions.push_back(tr);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter()
    }

    /// `batch_size` distinct transitions drawn uniformly.
    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<Transition>> {
        if batch_size == 0 || self.len() < batch_size {
            return Err(Error::invalid(format!(
                "cannot sample {batch_size} transitions from a buffer of {}",
                self.len()
            )));
        }
        Ok(index::sample(rng, self.len(), batch_size)
            .into_iter()
            .map(|i| self.transitions[i].clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn tr(a: usize) -> Transition {
        Transition::extend(&[0], a, 0.0, false)
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for a in 0..5 {
            b.push(tr(a));
        }
        assert_eq!(b.len(), 3);
        let actions: Vec<usize> = b.iter().map(|t| t.action).collect();
        assert_eq!(actions, vec![2, 3, 4]);
    }

    #[test]
    fn sampling_needs_a_full_batch() {
        let mut b = ReplayBuffer::new(10).unwrap();
        let mut rng = stream_rng(0, 0);
        b.push(tr(1));
        assert!(b.sample(2, &mut rng).is_err());
        b.push(tr(2));
        let mut s: Vec<usize> = b
            .sample(2, &mut rng)
            .unwrap()
            .iter()
            .map(|t| t.action)
            .collect();
        s.sort();
        assert_eq!(s, vec![1, 2]);
        assert!(ReplayBuffer::new(0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn never_exceeds_capacity(cap in 1usize..20, pushes in 0usize..60) {
            let mut b = ReplayBuffer::new(cap).unwrap();
            for a in 0..pushes {
                b.push(tr(a));
                proptest::prop_assert!(b.len() <= cap);
            }
            proptest::prop_assert_eq!(b.len(), pushes.min(cap));
        }
    }
}
