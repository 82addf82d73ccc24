//! FIFO replay buffer with uniform sampling.

use std::sync::Arc;

use rand::Rng;

use crate::mdp::StateTensor;

/// One stored interaction. States are shared behind `Arc` because each
/// slot's next-state is the following slot's state.
#[derive(Debug, Clone)]
pub struct Transition {
    pub s: Arc<StateTensor>,
    /// Normalized action in `[-1, 1]^3`.
    pub a: [f64; 3],
    pub r: f64,
    pub s_next: Arc<StateTensor>,
    /// True terminal (mission completed). Horizon truncation stores false
    /// so the bootstrap is not cut by an artificial episode end.
    pub done: bool,
}

/// Ring store; once full, each push evicts the oldest transition.
#[derive(Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.items[index]
    }

    /// Uniform sampling with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        (0..batch).map(|_| rng.gen_range(0..self.items.len())).collect()
    }

    /// Iterate in storage order (unspecified age order once wrapped).
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;

    fn transition(tag: f64) -> Transition {
        let s = Arc::new(StateTensor {
            rows: 1,
            cols: 1,
            s1: vec![tag as f32],
            s2: vec![0.0],
        });
        Transition {
            s: s.clone(),
            a: [0.0; 3],
            r: tag,
            s_next: s,
            done: false,
        }
    }

    #[test]
    fn fifo_eviction_at_capacity() {
        let mut buf = ReplayBuffer::new(4);
        for i in 0..10 {
            buf.push(transition(i as f64));
            assert!(buf.len() <= 4);
        }
        // After 10 pushes into capacity 4, transitions 0..6 are gone.
        let mut rewards: Vec<f64> = buf.iter().map(|t| t.r).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn sampling_is_with_replacement_and_in_range() {
        let mut buf = ReplayBuffer::new(8);
        for i in 0..3 {
            buf.push(transition(i as f64));
        }
        let mut rng = rng_from_seed(0);
        let idx = buf.sample_indices(64, &mut rng);
        assert_eq!(idx.len(), 64);
        assert!(idx.iter().all(|&i| i < 3));
    }
}
