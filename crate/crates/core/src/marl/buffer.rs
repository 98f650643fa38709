//! Shared per-team replay buffer.

use rand::Rng;

use crate::Scalar;

/// One joint transition of a team.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub joint_obs: Vec<Scalar>,
    pub joint_action: Vec<Scalar>,
    pub joint_next_obs: Vec<Scalar>,
    /// Per-agent rewards.
    pub rewards: Vec<Scalar>,
    /// Per-agent done flags (1 once the agent stopped interacting).
    pub done_flags: Vec<Scalar>,
}

/// Fixed-capacity ring of experiences with uniform batch sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Experience>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, storage: Vec::with_capacity(capacity.min(4096)), cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, experience: Experience) {
        if self.storage.len() < self.capacity {
            self.storage.push(experience);
        } else {
            self.storage[self.cursor] = experience;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, index: usize) -> &Experience {
        &self.storage[index]
    }

    /// Uniform sample of distinct filled slots. Panics if fewer than
    /// `batch_size` experiences are stored; callers gate on `len()`.
    pub fn sample_indices<G: Rng>(&self, rng: &mut G, batch_size: usize) -> Vec<usize> {
        assert!(batch_size <= self.storage.len(), "sampling before the buffer holds a batch");
        rand::seq::index::sample(rng, self.storage.len(), batch_size).into_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(tag: Scalar) -> Experience {
        Experience {
            joint_obs: vec![tag],
            joint_action: vec![tag],
            joint_next_obs: vec![tag],
            rewards: vec![tag],
            done_flags: vec![0.0],
        }
    }

    #[test]
    fn ring_never_exceeds_capacity() {
        let mut buffer = ReplayBuffer::new(4);
        for i in 0..10 {
            buffer.push(exp(i as Scalar));
        }
        assert_eq!(buffer.len(), 4);
        // Oldest entries were overwritten: remaining tags are 6..=9.
        let tags: Vec<Scalar> = (0..4).map(|i| buffer.get(i).rewards[0]).collect();
        for t in tags {
            assert!(t >= 6.0);
        }
    }

    #[test]
    fn sampling_is_without_replacement_and_filled_only() {
        let mut buffer = ReplayBuffer::new(100);
        for i in 0..10 {
            buffer.push(exp(i as Scalar));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let idx = buffer.sample_indices(&mut rng, 8);
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 8, "indices must be distinct");
            assert!(idx.iter().all(|&i| i < 10), "only filled slots");
        }
    }

    #[test]
    #[should_panic(expected = "before the buffer holds a batch")]
    fn sampling_underfilled_buffer_panics() {
        let mut buffer = ReplayBuffer::new(10);
        buffer.push(exp(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let _ = buffer.sample_indices(&mut rng, 2);
    }
}
