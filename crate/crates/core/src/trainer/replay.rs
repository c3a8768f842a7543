//! Bounded ring buffer of transitions with uniform sampling.

use rand::Rng;

use crate::checkpoint::{Checkpoint, CheckpointError, Kind};
use crate::env::Transition;

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    /// Slot the next insertion overwrites once full.
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            data: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.data.len() < self.capacity { 0 } else { self.cursor };
        self.data[split..].iter().chain(&self.data[..split])
    }

    /// Storage slot indices of `n` uniform draws with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        assert!(!self.data.is_empty(), "sampling from an empty replay buffer");
        (0..n).map(|_| rng.random_range(0..self.data.len())).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        self.sample_indices(n, rng).into_iter().map(|i| &self.data[i]).collect()
    }

    pub fn slot(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    pub fn to_checkpoint(&self, n: usize, m: usize) -> Checkpoint {
        let mut params = Vec::with_capacity(self.data.len() * (2 * n + m + 2));
        for t in &self.data {
            params.extend_from_slice(&t.x);
            params.extend_from_slice(&t.u);
            params.push(t.c);
            params.extend_from_slice(&t.x_next);
            params.push(if t.terminal { 1.0 } else { 0.0 });
        }
        Checkpoint {
            kind: Kind::Buffer,
            n: n as u32,
            m: m as u32,
            shape: vec![self.capacity as u64, self.cursor as u64, self.data.len() as u64],
            params,
            stats: vec![],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, CheckpointError> {
        let malformed = |m: &str| CheckpointError::Malformed(m.to_string());
        let [capacity, cursor, len] = ck.shape[..] else {
            return Err(malformed("replay buffer shape"));
        };
        let (capacity, cursor, len) = (capacity as usize, cursor as usize, len as usize);
        let (n, m) = (ck.n as usize, ck.m as usize);
        let stride = 2 * n + m + 2;
        if capacity == 0 || len > capacity || cursor >= capacity || ck.params.len() != len * stride {
            return Err(malformed("replay buffer contents"));
        }
        let data = ck
            .params
            .chunks(stride)
            .map(|r| Transition {
                x: r[..n].to_vec(),
                u: r[n..n + m].to_vec(),
                c: r[n + m],
                x_next: r[n + m + 1..2 * n + m + 1].to_vec(),
                terminal: r[stride - 1] != 0.0,
            })
            .collect();
        Ok(ReplayBuffer { capacity, data, cursor })
    }
}
