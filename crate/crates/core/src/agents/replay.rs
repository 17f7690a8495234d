use rand::Rng as _;

use crate::error::{contract, Result};
use crate::seed::Rng;

/// Fixed-capacity FIFO ring with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    cursor: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { items: Vec::with_capacity(capacity.min(1 << 20)), capacity, cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Evicts the oldest element once full.
    pub fn push(&mut self, t: T) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// `n` indices drawn uniformly with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(contract("sampling from an empty replay buffer"));
        }
        if n > self.items.len() {
            return Err(contract(format!("sample of {n} exceeds buffer size {}", self.items.len())));
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<&T>> {
        Ok(self.sample_indices(n, rng)?.into_iter().map(|i| &self.items[i]).collect())
    }

    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}
