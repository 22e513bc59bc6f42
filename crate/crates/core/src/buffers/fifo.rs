use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Record;

/// Fixed-capacity first-in-first-out buffer holding the newest stream data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FifoBuffer {
    capacity: usize,
    slots: VecDeque<Record>,
}

impl FifoBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "FIFO capacity must be positive");
        Self {
            capacity,
            slots: VecDeque::with_capacity(capacity),
        }
    }

    /// Appends `rec`, returning the oldest record if the buffer was full.
    pub fn push(&mut self, rec: Record) -> Option<Record> {
        let evicted = if self.slots.len() == self.capacity {
            self.slots.pop_front()
        } else {
            None
        };
        self.slots.push_back(rec);
        evicted
    }

    /// Uniform sample of `count` distinct records (all of them if fewer are stored).
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<&Record> {
        let amount = count.min(self.slots.len());
        rand::seq::index::sample(rng, self.slots.len(), amount)
            .into_iter()
            .map(|i| &self.slots[i])
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.slots.iter()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}
