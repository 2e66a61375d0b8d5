//! Bounded FIFO of task error messages.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct ErrorQueue {
    entries: VecDeque<String>,
    capacity: usize,
    dropped: u64,
}

impl ErrorQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::new(),
            capacity: capacity.max(1),
            dropped: 0,
        }
    }

    /// Appends, dropping the oldest entry when full.
    pub fn push(&mut self, msg: impl Into<String>) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
            self.dropped += 1;
        }
        self.entries.push_back(msg.into());
    }

    pub fn drain(&mut self) -> Vec<String> {
        self.entries.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Messages lost to overflow since creation.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}
