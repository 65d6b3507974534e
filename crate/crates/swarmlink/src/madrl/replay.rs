//! Replay storage. One record per control round holds every agent's
//! transition plus the next-round critic-path messages, so an update can
//! recompute current messages (gradients flow into the helper) while target
//! messages replay as stored data.

use std::collections::VecDeque;

use rand::Rng;

use crate::env::{ControlAction, UavState};

/// One agent's slice of a control round.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: UavState,
    /// Actor-path helper message received when the action was taken.
    pub message: Vec<f64>,
    pub action: ControlAction,
    pub reward: f64,
    pub next_state: UavState,
    /// Actor-path helper message of the following round.
    pub next_message: Vec<f64>,
    pub done: bool,
}

/// A full control round across all agents.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub per_agent: Vec<Transition>,
    /// Critic-path helper messages of the following round (target inputs).
    pub next_critic_messages: Vec<Vec<f64>>,
    /// True-termination flag: when set the bootstrap term is dropped.
    /// Episodes in this world are time-limited, so rollouts store `false`;
    /// synthetic one-step tasks set it.
    pub terminal: bool,
}

/// FIFO ring of round records.
pub struct ReplayBuffer {
    records: VecDeque<RoundRecord>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self { records: VecDeque::with_capacity(capacity.min(1 << 20)), capacity }
    }

    pub fn push(&mut self, record: RoundRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, idx: usize) -> &RoundRecord {
        &self.records[idx]
    }

    /// Uniform indices with replacement; reproducible for a fixed RNG state.
    pub fn sample_indices(&self, rng: &mut impl Rng, batch: usize) -> Vec<usize> {
        (0..batch).map(|_| rng.gen_range(0..self.records.len())).collect()
    }
}
