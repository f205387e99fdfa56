use std::collections::VecDeque;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seed::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub graph: Arc<Graph>,
    pub obs: Array2<f64>,
    pub allowed: Vec<bool>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Array2<f64>,
    pub next_allowed: Vec<bool>,
    pub done: bool,
}

/// Bounded FIFO memory; the oldest transition is evicted first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity),
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
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `size` distinct transitions chosen uniformly at random.
    pub fn sample(&self, size: usize, rng: &mut Rng) -> Result<Vec<&Transition>> {
        if size > self.items.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot sample {size} transitions from a buffer of {}",
                self.items.len()
            )));
        }
        Ok(index::sample(rng, self.items.len(), size)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}
