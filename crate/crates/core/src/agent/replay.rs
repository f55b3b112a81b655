use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Stacked transitions, one row per sample.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

/// Fixed-capacity FIFO replay memory.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity: capacity.max(1), items: VecDeque::with_capacity(capacity.max(1)), pushed: 0 }
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

    /// Total transitions ever stored, including evicted ones.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        self.pushed += 1;
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample without replacement.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Batch> {
        if size == 0 || size > self.items.len() {
            return Err(Error::Usage(format!("cannot sample {size} from {} transitions", self.items.len())));
        }
        let idx = rand::seq::index::sample(rng, self.items.len(), size);
        self.stack(idx.iter())
    }

    pub fn stack(&self, idx: impl Iterator<Item = usize>) -> Result<Batch> {
        let picked: Vec<&Transition> = idx.map(|i| &self.items[i]).collect();
        let first = picked.first().ok_or_else(|| Error::Usage("empty batch".into()))?;
        let (sd, ad) = (first.state.len(), first.action.len());
        let n = picked.len();
        let rows =
            |f: &dyn Fn(&Transition) -> &[f64], w: usize| Array2::from_shape_fn((n, w), |(i, j)| f(picked[i])[j]);
        Ok(Batch {
            states: rows(&|t| &t.state, sd),
            actions: rows(&|t| &t.action, ad),
            rewards: picked.iter().map(|t| t.reward).collect(),
            next_states: rows(&|t| &t.next_state, sd),
            dones: picked.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect(),
        })
    }
}
