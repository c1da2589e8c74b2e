//! Prioritized FIFO replay buffer for self-imitation.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub capacity: usize,
    /// Priority exponent.
    pub alpha: f64,
    /// Importance-sampling exponent.
    pub beta: f64,
    /// Smallest priority before exponentiation.
    pub floor: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self { capacity: 10_000, alpha: 0.6, beta: 0.4, floor: 1e-5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayEntry {
    pub obs: Vec<f64>,
    pub action: usize,
    pub ret: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub slot: usize,
    /// Importance weight, normalized by the largest weight in the batch.
    pub weight: f64,
}

/// Binary tree of partial sums over slot priorities.
#[derive(Clone, Debug)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two();
        Self { leaves, nodes: vec![0.0; 2 * leaves] }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn get(&self, slot: usize) -> f64 {
        self.nodes[slot + self.leaves]
    }

    fn set(&mut self, slot: usize, value: f64) {
        let mut i = slot + self.leaves;
        self.nodes[i] = value;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    /// Slot whose cumulative priority interval contains `u`.
    fn find(&self, mut u: f64) -> usize {
        let mut i = 1;
        while i < self.leaves {
            let left = 2 * i;
            if u < self.nodes[left] {
                i = left;
            } else {
                u -= self.nodes[left];
                i = left + 1;
            }
        }
        i - self.leaves
    }
}

#[derive(Clone, Debug)]
pub struct PrioritizedReplay {
    cfg: ReplayConfig,
    entries: Vec<ReplayEntry>,
    ids: Vec<u64>,
    next_id: u64,
    tree: SumTree,
    max_priority: f64,
}

impl PrioritizedReplay {
    pub fn new(cfg: ReplayConfig) -> Self {
        assert!(cfg.capacity > 0, "replay capacity must be positive");
        Self {
            cfg,
            entries: Vec::new(),
            ids: Vec::new(),
            next_id: 0,
            tree: SumTree::new(cfg.capacity),
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cfg.capacity
    }

    pub fn clear(&mut self) {
        *self = Self::new(self.cfg);
    }

    /// Stores an entry with the current maximum priority, evicting the oldest
    /// entry when full. Returns the entry's id.
    pub fn push(&mut self, entry: ReplayEntry) -> u64 {
        let id = self.next_id;
        let slot = (id % self.cfg.capacity as u64) as usize;
        if slot == self.entries.len() {
            self.entries.push(entry);
            self.ids.push(id);
        } else {
            self.entries[slot] = entry;
            self.ids[slot] = id;
        }
        self.tree.set(slot, self.max_priority);
        self.next_id += 1;
        id
    }

    pub fn entry(&self, slot: usize) -> &ReplayEntry {
        &self.entries[slot]
    }

    /// Adds `delta` to the stored return of entry `id`. Returns false when the
    /// entry has already been evicted.
    pub fn amend_return(&mut self, id: u64, delta: f64) -> bool {
        let slot = (id % self.cfg.capacity as u64) as usize;
        match self.ids.get(slot) {
            Some(&stored) if stored == id => {
                self.entries[slot].ret += delta;
                true
            }
            _ => false,
        }
    }

    pub fn priority(&self, slot: usize) -> f64 {
        self.tree.get(slot)
    }

    /// Sets the priority from a clipped advantage.
    pub fn update_priority(&mut self, slot: usize, advantage: f64) {
        let p = advantage.max(self.cfg.floor).powf(self.cfg.alpha);
        self.max_priority = self.max_priority.max(p);
        self.tree.set(slot, p);
    }

    /// Draws `n` slots with replacement, proportionally to priority.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<Sample> {
        if self.entries.is_empty() {
            return Vec::new();
        }
        let total = self.tree.total();
        let len = self.entries.len();
        let mut out: Vec<Sample> = (0..n)
            .map(|_| {
                let slot = self.tree.find(rng.gen::<f64>() * total).min(len - 1);
                let prob = self.tree.get(slot) / total;
                Sample { slot, weight: (len as f64 * prob).powf(-self.cfg.beta) }
            })
            .collect();
        let max_w = out.iter().map(|s| s.weight).fold(0.0, f64::max);
        for s in &mut out {
            s.weight /= max_w;
        }
        out
    }
}
