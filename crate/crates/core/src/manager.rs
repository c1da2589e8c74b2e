//! High-level policy: tabular SMDP Q-learning over (region, task state).

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compression::RegionId;
use crate::env::Inventory;
use crate::options::OptionId;
use crate::workers::Worker;

#[derive(Debug, Error)]
pub enum ManagerError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SmdpState {
    pub region: RegionId,
    pub task: Inventory,
}

impl SmdpState {
    pub fn new(region: RegionId, task: Inventory) -> Self {
        Self { region, task }
    }
}

/// Task states seen so far and the task options discovered in each region.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskRegistry {
    states: BTreeSet<Inventory>,
    #[serde(with = "crate::serde_pairs")]
    options: BTreeMap<(RegionId, Inventory, Inventory), Worker>,
}

impl TaskRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn states(&self) -> impl Iterator<Item = Inventory> + '_ {
        self.states.iter().copied()
    }

    pub fn option_count(&self) -> usize {
        self.options.len()
    }

    pub fn add_state(&mut self, s: Inventory) -> bool {
        self.states.insert(s)
    }

    /// Registers a task-state change `s -> s2` observed in region `z`.
    /// Returns `(new_state, new_option)`.
    pub fn observe_task_change(
        &mut self,
        z: RegionId,
        s: Inventory,
        s2: Inventory,
        make_worker: impl FnOnce() -> Worker,
    ) -> (bool, bool) {
        self.states.insert(s);
        let new_state = self.states.insert(s2);
        let key = (z, s, s2);
        let new_option = !self.options.contains_key(&key);
        if new_option {
            self.options.insert(key, make_worker());
        }
        (new_state, new_option)
    }

    /// Task options that start in region `z` with task state `s`.
    pub fn options(&self, z: RegionId, s: Inventory) -> impl Iterator<Item = OptionId> + '_ {
        self.options
            .range((z, s, Inventory::EMPTY)..=(z, s, Inventory::from_bits(u8::MAX)))
            .map(|(&(region, from, to), _)| OptionId::Task { region, from, to })
    }

    pub fn all_options(&self) -> impl Iterator<Item = OptionId> + '_ {
        self.options.keys().map(|&(region, from, to)| OptionId::Task { region, from, to })
    }

    pub fn worker(&self, region: RegionId, from: Inventory, to: Inventory) -> Option<&Worker> {
        self.options.get(&(region, from, to))
    }

    pub fn worker_mut(&mut self, region: RegionId, from: Inventory, to: Inventory) -> Option<&mut Worker> {
        self.options.get_mut(&(region, from, to))
    }

    pub fn workers_mut(&mut self) -> impl Iterator<Item = &mut Worker> {
        self.options.values_mut()
    }

    pub fn clear(&mut self) {
        self.states.clear();
        self.options.clear();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManagerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        Self { alpha: 0.1, gamma: 0.99, epsilon_start: 0.05, epsilon_end: 0.005 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manager {
    pub cfg: ManagerConfig,
    #[serde(with = "crate::serde_pairs")]
    q: BTreeMap<(SmdpState, OptionId), f64>,
}

impl Manager {
    pub fn new(cfg: ManagerConfig) -> Self {
        Self { cfg, q: BTreeMap::new() }
    }

    /// Linear decay from the start to the end value as `progress` goes 0 → 1.
    pub fn epsilon(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.cfg.epsilon_start + (self.cfg.epsilon_end - self.cfg.epsilon_start) * p
    }

    pub fn q(&self, s: SmdpState, o: OptionId) -> f64 {
        self.q.get(&(s, o)).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (SmdpState, OptionId, f64)> + '_ {
        self.q.iter().map(|(&(s, o), &v)| (s, o, v))
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    fn check_admissible(s: SmdpState, options: &[OptionId]) -> Result<(), ManagerError> {
        if let Some(o) = options.iter().find(|o| o.region() != s.region) {
            return Err(ManagerError::Usage(format!("{o} is not admissible in region {}", s.region)));
        }
        Ok(())
    }

    /// Epsilon-greedy choice among `admissible`; exact ties are broken uniformly.
    pub fn get_option(
        &self,
        s: SmdpState,
        admissible: &[OptionId],
        epsilon: f64,
        rng: &mut impl Rng,
    ) -> Result<OptionId, ManagerError> {
        if admissible.is_empty() {
            return Err(ManagerError::Usage(format!("no options in region {}", s.region)));
        }
        Self::check_admissible(s, admissible)?;
        if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            return Ok(admissible[rng.gen_range(0..admissible.len())]);
        }
        let values: Vec<f64> = admissible.iter().map(|o| self.q(s, *o)).collect();
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
        let pick = if ties.len() == 1 { ties[0] } else { ties[rng.gen_range(0..ties.len())] };
        Ok(admissible[pick])
    }

    /// SMDP Q-learning step for an option that ran `duration` steps from `s`,
    /// collected discounted reward `reward` and ended in `next`.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        s: SmdpState,
        option: OptionId,
        reward: f64,
        duration: u32,
        next: SmdpState,
        next_admissible: &[OptionId],
        terminal: bool,
    ) -> Result<f64, ManagerError> {
        if option.region() != s.region {
            return Err(ManagerError::Usage(format!("{option} was not started from region {}", s.region)));
        }
        Self::check_admissible(next, next_admissible)?;
        let bootstrap = if terminal || next_admissible.is_empty() {
            0.0
        } else {
            next_admissible.iter().map(|o| self.q(next, *o)).fold(f64::NEG_INFINITY, f64::max)
        };
        let target = reward + self.cfg.gamma.powi(duration as i32) * bootstrap;
        let q = self.q.entry((s, option)).or_insert(0.0);
        *q += self.cfg.alpha * (target - *q);
        Ok(*q)
    }

    /// Forgets every learned value.
    pub fn reset_for_transfer(&mut self) {
        self.q.clear();
    }

    /// Dumps `(region, task_state, option, value)` rows.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), ManagerError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["region", "task_state", "option", "value"])?;
        for (s, o, v) in self.entries() {
            w.write_record([s.region.to_string(), s.task.to_string(), o.to_string(), v.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
