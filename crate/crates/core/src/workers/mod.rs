//! Option-policy learners.

pub mod mlp;
pub mod optim;
pub mod replay;
pub mod sil;
pub mod tabular;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Inventory, Pos};

pub use sil::{discounted_returns, ReplaySpan, SilConfig, SilWorker};
pub use tabular::{TabularConfig, TabularWorker};

#[derive(Debug, Error, PartialEq)]
pub enum WorkerError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("usage error: {0}")]
    Usage(String),
}

/// What a worker sees: its position and, for task-aware workers, the inventory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub pos: Pos,
    pub inventory: Option<Inventory>,
    /// Map width and height, used to scale positions into [0, 1].
    pub extent: (i32, i32),
}

impl Observation {
    pub fn width(with_inventory: bool) -> usize {
        if with_inventory {
            5
        } else {
            2
        }
    }

    pub fn features(&self) -> Vec<f64> {
        let scale = |v: i32, n: i32| if n > 1 { v as f64 / (n - 1) as f64 } else { 0.0 };
        let mut f = vec![scale(self.pos.x, self.extent.0), scale(self.pos.y, self.extent.1)];
        if let Some(inv) = self.inventory {
            for flag in [Inventory::KEY, Inventory::DOOR, Inventory::TREASURE] {
                f.push(if inv.has(flag) { 1.0 } else { 0.0 });
            }
        }
        f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkerKind {
    Tabular,
    Sil,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkerConfig {
    pub kind: WorkerKind,
    pub tabular: TabularConfig,
    pub sil: SilConfig,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self { kind: WorkerKind::Tabular, tabular: TabularConfig::default(), sil: SilConfig::default() }
    }
}

impl WorkerConfig {
    pub fn build(&self, with_inventory: bool, rng: &mut impl Rng) -> Worker {
        match self.kind {
            WorkerKind::Tabular => Worker::Tabular(TabularWorker::new(self.tabular)),
            WorkerKind::Sil => {
                Worker::Sil(Box::new(SilWorker::new(self.sil, Observation::width(with_inventory), Action::COUNT, rng)))
            }
        }
    }
}

/// Where a delayed reward for a finished trajectory has to be delivered.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BonusTarget {
    Tabular { pos: Pos, action: Action },
    Replay(ReplaySpan),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Worker {
    Tabular(TabularWorker),
    Sil(Box<SilWorker>),
}

impl Worker {
    pub fn act(&self, obs: &Observation, greedy: bool, rng: &mut impl Rng) -> Action {
        match self {
            Worker::Tabular(w) => w.act(obs.pos, greedy, rng),
            Worker::Sil(w) => Action::from_index(w.act(&obs.features(), greedy, rng)),
        }
    }

    /// Feeds one transition of the option MDP. `next = None` marks a terminal
    /// transition: the destination is a terminal super-state and is not seen.
    pub fn observe(&mut self, obs: &Observation, action: Action, reward: f64, next: Option<&Observation>, rng: &mut impl Rng) {
        match self {
            Worker::Tabular(w) => w.update(obs.pos, action, reward, next.map(|n| n.pos)),
            Worker::Sil(w) => {
                let nf = next.map(|n| n.features());
                w.observe(&obs.features(), action.index(), reward, nf.as_deref(), rng);
            }
        }
    }

    /// Closes the current trajectory. `last` is the final transition's start
    /// state and action; `bootstrap` the state to bootstrap from if the
    /// trajectory was cut short without reaching a terminal state.
    pub fn finish(
        &mut self,
        last: Option<(Pos, Action)>,
        bootstrap: Option<&Observation>,
        rng: &mut impl Rng,
    ) -> Option<BonusTarget> {
        match self {
            Worker::Tabular(_) => last.map(|(pos, action)| BonusTarget::Tabular { pos, action }),
            Worker::Sil(w) => {
                let bf = bootstrap.map(|b| b.features());
                w.finish(bf.as_deref(), rng).map(BonusTarget::Replay)
            }
        }
    }

    /// Delivers a delayed reward to the final transition of a past trajectory.
    pub fn apply_bonus(&mut self, target: BonusTarget, bonus: f64) {
        match (self, target) {
            (Worker::Tabular(w), BonusTarget::Tabular { pos, action }) => w.add_reward(pos, action, bonus),
            (Worker::Sil(w), BonusTarget::Replay(span)) => w.amend(span, bonus),
            _ => log::warn!("bonus target does not match worker type; ignored"),
        }
    }

    /// Learns from a trajectory generated by another option, given as
    /// `(state, action, reward, next)` with `next = None` for the terminal step.
    pub fn learn_offline(&mut self, steps: &[(Observation, Action, f64, Option<Observation>)]) {
        match self {
            Worker::Tabular(w) => {
                for (s, a, r, n) in steps {
                    w.update(s.pos, *a, *r, n.map(|n| n.pos));
                }
            }
            Worker::Sil(w) => {
                let pairs: Vec<(Vec<f64>, usize)> = steps.iter().map(|(s, a, _, _)| (s.features(), a.index())).collect();
                let rewards: Vec<f64> = steps.iter().map(|(_, _, r, _)| *r).collect();
                w.push_trajectory(&pairs, &rewards);
            }
        }
    }

    pub fn clear_replay(&mut self) {
        if let Worker::Sil(w) = self {
            w.clear_replay();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_scale_positions_and_encode_inventory() {
        let obs = Observation { pos: Pos::new(9, 0), inventory: Some(Inventory::EMPTY.with(Inventory::DOOR)), extent: (19, 19) };
        assert_eq!(obs.features(), vec![0.5, 0.0, 0.0, 1.0, 0.0]);
        let plain = Observation { inventory: None, ..obs };
        assert_eq!(plain.features().len(), Observation::width(false));
    }
}
