//! Deferred controllability credit.
//!
//! After a successful navigation, the agent watches the next `horizon` option
//! completions. The fraction `ρ = N / M` that succeeded is then added to the
//! reward of the navigation's final transition.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::spec::OptionId;
use crate::workers::BonusTarget;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingRecord {
    pub option: OptionId,
    pub target: Option<BonusTarget>,
    /// Completions still to observe.
    pub remaining: u32,
    pub observed: u32,
    pub successes: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaturedBonus {
    pub option: OptionId,
    pub target: Option<BonusTarget>,
    pub rho: f64,
    /// Completions the coefficient was computed over.
    pub window: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityTracker {
    horizon: u32,
    pending: VecDeque<PendingRecord>,
}

impl ControllabilityTracker {
    pub fn new(horizon: u32) -> Self {
        assert!(horizon > 0, "controllability horizon must be positive");
        Self { horizon, pending: VecDeque::new() }
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingRecord> {
        self.pending.iter()
    }

    /// Counts one completed option against every pending record and returns
    /// the records whose window is now full.
    pub fn record_completion(&mut self, success: bool) -> Vec<MaturedBonus> {
        for r in &mut self.pending {
            r.remaining -= 1;
            r.observed += 1;
            if success {
                r.successes += 1;
            }
        }
        let mut matured = Vec::new();
        while self.pending.front().is_some_and(|r| r.remaining == 0) {
            let r = self.pending.pop_front().expect("checked");
            matured.push(Self::mature(&r));
        }
        matured
    }

    /// Starts a window for a successful option.
    pub fn push(&mut self, option: OptionId, target: Option<BonusTarget>) {
        self.pending.push_back(PendingRecord { option, target, remaining: self.horizon, observed: 0, successes: 0 });
    }

    /// Matures every open window over the completions seen so far.
    pub fn flush(&mut self) -> Vec<MaturedBonus> {
        self.pending.drain(..).map(|r| Self::mature(&r)).collect()
    }

    fn mature(r: &PendingRecord) -> MaturedBonus {
        let rho = if r.observed == 0 { 0.0 } else { r.successes as f64 / r.observed as f64 };
        MaturedBonus { option: r.option, target: r.target, rho, window: r.observed }
    }
}
