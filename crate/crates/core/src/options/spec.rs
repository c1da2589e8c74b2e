//! Option identities and the option-MDP reward.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::compression::RegionId;
use crate::env::{GridState, Inventory};

/// An option is identified by its initiation region and its target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptionId {
    /// Random exploration until the region or task state changes.
    Explore(RegionId),
    /// Move from region `from` into the neighboring region `to`.
    Navigate { from: RegionId, to: RegionId },
    /// Change the task state from `from` to `to` without leaving `region`.
    Task { region: RegionId, from: Inventory, to: Inventory },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptionKind {
    Explore,
    Navigate,
    Task,
}

impl OptionId {
    /// Initiation region.
    pub fn region(&self) -> RegionId {
        match *self {
            OptionId::Explore(z) => z,
            OptionId::Navigate { from, .. } => from,
            OptionId::Task { region, .. } => region,
        }
    }

    pub fn kind(&self) -> OptionKind {
        match self {
            OptionId::Explore(_) => OptionKind::Explore,
            OptionId::Navigate { .. } => OptionKind::Navigate,
            OptionId::Task { .. } => OptionKind::Task,
        }
    }

    /// Whether the option runs a learned worker (exploration does not).
    pub fn has_worker(&self) -> bool {
        !matches!(self, OptionId::Explore(_))
    }
}

impl fmt::Display for OptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptionId::Explore(z) => write!(f, "explore({z})"),
            OptionId::Navigate { from, to } => write!(f, "nav({from}->{to})"),
            OptionId::Task { region, from, to } => write!(f, "task({region}:{from}->{to})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptionConfig {
    /// Step limit of navigate and task options.
    pub step_limit: u32,
    pub success_reward: f64,
    pub failure_reward: f64,
    /// Reuse a wrong-neighbor exit as training data for the option that
    /// targets that neighbor.
    pub relabel_failures: bool,
}

impl Default for OptionConfig {
    fn default() -> Self {
        Self { step_limit: 100, success_reward: 0.8, failure_reward: -0.1, relabel_failures: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cause {
    ReachedTarget,
    /// Left the initiation region somewhere other than the target.
    WrongNeighbor,
    Timeout,
    TaskStateChange,
    EnvTerminal,
}

impl Cause {
    pub fn label(self) -> &'static str {
        match self {
            Cause::ReachedTarget => "reached-target",
            Cause::WrongNeighbor => "wrong-neighbor",
            Cause::Timeout => "timeout",
            Cause::TaskStateChange => "task-state-change",
            Cause::EnvTerminal => "env-terminal",
        }
    }
}

/// Reward and termination decision for one step of an option.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepJudgement {
    pub reward: f64,
    /// Set when the option ends after this step.
    pub end: Option<Cause>,
    /// The option MDP reached a terminal state (false when the episode was
    /// merely cut off by the step budget).
    pub worker_terminal: bool,
    /// The option's target condition holds after the step.
    pub reached: bool,
}

/// Option-MDP reward for the step `prev -> next`, where `next` lies in region
/// `next_region`. `steps` counts the option's steps including this one and
/// `env_terminal` reports whether the episode ended.
pub fn option_reward(
    option: &OptionId,
    cfg: &OptionConfig,
    next_region: RegionId,
    prev: &GridState,
    next: &GridState,
    env_terminal: bool,
    steps: u32,
) -> StepJudgement {
    let left = next_region != option.region();
    let changed = next.inventory != prev.inventory;
    let died = !next.alive;
    let reached = match *option {
        OptionId::Explore(_) => false,
        OptionId::Navigate { to, .. } => next_region == to,
        OptionId::Task { to, .. } => !left && next.inventory == to,
    };
    let over = |cause: Cause| if env_terminal { Cause::EnvTerminal } else { cause };
    let judge = |reward: f64, cause: Cause| StepJudgement {
        reward,
        end: Some(over(cause)),
        worker_terminal: true,
        reached,
    };

    if let OptionId::Explore(_) = option {
        let end = if left {
            Some(over(Cause::WrongNeighbor))
        } else if changed {
            Some(over(Cause::TaskStateChange))
        } else if env_terminal {
            Some(Cause::EnvTerminal)
        } else {
            None
        };
        return StepJudgement { reward: 0.0, end, worker_terminal: end.is_some(), reached: false };
    }

    if reached {
        judge(cfg.success_reward, Cause::ReachedTarget)
    } else if left {
        judge(cfg.failure_reward, Cause::WrongNeighbor)
    } else if changed {
        judge(cfg.failure_reward, Cause::TaskStateChange)
    } else if died {
        judge(cfg.failure_reward, Cause::EnvTerminal)
    } else if steps >= cfg.step_limit {
        judge(cfg.failure_reward, Cause::Timeout)
    } else if env_terminal {
        StepJudgement { reward: 0.0, end: Some(Cause::EnvTerminal), worker_terminal: false, reached: false }
    } else {
        StepJudgement { reward: 0.0, end: None, worker_terminal: false, reached: false }
    }
}
