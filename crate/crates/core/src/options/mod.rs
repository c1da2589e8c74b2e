//! Options over regions: identities, rewards, execution and controllability credit.

pub mod controllability;
pub mod runtime;
pub mod spec;

use thiserror::Error;

use crate::env::EnvError;

pub use controllability::{ControllabilityTracker, MaturedBonus};
pub use runtime::{exploration_policy, run_option, OptionContext, OptionOutcome, WorkerAccess};
pub use spec::{option_reward, Cause, OptionConfig, OptionId, OptionKind, StepJudgement};

#[derive(Debug, Error)]
pub enum OptionError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}
