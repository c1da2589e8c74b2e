//! Executing one option in the environment.

use rand::Rng;

use super::spec::{option_reward, Cause, OptionConfig, OptionId};
use super::OptionError;
use crate::compression::{Compressor, RegionId};
use crate::env::{Action, GridEnv, GridState, Transition};
use crate::workers::{BonusTarget, Observation, Worker};

#[derive(Clone, Debug, PartialEq)]
pub struct OptionOutcome {
    pub option: OptionId,
    pub final_state: GridState,
    pub final_region: RegionId,
    pub cause: Cause,
    /// Primitive steps taken.
    pub duration: u32,
    /// `Σ γ^i r_i` over the task rewards collected during the option.
    pub discounted_reward: f64,
    /// Undiscounted task reward.
    pub task_reward: f64,
    /// Option-MDP reward of the final step.
    pub final_option_reward: f64,
    /// Target reached and agent still alive.
    pub success: bool,
    pub env_terminal: bool,
    pub trajectory: Vec<Transition>,
    /// Where a delayed bonus for this run can be delivered (learning runs only).
    pub bonus_target: Option<BonusTarget>,
}

/// Everything `run_option` needs besides the option itself.
#[derive(Clone, Copy, Debug)]
pub struct OptionContext<'a> {
    pub env: &'a GridEnv,
    pub compressor: &'a Compressor,
    pub cfg: &'a OptionConfig,
    pub gamma: f64,
}

impl OptionContext<'_> {
    pub fn observation(&self, option: &OptionId, state: &GridState) -> Observation {
        let layout = self.env.layout();
        let inventory = matches!(option, OptionId::Task { .. }).then_some(state.inventory);
        Observation { pos: state.pos, inventory, extent: (layout.width(), layout.height()) }
    }
}

/// Uniform random primitive action; the policy of exploration options.
pub fn exploration_policy(rng: &mut impl Rng) -> Action {
    Action::random(rng)
}

/// How the option's worker takes part in a run.
#[derive(Debug)]
pub enum WorkerAccess<'a> {
    /// Acts only.
    Frozen(&'a Worker),
    /// Acts and learns from every transition.
    Learning(&'a mut Worker),
}

impl WorkerAccess<'_> {
    fn get(&self) -> &Worker {
        match self {
            WorkerAccess::Frozen(w) => w,
            WorkerAccess::Learning(w) => w,
        }
    }
}

/// Runs `option` from `start` until it terminates.
///
/// The worker is queried for every action and, when learning, fed each
/// option-MDP transition. Exits are passed as terminal transitions without
/// their destination. `greedy` selects the worker's greedy action.
pub fn run_option(
    ctx: &OptionContext,
    start: GridState,
    option: OptionId,
    mut worker: Option<WorkerAccess>,
    greedy: bool,
    rng: &mut impl Rng,
) -> Result<OptionOutcome, OptionError> {
    let z = ctx.compressor.region(start.pos);
    if z != option.region() {
        return Err(OptionError::Usage(format!("{option} started in region {z}")));
    }
    if ctx.env.is_terminal(&start) {
        return Err(OptionError::Usage("option started from a terminal state".into()));
    }
    if option.has_worker() && worker.is_none() {
        return Err(OptionError::Usage(format!("{option} needs a worker")));
    }

    let mut s = start;
    let mut trajectory = Vec::new();
    let mut discounted = 0.0;
    let mut raw = 0.0;
    let mut discount = 1.0;
    loop {
        let obs = ctx.observation(&option, &s);
        let action = match &worker {
            Some(w) => w.get().act(&obs, greedy, rng),
            None => exploration_policy(rng),
        };
        let tr = ctx.env.step(&s, action, rng)?;
        let next_region = ctx.compressor.region(tr.next_state.pos);
        discounted += discount * tr.reward;
        raw += tr.reward;
        discount *= ctx.gamma;
        let steps = trajectory.len() as u32 + 1;
        let j = option_reward(&option, ctx.cfg, next_region, &s, &tr.next_state, tr.terminal, steps);

        if let Some(WorkerAccess::Learning(w)) = &mut worker {
            let next_obs = (!j.worker_terminal).then(|| ctx.observation(&option, &tr.next_state));
            w.observe(&obs, action, j.reward, next_obs.as_ref(), rng);
        }
        let last = Some((s.pos, action));
        trajectory.push(tr);
        s = tr.next_state;

        if let Some(cause) = j.end {
            let bonus_target = match worker {
                Some(WorkerAccess::Learning(w)) => {
                    let boot = (!j.worker_terminal).then(|| ctx.observation(&option, &s));
                    w.finish(last, boot.as_ref(), rng)
                }
                _ => None,
            };
            let success = match option {
                OptionId::Explore(_) => s.alive && matches!(cause, Cause::WrongNeighbor | Cause::TaskStateChange),
                _ => j.reached && s.alive,
            };
            return Ok(OptionOutcome {
                option,
                final_state: s,
                final_region: next_region,
                cause,
                duration: steps,
                discounted_reward: discounted,
                task_reward: raw,
                final_option_reward: j.reward,
                success,
                env_terminal: tr.terminal,
                trajectory,
                bonus_target,
            });
        }
    }
}
