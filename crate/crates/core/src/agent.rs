//! The hierarchical agent: grows the region graph while a manager learns to
//! sequence navigation, exploration and task options.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compression::{CompressionError, CompressionSpec, Compressor, RegionId};
use crate::env::{EnvError, GridEnv, GridState, LayoutId};
use crate::graph::{GraphError, RegionGraph};
use crate::manager::{Manager, ManagerConfig, ManagerError, SmdpState, TaskRegistry};
use crate::options::{
    run_option, Cause, ControllabilityTracker, MaturedBonus, OptionConfig, OptionContext, OptionError, OptionId,
    OptionOutcome, WorkerAccess,
};
use crate::persist::{self, PersistError};
use crate::workers::{Observation, Worker, WorkerConfig};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Option(#[from] OptionError),
    #[error(transparent)]
    Manager(#[from] ManagerError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Compression(#[from] CompressionError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HrlConfig {
    pub worker: WorkerConfig,
    pub options: OptionConfig,
    pub manager: ManagerConfig,
    /// Deferred controllability bonus on successful navigations.
    pub controllability: bool,
    /// Options observed before a controllability bonus matures.
    pub horizon: u32,
}

impl Default for HrlConfig {
    fn default() -> Self {
        Self {
            worker: WorkerConfig::default(),
            options: OptionConfig::default(),
            manager: ManagerConfig::default(),
            controllability: false,
            horizon: 10,
        }
    }
}

/// One line of the option event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionEvent {
    pub episode: u64,
    /// Training steps taken when the event happened.
    pub step: u64,
    /// `option` for a completed option, `bonus` for a matured controllability bonus.
    pub event: String,
    pub option: String,
    pub cause: String,
    /// Target reached alive; always false for bonus events.
    pub success: bool,
    pub duration: u32,
    pub worker_reward: f64,
    pub task_reward: f64,
    pub rho: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub steps: u32,
    pub task_return: f64,
    pub success: bool,
    pub deaths: u32,
    pub region_transitions: u32,
    pub options: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HrlAgent {
    cfg: HrlConfig,
    compression: CompressionSpec,
    graph: RegionGraph,
    registry: TaskRegistry,
    manager: Manager,
    steps: u64,
    episodes: u64,
    /// Step count at which the manager's exploration schedule starts.
    schedule_origin: u64,
    #[serde(skip)]
    events: Option<Vec<OptionEvent>>,
}

const FILE_KIND: &str = "hrl-agent";

fn worker_for<'a>(graph: &'a mut RegionGraph, registry: &'a mut TaskRegistry, o: OptionId) -> Option<&'a mut Worker> {
    match o {
        OptionId::Explore(_) => None,
        OptionId::Navigate { from, to } => graph.edge_mut(from, to).map(|e| &mut e.worker),
        OptionId::Task { region, from, to } => registry.worker_mut(region, from, to),
    }
}

impl HrlAgent {
    pub fn new(cfg: HrlConfig, compression: CompressionSpec) -> Result<Self, AgentError> {
        compression.validate()?;
        Ok(Self {
            manager: Manager::new(cfg.manager),
            cfg,
            compression,
            graph: RegionGraph::new(),
            registry: TaskRegistry::new(),
            steps: 0,
            episodes: 0,
            schedule_origin: 0,
            events: None,
        })
    }

    /// Agent with the default region size for `layout`.
    pub fn for_layout(cfg: HrlConfig, layout: LayoutId) -> Result<Self, AgentError> {
        Self::new(cfg, CompressionSpec::for_layout(layout))
    }

    pub fn config(&self) -> &HrlConfig {
        &self.cfg
    }

    pub fn compression(&self) -> &CompressionSpec {
        &self.compression
    }

    pub fn graph(&self) -> &RegionGraph {
        &self.graph
    }

    pub fn registry(&self) -> &TaskRegistry {
        &self.registry
    }

    pub fn manager(&self) -> &Manager {
        &self.manager
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Exploration, navigation and task options available in `s`.
    pub fn admissible(&self, s: SmdpState) -> Vec<OptionId> {
        let mut out = self.graph.options(s.region);
        out.extend(self.registry.options(s.region, s.task));
        out
    }

    pub fn option_count(&self) -> usize {
        self.graph.region_count() + self.graph.edge_count() + self.registry.option_count()
    }

    pub fn set_event_logging(&mut self, on: bool) {
        self.events = on.then(Vec::new);
    }

    pub fn take_events(&mut self) -> Vec<OptionEvent> {
        self.events.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn compressor(&self, env: &GridEnv) -> Compressor {
        Compressor::new(self.compression, env.layout()).expect("validated at construction")
    }

    fn log(&mut self, e: OptionEvent) {
        if let Some(events) = self.events.as_mut() {
            events.push(e);
        }
    }

    fn deliver(&mut self, bonuses: Vec<MaturedBonus>) {
        for b in bonuses {
            if let (Some(target), Some(w)) = (b.target, worker_for(&mut self.graph, &mut self.registry, b.option)) {
                w.apply_bonus(target, b.rho);
            }
            self.log(OptionEvent {
                episode: self.episodes,
                step: self.steps,
                event: "bonus".into(),
                option: b.option.to_string(),
                cause: String::new(),
                success: false,
                duration: 0,
                worker_reward: 0.0,
                task_reward: 0.0,
                rho: Some(b.rho),
            });
        }
    }

    /// Trains for one episode. No new option is started once the agent's step
    /// count reaches `step_cap`; `schedule_len` is the step count over which
    /// the manager's exploration rate decays, counted from the last transfer
    /// reset. `on_option` is called after every
    /// option with the agent.
    pub fn train_episode(
        &mut self,
        env: &GridEnv,
        schedule_len: u64,
        step_cap: u64,
        rng: &mut impl Rng,
        mut on_option: impl FnMut(&Self),
    ) -> Result<EpisodeStats, AgentError> {
        let comp = self.compressor(env);
        let cfg = self.cfg;
        let mut tracker = ControllabilityTracker::new(cfg.horizon);
        let mut stats = EpisodeStats::default();
        let mut s = env.reset();
        let mut z = comp.region(s.pos);
        self.graph.add_region(z);
        self.registry.add_state(s.inventory);

        while !env.is_terminal(&s) && self.steps < step_cap {
            let st = SmdpState::new(z, s.inventory);
            let admissible = self.admissible(st);
            let progress = (self.steps - self.schedule_origin) as f64 / schedule_len.max(1) as f64;
            let eps = self.manager.epsilon(progress);
            let o = self.manager.get_option(st, &admissible, eps, rng)?;
            let ctx = OptionContext { env, compressor: &comp, cfg: &cfg.options, gamma: cfg.manager.gamma };
            let worker = worker_for(&mut self.graph, &mut self.registry, o).map(WorkerAccess::Learning);
            let out = run_option(&ctx, s, o, worker, false, rng)?;
            self.steps += out.duration as u64;

            if let OptionId::Navigate { from, to } = o {
                self.graph.record_option_outcome(from, to, out.success)?;
                if cfg.options.relabel_failures && out.cause == Cause::WrongNeighbor && out.final_state.alive {
                    self.relabel(&ctx, &out, from);
                }
            }

            let (s2, z2) = (out.final_state, out.final_region);
            let next = SmdpState::new(z2, s2.inventory);
            let next_admissible = self.admissible(next);
            self.manager.update(st, o, out.discounted_reward, out.duration, next, &next_admissible, out.env_terminal)?;

            if z2 != z {
                let wc = cfg.worker;
                self.graph.observe_transition(z, z2, || wc.build(false, rng))?;
                stats.region_transitions += 1;
            }
            if s2.inventory != s.inventory {
                let wc = cfg.worker;
                self.registry.observe_task_change(z2, s.inventory, s2.inventory, || wc.build(true, rng));
            }

            self.log(OptionEvent {
                episode: self.episodes,
                step: self.steps,
                event: "option".into(),
                option: o.to_string(),
                cause: out.cause.label().to_string(),
                success: out.success,
                duration: out.duration,
                worker_reward: out.final_option_reward,
                task_reward: out.task_reward,
                rho: None,
            });
            if cfg.controllability {
                let matured = tracker.record_completion(out.success);
                self.deliver(matured);
                if out.success && matches!(o, OptionId::Navigate { .. }) {
                    tracker.push(o, out.bonus_target);
                }
            }

            stats.steps += out.duration;
            stats.options += 1;
            stats.task_return += out.task_reward;
            stats.deaths += u32::from(!s2.alive);
            stats.success = env.is_complete(&s2);
            s = s2;
            z = z2;
            on_option(self);
        }
        if cfg.controllability {
            let rest = tracker.flush();
            self.deliver(rest);
        }
        self.episodes += 1;
        Ok(stats)
    }

    /// Feeds a wrong-neighbor exit to the option that targets that neighbor, as
    /// if it had been executed by that option and succeeded.
    fn relabel(&mut self, ctx: &OptionContext, out: &OptionOutcome, from: RegionId) {
        let to = out.final_region;
        let Some(edge) = self.graph.edge_mut(from, to) else { return };
        let relabeled = OptionId::Navigate { from, to };
        let n = out.trajectory.len();
        let steps: Vec<(Observation, crate::env::Action, f64, Option<Observation>)> = out
            .trajectory
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let last = i + 1 == n;
                let obs = ctx.observation(&relabeled, &t.state);
                let next = (!last).then(|| ctx.observation(&relabeled, &t.next_state));
                (obs, t.action, if last { ctx.cfg.success_reward } else { 0.0 }, next)
            })
            .collect();
        edge.worker.learn_offline(&steps);
    }

    /// Runs one greedy episode without learning and without growing the graph.
    pub fn run_greedy_episode(&self, env: &GridEnv, rng: &mut impl Rng) -> Result<EpisodeStats, AgentError> {
        let comp = self.compressor(env);
        let mut stats = EpisodeStats::default();
        let mut s: GridState = env.reset();
        while !env.is_terminal(&s) {
            let z = comp.region(s.pos);
            let st = SmdpState::new(z, s.inventory);
            let o = if self.graph.contains(z) {
                self.manager.get_option(st, &self.admissible(st), 0.0, rng)?
            } else {
                OptionId::Explore(z)
            };
            let worker = match o {
                OptionId::Explore(_) => None,
                OptionId::Navigate { from, to } => self.graph.edge(from, to).map(|e| &e.worker),
                OptionId::Task { region, from, to } => self.registry.worker(region, from, to),
            };
            let ctx = OptionContext { env, compressor: &comp, cfg: &self.cfg.options, gamma: self.cfg.manager.gamma };
            let out = run_option(&ctx, s, o, worker.map(WorkerAccess::Frozen), true, rng)?;
            stats.steps += out.duration;
            stats.options += 1;
            stats.task_return += out.task_reward;
            stats.deaths += u32::from(!out.final_state.alive);
            stats.region_transitions += u32::from(out.final_region != z);
            stats.success = env.is_complete(&out.final_state);
            s = out.final_state;
        }
        Ok(stats)
    }

    /// Keeps the region graph and navigation workers; forgets the manager's
    /// values and all task-specific options. The exploration schedule restarts.
    pub fn reset_for_transfer(&mut self) {
        self.manager.reset_for_transfer();
        self.schedule_origin = self.steps;
        self.registry.clear();
    }

    /// Clears the replay buffers of all self-imitation workers.
    pub fn clear_replays(&mut self) {
        for (_, _, e) in self.graph.edges_mut() {
            e.worker.clear_replay();
        }
        for w in self.registry.workers_mut() {
            w.clear_replay();
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        persist::save(FILE_KIND, self, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let agent: Self = persist::load(FILE_KIND, path)?;
        agent.compression.validate()?;
        Ok(agent)
    }
}
