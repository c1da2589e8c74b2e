//! Training loops with periodic greedy evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AgentLabel, ExperimentId, RunConfig};
use super::HarnessError;
use crate::agent::{AgentError, EpisodeStats, HrlAgent, OptionEvent};
use crate::baselines::FlatAgent;
use crate::compression::CompressionSpec;
use crate::persist::{self, PersistError};
use crate::env::{generate_task, mirror_task, strip_treasure, EnvConfig, GridEnv, LayoutId, RewardMode};

const FLAT_FILE_KIND: &str = "flat-agent";

/// A trained or training agent of either family.
#[derive(Clone, Debug, PartialEq)]
pub enum Learner {
    Hrl(Box<HrlAgent>),
    Flat(Box<FlatAgent>),
}

impl Learner {
    pub fn new(label: AgentLabel, cfg: &RunConfig, layout: LayoutId, rng: &mut ChaCha8Rng) -> Result<Self, HarnessError> {
        if label.is_hierarchical() {
            let compression = cfg.compression.unwrap_or_else(|| CompressionSpec::for_layout(layout));
            let mut agent = HrlAgent::new(label.hrl_config(&cfg.hrl), compression)?;
            agent.set_event_logging(cfg.log_events);
            Ok(Learner::Hrl(Box::new(agent)))
        } else {
            Ok(Learner::Flat(Box::new(FlatAgent::new(label.flat_config(&cfg.flat, cfg.bonus_beta), rng))))
        }
    }

    /// Reads an agent saved by either family.
    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        match HrlAgent::load(path) {
            Ok(a) => Ok(Learner::Hrl(Box::new(a))),
            Err(AgentError::Persist(PersistError::Corrupt { .. })) => {
                Ok(Learner::Flat(Box::new(persist::load(FLAT_FILE_KIND, path)?)))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), HarnessError> {
        match self {
            Learner::Hrl(a) => a.save(path)?,
            Learner::Flat(a) => persist::save(FLAT_FILE_KIND, a.as_ref(), path)?,
        }
        Ok(())
    }

    pub fn view(&self) -> LearnerRef<'_> {
        match self {
            Learner::Hrl(a) => LearnerRef::Hrl(a),
            Learner::Flat(a) => LearnerRef::Flat(a),
        }
    }

    pub fn steps(&self) -> u64 {
        self.view().steps()
    }

    /// Prepares a transferring agent for the next task.
    pub fn start_next_task(&mut self) {
        match self {
            Learner::Hrl(a) => {
                a.reset_for_transfer();
                a.clear_replays();
            }
            Learner::Flat(a) => a.clear_replay(),
        }
    }
}

/// Borrowed view of a learner.
#[derive(Clone, Copy, Debug)]
pub enum LearnerRef<'a> {
    Hrl(&'a HrlAgent),
    Flat(&'a FlatAgent),
}

impl LearnerRef<'_> {
    pub fn steps(&self) -> u64 {
        match self {
            LearnerRef::Hrl(a) => a.steps(),
            LearnerRef::Flat(a) => a.steps(),
        }
    }

    pub fn episodes(&self) -> u64 {
        match self {
            LearnerRef::Hrl(a) => a.episodes(),
            LearnerRef::Flat(a) => a.episodes(),
        }
    }

    pub fn regions(&self) -> usize {
        match self {
            LearnerRef::Hrl(a) => a.graph().region_count(),
            LearnerRef::Flat(_) => 0,
        }
    }

    pub fn options(&self) -> usize {
        match self {
            LearnerRef::Hrl(a) => a.option_count(),
            LearnerRef::Flat(_) => 0,
        }
    }

    pub fn greedy_episode(&self, env: &GridEnv, rng: &mut ChaCha8Rng) -> Result<EpisodeStats, HarnessError> {
        Ok(match self {
            LearnerRef::Hrl(a) => a.run_greedy_episode(env, rng)?,
            LearnerRef::Flat(a) => a.run_greedy_episode(env, rng)?,
        })
    }
}

/// Summary of a batch of greedy episodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_return: f64,
    pub std_return: f64,
    pub success_rate: f64,
    pub deaths_per_episode: f64,
    /// Deaths per region transition; absent when no transition was seen.
    pub death_rate: Option<f64>,
}

/// Runs `episodes` greedy episodes. The learner is not modified.
pub fn evaluate(learner: LearnerRef, env: &GridEnv, episodes: u32, rng: &mut ChaCha8Rng) -> Result<Evaluation, HarnessError> {
    let mut returns = Vec::with_capacity(episodes as usize);
    let (mut successes, mut deaths, mut transitions) = (0u32, 0u32, 0u32);
    for _ in 0..episodes.max(1) {
        let s = learner.greedy_episode(env, rng)?;
        returns.push(s.task_return);
        successes += u32::from(s.success);
        deaths += s.deaths;
        transitions += s.region_transitions;
    }
    let n = returns.len() as f64;
    let (mean_return, std_return) = mean_std(&returns);
    Ok(Evaluation {
        mean_return,
        std_return,
        success_rate: successes as f64 / n,
        deaths_per_episode: deaths as f64 / n,
        death_rate: (transitions > 0).then(|| deaths as f64 / transitions as f64),
    })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One evaluation point of a learning curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub agent: String,
    pub seed: u64,
    /// 1-based task index; always 1 outside the transfer experiment.
    pub task: u32,
    /// Nominal evaluation step within the task.
    pub step: u64,
    /// Nominal step counted over all tasks.
    pub global_step: u64,
    /// Environment steps the agent had actually taken in this task.
    pub agent_steps: u64,
    /// Training episodes finished in this task.
    pub episodes: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub success_rate: f64,
    pub deaths_per_episode: f64,
    pub death_rate: Option<f64>,
    pub regions: usize,
    pub options: usize,
}

/// Success statistics of one navigation edge at an evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub task: u32,
    pub step: u64,
    pub from: u32,
    pub to: u32,
    pub attempts: u64,
    pub successes: u64,
    pub success_rate: Option<f64>,
}

/// Option event tagged with its task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub task: u32,
    pub episode: u64,
    pub step: u64,
    pub event: String,
    pub option: String,
    pub cause: String,
    pub success: bool,
    pub duration: u32,
    pub worker_reward: f64,
    pub task_reward: f64,
    pub rho: Option<f64>,
}

impl EventRow {
    fn new(task: u32, e: OptionEvent) -> Self {
        Self {
            task,
            episode: e.episode,
            step: e.step,
            event: e.event,
            option: e.option,
            cause: e.cause,
            success: e.success,
            duration: e.duration,
            worker_reward: e.worker_reward,
            task_reward: e.task_reward,
            rho: e.rho,
        }
    }
}

/// Everything recorded for one (agent, seed) run.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub agent: AgentLabel,
    pub seed: u64,
    pub rows: Vec<CurveRow>,
    pub edges: Vec<EdgeRow>,
    pub events: Vec<EventRow>,
    /// Final agent of every task (a single entry when the agent is carried over).
    pub learners: Vec<Learner>,
}

/// Environment configurations of the experiment's tasks, in order.
pub fn task_envs(cfg: &RunConfig, mode: RewardMode, seed: u64) -> Result<Vec<EnvConfig>, HarnessError> {
    let mut tasks = match cfg.experiment {
        ExperimentId::ExplorationKdt1 => vec![EnvConfig::kdt1().with_reward_mode(mode)],
        ExperimentId::ExplorationKdt2 => vec![EnvConfig::kdt2().with_reward_mode(mode)],
        ExperimentId::Controllability => vec![EnvConfig::hazard().with_reward_mode(mode)],
        ExperimentId::Transfer => {
            let base = EnvConfig::kdt1().with_reward_mode(mode);
            let first = strip_treasure(&generate_task(&base, task_seed(seed, 1))?)?;
            let second = generate_task(&base, task_seed(seed, 2))?;
            let third = mirror_task(&second)?;
            vec![first, second, third]
        }
    };
    if let Some(noise) = cfg.noise {
        for t in &mut tasks {
            *t = t.clone().with_noise(noise);
        }
    }
    Ok(tasks)
}

fn task_seed(seed: u64, task: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ task.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Seed of the evaluation RNG at evaluation point `point` of `task`.
pub fn eval_seed(seed: u64, task: u32, point: usize) -> u64 {
    task_seed(seed, u64::from(task)) ^ (point as u64).wrapping_mul(0x94D0_49BB_1331_11EB) ^ 0xE7A1
}

/// Nominal evaluation steps of a task: every `interval` steps from 0, plus the
/// budget itself.
pub fn eval_points(budget: u64, interval: u64) -> Vec<u64> {
    let mut pts: Vec<u64> = (0..=budget / interval).map(|k| k * interval).collect();
    if pts.last() != Some(&budget) {
        pts.push(budget);
    }
    pts
}

struct TaskRecorder<'a> {
    cfg: &'a RunConfig,
    label: String,
    seed: u64,
    task: u32,
    env: &'a GridEnv,
    points: Vec<u64>,
    next: usize,
    start_steps: u64,
    start_episodes: u64,
    rows: Vec<CurveRow>,
    edges: Vec<EdgeRow>,
}

impl TaskRecorder<'_> {
    /// Evaluates every point the learner has passed since the last call.
    fn catch_up(&mut self, learner: LearnerRef) -> Result<(), HarnessError> {
        let done = learner.steps() - self.start_steps;
        while self.next < self.points.len() && self.points[self.next] <= done {
            let step = self.points[self.next];
            let mut rng = ChaCha8Rng::seed_from_u64(eval_seed(self.seed, self.task, self.next));
            let ev = evaluate(learner, self.env, self.cfg.eval_episodes, &mut rng)?;
            self.rows.push(CurveRow {
                agent: self.label.clone(),
                seed: self.seed,
                task: self.task,
                step,
                global_step: u64::from(self.task - 1) * self.cfg.steps + step,
                agent_steps: done,
                episodes: learner.episodes() - self.start_episodes,
                mean_return: ev.mean_return,
                std_return: ev.std_return,
                success_rate: ev.success_rate,
                deaths_per_episode: ev.deaths_per_episode,
                death_rate: ev.death_rate,
                regions: learner.regions(),
                options: learner.options(),
            });
            if let LearnerRef::Hrl(a) = learner {
                for (from, to, o) in a.graph().edges() {
                    self.edges.push(EdgeRow {
                        task: self.task,
                        step,
                        from,
                        to,
                        attempts: o.stats.attempts,
                        successes: o.stats.successes,
                        success_rate: o.stats.success_rate(),
                    });
                }
            }
            self.next += 1;
        }
        Ok(())
    }
}

/// Trains `learner` for `cfg.steps` environment steps on `env`, evaluating at
/// every evaluation point. Returns curve and edge rows.
fn train_task(
    cfg: &RunConfig,
    label: AgentLabel,
    seed: u64,
    task: u32,
    learner: &mut Learner,
    env: &GridEnv,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<CurveRow>, Vec<EdgeRow>), HarnessError> {
    let mut rec = TaskRecorder {
        cfg,
        label: label.to_string(),
        seed,
        task,
        env,
        points: eval_points(cfg.steps, cfg.eval_interval),
        next: 0,
        start_steps: learner.steps(),
        start_episodes: learner.view().episodes(),
        rows: Vec::new(),
        edges: Vec::new(),
    };
    rec.catch_up(learner.view())?;
    let cap = rec.start_steps + cfg.steps;
    match learner {
        Learner::Hrl(agent) => {
            let mut failure = None;
            while agent.steps() < cap && failure.is_none() {
                agent.train_episode(env, cfg.steps, cap, rng, |a| {
                    if failure.is_none() {
                        if let Err(e) = rec.catch_up(LearnerRef::Hrl(a)) {
                            failure = Some(e);
                        }
                    }
                })?;
            }
            if let Some(e) = failure {
                return Err(e);
            }
        }
        Learner::Flat(agent) => {
            while agent.steps() < cap {
                agent.train_iteration(env, rng)?;
                rec.catch_up(LearnerRef::Flat(agent))?;
            }
        }
    }
    rec.catch_up(learner.view())?;
    Ok((rec.rows, rec.edges))
}

/// Runs one agent on one seed through all tasks of the experiment.
pub fn run_seed(cfg: &RunConfig, label: AgentLabel, mode: RewardMode, seed: u64) -> Result<SeedRun, HarnessError> {
    let tasks = task_envs(cfg, mode, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = SeedRun { agent: label, seed, rows: Vec::new(), edges: Vec::new(), events: Vec::new(), learners: Vec::new() };
    let mut learner: Option<Learner> = None;
    for (i, env_cfg) in tasks.iter().enumerate() {
        let task = i as u32 + 1;
        let env = GridEnv::new(env_cfg)?;
        let mut current = match learner.take() {
            Some(mut l) if !label.no_transfer => {
                l.start_next_task();
                l
            }
            Some(l) => {
                run.learners.push(l);
                Learner::new(label, cfg, env_cfg.layout, &mut rng)?
            }
            None => Learner::new(label, cfg, env_cfg.layout, &mut rng)?,
        };
        let (rows, edges) = train_task(cfg, label, seed, task, &mut current, &env, &mut rng)?;
        run.rows.extend(rows);
        run.edges.extend(edges);
        if let Learner::Hrl(a) = &mut current {
            run.events.extend(a.take_events().into_iter().map(|e| EventRow::new(task, e)));
        }
        learner = Some(current);
    }
    run.learners.extend(learner);
    Ok(run)
}
