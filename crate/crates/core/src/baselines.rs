//! Flat self-imitation agents over the full task MDP, with and without a
//! count-based exploration bonus.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::EpisodeStats;
use crate::env::{Action, EnvError, GridEnv, GridState, Inventory, Pos};
use crate::serde_pairs;
use crate::workers::{discounted_returns, Observation, SilConfig, SilWorker};

/// `β / √N`. `visits` must already include the current visit.
pub fn exploration_bonus(visits: u64, beta: f64) -> f64 {
    if visits == 0 {
        return beta;
    }
    beta / (visits as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatConfig {
    pub sil: SilConfig,
    /// Environment copies stepped in lockstep; each update uses
    /// `n_envs × n_step` transitions.
    pub n_envs: usize,
    /// Count bonus scale; `None` trains on the task reward alone.
    pub bonus: Option<f64>,
}

impl Default for FlatConfig {
    fn default() -> Self {
        Self { sil: SilConfig { sil_updates: 4, ..SilConfig::default() }, n_envs: 8, bonus: None }
    }
}

impl FlatConfig {
    pub fn sil() -> Self {
        Self::default()
    }

    pub fn sil_exp() -> Self {
        Self { bonus: Some(0.2), ..Self::default() }
    }
}

type VisitKey = (Pos, Inventory);

#[derive(Clone, Debug, PartialEq)]
struct Stream {
    state: GridState,
    /// Observation, action and training reward of the episode so far.
    episode: Vec<(Vec<f64>, usize, f64)>,
    task_return: f64,
    deaths: u32,
}

/// Result of one synchronous update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Iteration {
    pub steps: u64,
    /// Episodes that ended during the iteration.
    pub finished: Vec<EpisodeStats>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlatAgent {
    cfg: FlatConfig,
    worker: SilWorker,
    #[serde(with = "serde_pairs")]
    visits: BTreeMap<VisitKey, u64>,
    steps: u64,
    episodes: u64,
    #[serde(skip)]
    streams: Vec<Stream>,
}

impl PartialEq for FlatAgent {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg
            && self.worker == other.worker
            && self.visits == other.visits
            && self.steps == other.steps
            && self.episodes == other.episodes
    }
}

fn observe(env: &GridEnv, s: &GridState) -> Vec<f64> {
    let l = env.layout();
    Observation { pos: s.pos, inventory: Some(s.inventory), extent: (l.width(), l.height()) }.features()
}

impl FlatAgent {
    pub fn new(cfg: FlatConfig, rng: &mut impl Rng) -> Self {
        Self {
            worker: SilWorker::new(cfg.sil, Observation::width(true), Action::ALL.len(), rng),
            cfg,
            visits: BTreeMap::new(),
            steps: 0,
            episodes: 0,
            streams: Vec::new(),
        }
    }

    pub fn config(&self) -> &FlatConfig {
        &self.cfg
    }

    pub fn worker(&self) -> &SilWorker {
        &self.worker
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn visits(&self, pos: Pos, inventory: Inventory) -> u64 {
        self.visits.get(&(pos, inventory)).copied().unwrap_or(0)
    }

    /// Drops the self-imitation memory and any unfinished episodes.
    pub fn clear_replay(&mut self) {
        self.worker.clear_replay();
        self.streams.clear();
    }

    /// Counts a visit to `s` and returns the bonus it earns.
    fn visit(&mut self, s: &GridState) -> f64 {
        let Some(beta) = self.cfg.bonus else { return 0.0 };
        let n = self.visits.entry((s.pos, s.inventory)).or_insert(0);
        *n += 1;
        exploration_bonus(*n, beta)
    }

    /// Steps every environment copy `n_step` times, then runs one
    /// actor-critic update on the pooled batch followed by self-imitation.
    /// Finished episodes go to the replay buffer with their Monte Carlo
    /// returns; bonuses count towards training returns only.
    pub fn train_iteration(&mut self, env: &GridEnv, rng: &mut impl Rng) -> Result<Iteration, EnvError> {
        let n_envs = self.cfg.n_envs.max(1);
        if self.streams.len() != n_envs {
            self.streams = (0..n_envs)
                .map(|_| Stream { state: env.reset(), episode: Vec::new(), task_return: 0.0, deaths: 0 })
                .collect();
        }
        let n_step = self.cfg.sil.n_step.max(1);
        let gamma = self.cfg.sil.gamma;
        let mut it = Iteration::default();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut actions = Vec::new();
        let mut returns = Vec::new();

        for e in 0..n_envs {
            let mut seg_obs = Vec::new();
            let mut seg_act = Vec::new();
            let mut seg_rew = Vec::new();
            let mut tail = None;
            for _ in 0..n_step {
                let s = self.streams[e].state;
                let obs = observe(env, &s);
                let a = self.worker.act(&obs, false, rng);
                let tr = env.step(&s, Action::from_index(a), rng)?;
                let r = tr.reward + self.visit(&tr.next_state);
                it.steps += 1;
                seg_obs.push(obs.clone());
                seg_act.push(a);
                seg_rew.push(r);
                let stream = &mut self.streams[e];
                stream.episode.push((obs, a, r));
                stream.task_return += tr.reward;
                stream.deaths += u32::from(!tr.next_state.alive);
                if tr.terminal {
                    tail = Some(0.0);
                    let done = std::mem::replace(
                        stream,
                        Stream { state: env.reset(), episode: Vec::new(), task_return: 0.0, deaths: 0 },
                    );
                    it.finished.push(EpisodeStats {
                        steps: done.episode.len() as u32,
                        task_return: done.task_return,
                        success: env.is_complete(&tr.next_state),
                        deaths: done.deaths,
                        ..EpisodeStats::default()
                    });
                    let (steps, rewards): (Vec<_>, Vec<_>) =
                        done.episode.into_iter().map(|(o, a, r)| ((o, a), r)).unzip();
                    self.worker.push_trajectory(&steps, &rewards);
                    self.episodes += 1;
                    break;
                }
                stream.state = tr.next_state;
            }
            let tail = tail.unwrap_or_else(|| self.worker.value(&observe(env, &self.streams[e].state)));
            returns.extend(discounted_returns(&seg_rew, gamma, tail));
            rows.extend(seg_obs);
            actions.extend(seg_act);
        }

        let width = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let obs = Array2::from_shape_vec((actions.len(), width), flat).expect("rows share one width");
        self.worker.a2c_update(obs.view(), &actions, &returns).expect("batch is well formed");
        self.worker.sil_train(rng);
        self.steps += it.steps;
        Ok(it)
    }

    /// One episode with the most likely action at every step; no learning.
    pub fn run_greedy_episode(&self, env: &GridEnv, rng: &mut impl Rng) -> Result<EpisodeStats, EnvError> {
        let mut stats = EpisodeStats::default();
        let mut s = env.reset();
        while !env.is_terminal(&s) {
            let a = self.worker.act(&observe(env, &s), true, rng);
            let tr = env.step(&s, Action::from_index(a), rng)?;
            stats.steps += 1;
            stats.task_return += tr.reward;
            stats.deaths += u32::from(!tr.next_state.alive);
            s = tr.next_state;
        }
        stats.success = env.is_complete(&s);
        Ok(stats)
    }
}
