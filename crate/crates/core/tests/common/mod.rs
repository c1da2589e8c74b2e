//! Independent oracles and the checks built on them. Shared by the focused
//! integration tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hrl_core::agent::{HrlAgent, HrlConfig};
use hrl_core::compression::{CompressionSpec, Compressor, RegionId};
use hrl_core::env::{Action, EnvConfig, GridEnv, GridState, Inventory, LayoutId, Pos};
use hrl_core::harness::{self, AgentBase, AgentLabel, ExperimentId, RunConfig};
use hrl_core::manager::{Manager, ManagerConfig, SmdpState};
use hrl_core::options::runtime::{run_option, OptionContext, WorkerAccess};
use hrl_core::options::spec::{option_reward, Cause, OptionConfig, OptionId};
use hrl_core::workers::mlp::Mlp;
use hrl_core::workers::sil::{a2c_loss, sil_loss, Batch, LossWeights};
use hrl_core::workers::{TabularConfig, TabularWorker, Worker};

#[derive(Clone, Debug)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

// ---------------------------------------------------------------------------
// Option MDPs of a four-room map

pub struct OptionMdp {
    pub option: OptionId,
    pub inventory: Inventory,
    pub states: Vec<Pos>,
}

/// Inventories along the object chain, excluding the completed one, paired
/// with the next object's flag and position.
pub fn chain(env: &GridEnv) -> Vec<(Inventory, u8, Pos)> {
    let o = env.objects();
    let mut steps = vec![(Inventory::KEY, o.key)];
    if let Some(d) = o.door {
        steps.push((Inventory::DOOR, d));
    }
    if let Some(t) = o.treasure {
        steps.push((Inventory::TREASURE, t));
    }
    let mut inv = Inventory::EMPTY;
    let mut out = Vec::new();
    for (flag, pos) in steps {
        out.push((inv, flag, pos));
        inv = inv.with(flag);
    }
    out
}

pub fn regions(env: &GridEnv, comp: &Compressor) -> BTreeMap<RegionId, Vec<Pos>> {
    let mut out: BTreeMap<RegionId, Vec<Pos>> = BTreeMap::new();
    for p in env.layout().passable_cells() {
        out.entry(comp.region(p)).or_default().push(p);
    }
    out
}

/// Ordered region pairs connected by a single primitive move.
pub fn adjacency(env: &GridEnv, comp: &Compressor) -> BTreeSet<(RegionId, RegionId)> {
    let mut out = BTreeSet::new();
    for p in env.layout().passable_cells() {
        for a in Action::ALL {
            let q = env.move_from(p, a);
            if comp.region(q) != comp.region(p) {
                out.insert((comp.region(p), comp.region(q)));
            }
        }
    }
    out
}

/// Every navigation option under every chain inventory, plus the task option
/// of each chain step.
pub fn enumerate_option_mdps(env: &GridEnv, comp: &Compressor) -> Vec<OptionMdp> {
    let regions = regions(env, comp);
    let mut out = Vec::new();
    for (inv, flag, pos) in chain(env) {
        for &(from, to) in &adjacency(env, comp) {
            out.push(OptionMdp { option: OptionId::Navigate { from, to }, inventory: inv, states: regions[&from].clone() });
        }
        let region = comp.region(pos);
        out.push(OptionMdp {
            option: OptionId::Task { region, from: inv, to: inv.with(flag) },
            inventory: inv,
            states: regions[&region].clone(),
        });
    }
    out
}

fn state(pos: Pos, inventory: Inventory) -> GridState {
    GridState { pos, inventory, alive: true, t: 0 }
}

/// Reward and termination of an option-MDP step, written out case by case.
pub fn oracle_reward(option: OptionId, comp: &Compressor, prev: &GridState, next: &GridState) -> (f64, bool) {
    let z = option.region();
    let nz = comp.region(next.pos);
    let failed = nz != z || next.inventory != prev.inventory || !next.alive;
    let reached = match option {
        OptionId::Navigate { to, .. } => nz == to,
        OptionId::Task { to, .. } => nz == z && next.inventory == to,
        OptionId::Explore(_) => unreachable!("exploration has no option MDP"),
    };
    if reached {
        (0.8, true)
    } else if failed {
        (-0.1, true)
    } else {
        (0.0, false)
    }
}

type Model = BTreeMap<(Pos, usize), (f64, Option<Pos>)>;

fn oracle_model(mdp: &OptionMdp, env: &GridEnv, comp: &Compressor) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut m = Model::new();
    for &p in &mdp.states {
        for a in Action::ALL {
            let s = state(p, mdp.inventory);
            let next = env.step(&s, a, &mut rng).unwrap().next_state;
            let (r, terminal) = oracle_reward(mdp.option, comp, &s, &next);
            m.insert((p, a.index()), (r, (!terminal).then_some(next.pos)));
        }
    }
    m
}

pub fn value_iteration(model: &Model, gamma: f64) -> BTreeMap<(Pos, usize), f64> {
    let mut v: BTreeMap<Pos, f64> = model.keys().map(|(p, _)| (*p, 0.0)).collect();
    let mut q = BTreeMap::new();
    for _ in 0..100_000 {
        for (&k, &(r, next)) in model {
            q.insert(k, r + gamma * next.map_or(0.0, |n| v[&n]));
        }
        let mut delta: f64 = 0.0;
        for (p, val) in v.iter_mut() {
            let best = Action::ALL.iter().map(|a| q[&(*p, a.index())]).fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - *val).abs());
            *val = best;
        }
        if delta < 1e-15 {
            break;
        }
    }
    q
}

/// Trains a tabular worker with exhaustive sweeps over the option MDP, using
/// the library's environment step and option reward, until updates stop
/// moving the table. Returns the sup-norm distance to value iteration.
pub fn worker_gap(mdp: &OptionMdp, env: &GridEnv, comp: &Compressor) -> f64 {
    let cfg = OptionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut samples = Vec::new();
    for &p in &mdp.states {
        for a in Action::ALL {
            let s = state(p, mdp.inventory);
            let tr = env.step(&s, a, &mut rng).unwrap();
            let j = option_reward(&mdp.option, &cfg, comp.region(tr.next_state.pos), &s, &tr.next_state, tr.terminal, 1);
            samples.push((p, a, j.reward, (!j.worker_terminal).then_some(tr.next_state.pos)));
        }
    }
    let mut w = TabularWorker::new(TabularConfig::default());
    for _ in 0..1_000_000 {
        let mut delta: f64 = 0.0;
        for &(p, a, r, next) in &samples {
            let before = w.q(p, a);
            w.update(p, a, r, next);
            delta = delta.max((w.q(p, a) - before).abs());
        }
        if delta < 1e-13 {
            break;
        }
    }
    let oracle = value_iteration(&oracle_model(mdp, env, comp), w.cfg.gamma);
    oracle.iter().map(|(&(p, a), &v)| (w.q(p, Action::from_index(a)) - v).abs()).fold(0.0, f64::max)
}

pub fn kdt1_deterministic() -> (GridEnv, Compressor) {
    let env = GridEnv::new(&EnvConfig::kdt1().with_noise(0.0)).unwrap();
    let comp = Compressor::new(CompressionSpec::for_layout(LayoutId::Kdt1), env.layout()).unwrap();
    (env, comp)
}

pub fn worker_oracle_check() -> Check {
    let (env, comp) = kdt1_deterministic();
    let mdps = enumerate_option_mdps(&env, &comp);
    let mut worst: f64 = 0.0;
    let mut worst_option = String::new();
    for mdp in &mdps {
        let gap = worker_gap(mdp, &env, &comp);
        if gap > worst {
            worst = gap;
            worst_option = format!("{} under {}", mdp.option, mdp.inventory);
        }
    }
    Check::new(
        worst < 1e-6,
        format!("{} option MDPs, worst sup-norm gap {worst:.2e} ({worst_option})", mdps.len()),
    )
}

// ---------------------------------------------------------------------------
// Three-region chain SMDP

pub struct ChainRow {
    pub state: SmdpState,
    pub option: OptionId,
    pub reward: f64,
    pub duration: u32,
    pub next: SmdpState,
    pub terminal: bool,
}

/// Regions 0 - 1 - 2 with frozen deterministic options of fixed durations.
/// Entering region 2 ends the task with reward 1 on the option's last step.
pub fn chain_smdp(gamma: f64) -> Vec<ChainRow> {
    let s = |z| SmdpState::new(z, Inventory::EMPTY);
    let row = |z, option, reward, duration, to, terminal| ChainRow {
        state: s(z),
        option,
        reward,
        duration,
        next: s(to),
        terminal,
    };
    vec![
        row(0, OptionId::Explore(0), 0.0, 5, 1, false),
        row(0, OptionId::Navigate { from: 0, to: 1 }, 0.0, 3, 1, false),
        row(1, OptionId::Explore(1), 0.0, 2, 0, false),
        row(1, OptionId::Navigate { from: 1, to: 0 }, 0.0, 2, 0, false),
        row(1, OptionId::Navigate { from: 1, to: 2 }, gamma.powi(3), 4, 2, true),
    ]
}

fn chain_admissible(rows: &[ChainRow], s: SmdpState) -> Vec<OptionId> {
    rows.iter().filter(|r| r.state == s).map(|r| r.option).collect()
}

pub fn smdp_value_iteration(rows: &[ChainRow], gamma: f64) -> BTreeMap<(SmdpState, OptionId), f64> {
    let mut q: BTreeMap<(SmdpState, OptionId), f64> = rows.iter().map(|r| ((r.state, r.option), 0.0)).collect();
    for _ in 0..100_000 {
        let mut delta: f64 = 0.0;
        let old = q.clone();
        for r in rows {
            let best = if r.terminal {
                0.0
            } else {
                chain_admissible(rows, r.next).iter().map(|o| old[&(r.next, *o)]).fold(f64::NEG_INFINITY, f64::max)
            };
            let v = r.reward + gamma.powi(r.duration as i32) * best;
            delta = delta.max((v - old[&(r.state, r.option)]).abs());
            q.insert((r.state, r.option), v);
        }
        if delta < 1e-15 {
            break;
        }
    }
    q
}

/// Manager trained by sweeping the chain's option outcomes to convergence.
pub fn trained_chain_manager() -> Manager {
    let mut m = Manager::new(ManagerConfig::default());
    let rows = chain_smdp(m.cfg.gamma);
    for _ in 0..1_000_000 {
        let mut delta: f64 = 0.0;
        for r in &rows {
            let before = m.q(r.state, r.option);
            let next_adm = if r.terminal { Vec::new() } else { chain_admissible(&rows, r.next) };
            let after = m.update(r.state, r.option, r.reward, r.duration, r.next, &next_adm, r.terminal).unwrap();
            delta = delta.max((after - before).abs());
        }
        if delta < 1e-13 {
            break;
        }
    }
    m
}

pub fn manager_oracle_check() -> Check {
    let m = trained_chain_manager();
    let oracle = smdp_value_iteration(&chain_smdp(m.cfg.gamma), m.cfg.gamma);
    let gap = oracle.iter().map(|(&(s, o), &v)| (m.q(s, o) - v).abs()).fold(0.0, f64::max);
    Check::new(gap < 1e-6, format!("{} state-option pairs, sup-norm gap {gap:.2e}", oracle.len()))
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossTerm {
    Policy,
    Entropy,
    Value,
    SilPolicy,
    SilValue,
}

impl LossTerm {
    pub const ALL: [LossTerm; 5] =
        [LossTerm::Policy, LossTerm::Entropy, LossTerm::Value, LossTerm::SilPolicy, LossTerm::SilValue];

    fn weights(self) -> LossWeights {
        let mut w = LossWeights::none();
        match self {
            LossTerm::Policy => w.policy = 1.0,
            LossTerm::Entropy => w.entropy = 1.0,
            LossTerm::Value => w.value = 1.0,
            LossTerm::SilPolicy => w.sil_policy = 1.0,
            LossTerm::SilValue => w.sil_value = 1.0,
        }
        w
    }

    fn on_value_net(self) -> bool {
        matches!(self, LossTerm::Value | LossTerm::SilValue)
    }

    fn is_sil(self) -> bool {
        matches!(self, LossTerm::SilPolicy | LossTerm::SilValue)
    }
}

pub struct GradientInstance {
    pub policy: Mlp,
    pub value: Mlp,
    pub obs: Array2<f64>,
    pub actions: Vec<usize>,
    pub returns: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl GradientInstance {
    pub fn random(rng: &mut impl Rng) -> Self {
        let inputs = rng.gen_range(2..6);
        let hidden = rng.gen_range(2..7);
        let actions = rng.gen_range(2..6);
        let n = rng.gen_range(1..7);
        let policy = Mlp::new(&[inputs, hidden, hidden, actions], 1.0, rng);
        let value = Mlp::new(&[inputs, hidden, hidden, 1], 1.0, rng);
        let obs = Array2::from_shape_fn((n, inputs), |_| rng.gen_range(-1.0..1.0));
        Self {
            policy,
            value,
            obs,
            actions: (0..n).map(|_| rng.gen_range(0..actions)).collect(),
            returns: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            weights: rng.gen_bool(0.5).then(|| (0..n).map(|_| rng.gen_range(0.1..1.0)).collect()),
        }
    }

    fn loss(&self, policy: &Mlp, value: &Mlp, term: LossTerm) -> hrl_core::workers::sil::LossOutput {
        let batch = Batch {
            obs: self.obs.view(),
            actions: &self.actions,
            returns: &self.returns,
            weights: self.weights.as_deref(),
        };
        let f = if term.is_sil() { sil_loss } else { a2c_loss };
        f(policy, value, &batch, &term.weights()).unwrap()
    }

    /// Relative error `‖g − fd‖ / max(‖g‖, ‖fd‖)` between the analytic
    /// gradient of `term` and central differences, on the network the term
    /// trains. Returns 0 when both vanish.
    pub fn relative_error(&self, term: LossTerm) -> f64 {
        let out = self.loss(&self.policy, &self.value, term);
        let analytic = if term.on_value_net() { out.value.flatten() } else { out.policy.flatten() };
        let net = if term.on_value_net() { &self.value } else { &self.policy };
        let params = net.flat_params();
        let h = 1e-6;
        let mut fd = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let at = |delta: f64| {
                let mut p = params.clone();
                p[i] += delta;
                let mut n = net.clone();
                n.set_flat_params(&p).unwrap();
                if term.on_value_net() {
                    self.loss(&self.policy, &n, term).loss
                } else {
                    self.loss(&n, &self.value, term).loss
                }
            };
            fd.push((at(h) - at(-h)) / (2.0 * h));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&fd));
        if scale < 1e-10 {
            return 0.0;
        }
        norm(&diff) / scale
    }
}

pub fn gradient_check(instances: u64) -> Check {
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut nonzero = 0;
    for k in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
        let inst = GradientInstance::random(&mut rng);
        for term in LossTerm::ALL {
            let e = inst.relative_error(term);
            nonzero += usize::from(e > 0.0);
            if e > worst {
                worst = e;
                worst_at = format!("instance {k}, {term:?}");
            }
        }
    }
    Check::new(
        worst < 1e-4,
        format!("{instances} nets x 5 terms, worst relative error {worst:.2e} ({worst_at}), {nonzero} non-trivial"),
    )
}

// ---------------------------------------------------------------------------
// Option rewards and controllability bonuses

#[derive(Default, Debug)]
pub struct RewardTally {
    pub by_kind: BTreeMap<String, BTreeSet<String>>,
    pub violations: Vec<String>,
}

impl RewardTally {
    fn note(&mut self, kind: &str, reward: f64) {
        self.by_kind.entry(kind.to_string()).or_default().insert(format!("{reward}"));
    }
}

/// Every one-step transition of every option MDP, judged at step 1, at the
/// step before the limit and at the limit.
pub fn single_step_conformance(env: &GridEnv, comp: &Compressor, tally: &mut RewardTally) {
    let cfg = OptionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for mdp in enumerate_option_mdps(env, comp) {
        for &p in &mdp.states {
            for a in Action::ALL {
                let s = state(p, mdp.inventory);
                let tr = env.step(&s, a, &mut rng).unwrap();
                let nz = comp.region(tr.next_state.pos);
                let (want, terminal) = oracle_reward(mdp.option, comp, &s, &tr.next_state);
                for steps in [1, cfg.step_limit - 1, cfg.step_limit] {
                    let j = option_reward(&mdp.option, &cfg, nz, &s, &tr.next_state, tr.terminal, steps);
                    let kind = match j.end {
                        None => "interior",
                        Some(Cause::ReachedTarget) => "target",
                        Some(Cause::WrongNeighbor) => "wrong-neighbor",
                        Some(Cause::Timeout) => "timeout",
                        Some(Cause::TaskStateChange) => "task-change",
                        Some(Cause::EnvTerminal) => "env-terminal",
                    };
                    tally.note(kind, j.reward);
                    let expected = if terminal {
                        want
                    } else if steps >= cfg.step_limit {
                        -0.1
                    } else {
                        0.0
                    };
                    let ends = terminal || steps >= cfg.step_limit;
                    if j.reward != expected || j.end.is_some() != ends {
                        tally.violations.push(format!("{} at {p} {a:?} step {steps}: {j:?}", mdp.option));
                    }
                }
            }
        }
    }
}

/// Runs every navigation option from every start cell with a frozen worker
/// that has no preferences, and checks that only the final step is rewarded.
pub fn rollout_conformance(env: &GridEnv, comp: &Compressor, tally: &mut RewardTally) {
    let cfg = OptionConfig::default();
    let ctx = OptionContext { env, compressor: comp, cfg: &cfg, gamma: 0.99 };
    let worker = Worker::Tabular(TabularWorker::new(TabularConfig::default()));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for mdp in enumerate_option_mdps(env, comp).into_iter().filter(|m| m.inventory == Inventory::EMPTY) {
        for &p in &mdp.states {
            let out = run_option(&ctx, state(p, mdp.inventory), mdp.option, Some(WorkerAccess::Frozen(&worker)), true, &mut rng)
                .unwrap();
            let mut prev = state(p, mdp.inventory);
            for (i, tr) in out.trajectory.iter().enumerate() {
                let j = option_reward(
                    &mdp.option,
                    &cfg,
                    comp.region(tr.next_state.pos),
                    &prev,
                    &tr.next_state,
                    tr.terminal,
                    i as u32 + 1,
                );
                let last = i + 1 == out.trajectory.len();
                if !last && (j.reward != 0.0 || j.end.is_some()) {
                    tally.violations.push(format!("{} from {p}: step {i} rewarded {}", mdp.option, j.reward));
                }
                if last && (j.reward != out.final_option_reward || j.end != Some(out.cause)) {
                    tally.violations.push(format!("{} from {p}: final step disagrees", mdp.option));
                }
                prev = tr.next_state;
            }
            let expected = match out.cause {
                Cause::ReachedTarget => 0.8,
                _ => -0.1,
            };
            if out.final_option_reward != expected {
                tally.violations.push(format!("{} from {p}: {:?} paid {}", mdp.option, out.cause, out.final_option_reward));
            }
        }
    }
}

/// A worker that walks into a wall forever must be cut off after exactly
/// the step limit with the failure reward.
pub fn timeout_conformance(env: &GridEnv, comp: &Compressor, tally: &mut RewardTally) {
    let cfg = OptionConfig::default();
    let ctx = OptionContext { env, compressor: comp, cfg: &cfg, gamma: 0.99 };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for &(from, to) in &adjacency(env, comp) {
        let Some((p, a)) = regions(env, comp)[&from]
            .iter()
            .flat_map(|&p| Action::ALL.into_iter().map(move |a| (p, a)))
            .find(|&(p, a)| env.move_from(p, a) == p && env.interact(p, Inventory::EMPTY) == Inventory::EMPTY)
        else {
            continue;
        };
        let mut w = TabularWorker::new(TabularConfig::default());
        w.update(p, a, 1.0, None);
        let worker = Worker::Tabular(w);
        let out = run_option(
            &ctx,
            state(p, Inventory::EMPTY),
            OptionId::Navigate { from, to },
            Some(WorkerAccess::Frozen(&worker)),
            true,
            &mut rng,
        )
        .unwrap();
        tally.note("timeout-rollout", out.final_option_reward);
        if out.cause != Cause::Timeout || out.duration != cfg.step_limit || out.final_option_reward != -0.1 {
            tally.violations.push(format!("wall walker in {from}: {:?} after {}", out.cause, out.duration));
        }
        checked += 1;
    }
    if checked == 0 {
        tally.violations.push("no wall-adjacent cell found".into());
    }
}

/// Trains a controllability agent and checks its event log: every bonus lies
/// in [0, 1] and bonuses pair one to one with successful navigations.
pub fn controllability_conformance(episodes: u32) -> Check {
    let env = GridEnv::new(&EnvConfig::kdt1()).unwrap();
    let cfg = HrlConfig { controllability: true, ..HrlConfig::default() };
    let mut agent = HrlAgent::for_layout(cfg, LayoutId::Kdt1).unwrap();
    agent.set_event_logging(true);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut events = Vec::new();
    for _ in 0..episodes {
        agent.train_episode(&env, 100_000, u64::MAX, &mut rng, |_| {}).unwrap();
        events.extend(agent.take_events());
    }
    let bonuses: Vec<_> = events.iter().filter(|e| e.event == "bonus").collect();
    let successes = events
        .iter()
        .filter(|e| e.event == "option" && e.option.starts_with("nav(") && e.success)
        .count();
    let in_range = bonuses.iter().all(|b| b.rho.is_some_and(|r| (0.0..=1.0).contains(&r)));
    let on_nav = bonuses.iter().all(|b| b.option.starts_with("nav("));
    let max_rho = bonuses.iter().filter_map(|b| b.rho).fold(0.0, f64::max);
    Check::new(
        in_range && on_nav && bonuses.len() == successes && !bonuses.is_empty(),
        format!(
            "{} bonuses for {successes} successful navigations, all in [0, 1]: {in_range}, max {max_rho:.2}",
            bonuses.len()
        ),
    )
}

pub fn reward_conformance_check() -> Check {
    let (env, comp) = kdt1_deterministic();
    let mut tally = RewardTally::default();
    single_step_conformance(&env, &comp, &mut tally);
    rollout_conformance(&env, &comp, &mut tally);
    timeout_conformance(&env, &comp, &mut tally);
    let co = controllability_conformance(30);
    let observed: Vec<String> =
        tally.by_kind.iter().map(|(k, v)| format!("{k} {{{}}}", v.iter().cloned().collect::<Vec<_>>().join(", "))).collect();
    Check::new(
        tally.violations.is_empty() && co.passed,
        format!(
            "rewards seen: {}; {} violations{}; {}",
            observed.join(", "),
            tally.violations.len(),
            tally.violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default(),
            co.detail
        ),
    )
}

// ---------------------------------------------------------------------------
// Scripted shortest-path agent

/// First action of a shortest path from `s` to task completion, planned on
/// the noise-free dynamics.
pub fn bfs_action(model: &GridEnv, s: &GridState) -> Option<Action> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let start = (s.pos, s.inventory);
    let mut first: BTreeMap<(Pos, Inventory), Action> = BTreeMap::new();
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some((pos, inv)) = queue.pop_front() {
        for a in Action::ALL {
            let cur = GridState { pos, inventory: inv, alive: true, t: 0 };
            let next = model.step(&cur, a, &mut rng).unwrap().next_state;
            if !next.alive {
                continue;
            }
            let key = (next.pos, next.inventory);
            let act = if (pos, inv) == start { a } else { first[&(pos, inv)] };
            if model.is_complete(&next) {
                return Some(act);
            }
            if seen.insert(key) {
                first.insert(key, act);
                queue.push_back(key);
            }
        }
    }
    None
}

/// Success rate of the replanning shortest-path agent on `cfg`.
pub fn scripted_success(cfg: &EnvConfig, episodes: u32, seed: u64) -> f64 {
    let env = GridEnv::new(cfg).unwrap();
    let model = GridEnv::new(&cfg.clone().with_noise(0.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins = 0;
    for _ in 0..episodes {
        let mut s = env.reset();
        while !env.is_terminal(&s) {
            let a = bfs_action(&model, &s).expect("task is solvable");
            s = env.step(&s, a, &mut rng).unwrap().next_state;
        }
        wins += u32::from(env.is_complete(&s));
    }
    wins as f64 / episodes as f64
}

// ---------------------------------------------------------------------------
// Persistence, determinism and transfer integrity

pub fn trained_kdt1_agent(episodes: u32, seed: u64) -> HrlAgent {
    let env = GridEnv::new(&EnvConfig::kdt1()).unwrap();
    let mut agent = HrlAgent::for_layout(HrlConfig::default(), LayoutId::Kdt1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..episodes {
        agent.train_episode(&env, 50_000, u64::MAX, &mut rng, |_| {}).unwrap();
    }
    agent
}

pub fn persistence_check(dir: &Path) -> Check {
    use hrl_core::graph::RegionGraph;
    use hrl_core::persist;

    let chain = trained_chain_manager();
    let chain_path = dir.join("chain-manager.json");
    persist::save("manager", &chain, &chain_path).unwrap();
    let chain_back: Manager = persist::load("manager", &chain_path).unwrap();
    let chain_same = chain
        .entries()
        .zip(chain_back.entries())
        .all(|(a, b)| a.0 == b.0 && a.1 == b.1 && a.2.to_bits() == b.2.to_bits())
        && chain.len() == chain_back.len();

    let agent = trained_kdt1_agent(40, 11);
    let agent_path = dir.join("agent.json");
    agent.save(&agent_path).unwrap();
    let back = HrlAgent::load(&agent_path).unwrap();
    let graph_path = dir.join("graph.json");
    agent.graph().save(agent.compression(), &graph_path).unwrap();
    let (graph, compression) = RegionGraph::load(&graph_path).unwrap();

    let probe: Vec<_> = agent.graph().edges().map(|(z, to, o)| (z, to, o.stats, o.stats.success_rate())).collect();
    let probe_back: Vec<_> = graph.edges().map(|(z, to, o)| (z, to, o.stats, o.stats.success_rate())).collect();
    let env = GridEnv::new(&EnvConfig::kdt1()).unwrap();
    let greedy = |a: &HrlAgent| {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        (0..5).map(|_| a.run_greedy_episode(&env, &mut rng).unwrap()).collect::<Vec<_>>()
    };
    let agent_same = back == agent && greedy(&back) == greedy(&agent);
    let graph_same = &graph == agent.graph() && compression == *agent.compression() && probe == probe_back;
    Check::new(
        chain_same && agent_same && graph_same,
        format!(
            "chain Q identical: {chain_same}; agent identical: {agent_same}; graph with {} edge probes identical: {graph_same}",
            probe.len()
        ),
    )
}

pub fn all_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn small_run_config(output: &Path) -> RunConfig {
    let mut cfg = RunConfig::for_experiment(ExperimentId::ExplorationKdt1);
    cfg.agents = vec![AgentLabel::new(AgentBase::HrlTab), AgentLabel::new(AgentBase::Sil), AgentLabel::new(AgentBase::SilExp)];
    cfg.steps = 4_000;
    cfg.eval_interval = 1_000;
    cfg.eval_episodes = 3;
    cfg.seeds = vec![0, 1];
    cfg.flat.sil.hidden = 16;
    cfg.output_dir = output.to_path_buf();
    cfg.log_events = true;
    cfg.save_agents = true;
    cfg
}

/// Two runs of the same configuration into different directories. The
/// manifest records its own output directory, so that field is blanked
/// before comparing.
pub fn determinism_check(a: &Path, b: &Path) -> Check {
    for dir in [a, b] {
        harness::run_experiment(&small_run_config(dir)).unwrap();
    }
    let mut fa = all_files(a);
    let mut fb = all_files(b);
    let manifest = PathBuf::from("exploration-kdt1/manifest.json");
    for (files, dir) in [(&mut fa, a), (&mut fb, b)] {
        let m = files.get_mut(&manifest).expect("manifest written");
        let text = String::from_utf8(m.clone()).unwrap();
        let shown = serde_json::to_string(&dir.display().to_string()).unwrap();
        *m = text.replace(&shown, "\"<output>\"").into_bytes();
    }
    let differing: Vec<_> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).cloned().collect();
    Check::new(
        fa.len() == fb.len() && differing.is_empty() && fa.len() > 10,
        format!("{} files compared, {} differ{}", fa.len(), differing.len(), differing.first().map(|p| format!(" (first: {})", p.display())).unwrap_or_default()),
    )
}

pub fn graph_hash(agent: &HrlAgent) -> u64 {
    use std::hash::{Hash, Hasher};
    let json = serde_json::to_string(agent.graph()).unwrap();
    let mut h = std::collections::hash_map::DefaultHasher::new();
    json.hash(&mut h);
    h.finish()
}
