//! Advantage actor-critic with self-imitation from a prioritized replay buffer.
//!
//! Loss, averaged over the batch:
//!
//! ```text
//! on-policy:  -log π(a|s)·A  -  α·H(π(·|s))  +  ½·A²          A = R_n − V(s)
//! replay:     -w·log π(a|s)·(R − V(s))₊  +  c_v·w·½·(R − V(s))₊²
//! ```
//!
//! `R_n` is the n-step bootstrapped return, `R` the discounted return of a
//! stored trajectory and `w` the importance weight of the replayed sample.
//! Advantages are treated as constants when differentiating the policy terms.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Grads, Mlp};
use super::optim::{Optimizer, OptimizerKind};
use super::replay::{PrioritizedReplay, ReplayConfig, ReplayEntry};
use super::WorkerError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SilConfig {
    pub hidden: usize,
    pub n_step: usize,
    pub gamma: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub entropy: f64,
    /// Self-imitation updates after every actor-critic update.
    pub sil_updates: usize,
    pub sil_batch: usize,
    pub sil_value_weight: f64,
    pub sil_weight: f64,
    /// Replay size below which self-imitation updates are skipped.
    pub min_replay: usize,
    pub replay: ReplayConfig,
}

impl Default for SilConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            n_step: 6,
            gamma: 0.99,
            lr: 7e-4,
            optimizer: OptimizerKind::Sgd,
            entropy: 0.01,
            sil_updates: 2,
            sil_batch: 512,
            sil_value_weight: 0.01,
            sil_weight: 1.0,
            min_replay: 64,
            replay: ReplayConfig::default(),
        }
    }
}

/// Per-term multipliers of the total loss. Zeroing all but one term isolates
/// it, which is how the gradient checks exercise each term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub policy: f64,
    pub entropy: f64,
    pub value: f64,
    pub sil_policy: f64,
    pub sil_value: f64,
}

impl LossWeights {
    pub fn from_config(cfg: &SilConfig) -> Self {
        Self {
            policy: 1.0,
            entropy: cfg.entropy,
            value: 1.0,
            sil_policy: cfg.sil_weight,
            sil_value: cfg.sil_weight * cfg.sil_value_weight,
        }
    }

    pub fn none() -> Self {
        Self { policy: 0.0, entropy: 0.0, value: 0.0, sil_policy: 0.0, sil_value: 0.0 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub obs: ArrayView2<'a, f64>,
    pub actions: &'a [usize],
    pub returns: &'a [f64],
    /// Importance weights; `None` means all ones.
    pub weights: Option<&'a [f64]>,
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    pub policy: Grads,
    pub value: Grads,
    /// `R − V(s)` per sample, before clipping.
    pub advantages: Vec<f64>,
}

pub fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Entropy of a distribution given its log-probabilities.
pub fn entropy(logp: &[f64]) -> f64 {
    -logp.iter().map(|l| l.exp() * l).sum::<f64>()
}

fn check_batch(policy: &Mlp, batch: &Batch) -> Result<usize, WorkerError> {
    let n = batch.obs.nrows();
    if n == 0 {
        return Err(WorkerError::EmptyBatch);
    }
    if batch.actions.len() != n || batch.returns.len() != n || batch.weights.is_some_and(|w| w.len() != n) {
        return Err(WorkerError::Usage("batch columns have different lengths".into()));
    }
    if let Some(&a) = batch.actions.iter().find(|&&a| a >= policy.output_dim()) {
        return Err(WorkerError::Usage(format!("action {a} out of range")));
    }
    Ok(n)
}

/// On-policy actor-critic loss: policy gradient, entropy bonus and value regression.
pub fn a2c_loss(policy: &Mlp, value: &Mlp, batch: &Batch, w: &LossWeights) -> Result<LossOutput, WorkerError> {
    let n = check_batch(policy, batch)?;
    let ptape = policy.forward(batch.obs)?;
    let vtape = value.forward(batch.obs)?;
    let logp = log_softmax_rows(&ptape.output);
    let inv_n = 1.0 / n as f64;

    let mut loss = 0.0;
    let mut dlogits = Array2::<f64>::zeros(logp.raw_dim());
    let mut dv = Array2::<f64>::zeros((n, 1));
    let mut advantages = Vec::with_capacity(n);
    for i in 0..n {
        let iw = batch.weights.map_or(1.0, |ws| ws[i]);
        let row = logp.row(i);
        let lp: Vec<f64> = row.to_vec();
        let h = entropy(&lp);
        let adv = batch.returns[i] - vtape.output[[i, 0]];
        advantages.push(adv);
        let a = batch.actions[i];
        loss += iw * inv_n * (-w.policy * lp[a] * adv - w.entropy * h + w.value * 0.5 * adv * adv);
        for (j, &l) in lp.iter().enumerate() {
            let p = l.exp();
            let onehot = if j == a { 1.0 } else { 0.0 };
            dlogits[[i, j]] = iw * inv_n * (w.policy * adv * (p - onehot) + w.entropy * p * (l + h));
        }
        dv[[i, 0]] = -iw * inv_n * w.value * adv;
    }
    Ok(LossOutput { loss, policy: policy.backward(&ptape, &dlogits), value: value.backward(&vtape, &dv), advantages })
}

/// Self-imitation loss on replayed samples with clipped advantages.
pub fn sil_loss(policy: &Mlp, value: &Mlp, batch: &Batch, w: &LossWeights) -> Result<LossOutput, WorkerError> {
    let n = check_batch(policy, batch)?;
    let ptape = policy.forward(batch.obs)?;
    let vtape = value.forward(batch.obs)?;
    let logp = log_softmax_rows(&ptape.output);
    let inv_n = 1.0 / n as f64;

    let mut loss = 0.0;
    let mut dlogits = Array2::<f64>::zeros(logp.raw_dim());
    let mut dv = Array2::<f64>::zeros((n, 1));
    let mut advantages = Vec::with_capacity(n);
    for i in 0..n {
        let iw = batch.weights.map_or(1.0, |ws| ws[i]);
        let adv = batch.returns[i] - vtape.output[[i, 0]];
        advantages.push(adv);
        let clipped = adv.max(0.0);
        if clipped == 0.0 {
            continue;
        }
        let a = batch.actions[i];
        loss += iw * inv_n * (-w.sil_policy * logp[[i, a]] * clipped + w.sil_value * 0.5 * clipped * clipped);
        for j in 0..logp.ncols() {
            let p = logp[[i, j]].exp();
            let onehot = if j == a { 1.0 } else { 0.0 };
            dlogits[[i, j]] = iw * inv_n * w.sil_policy * clipped * (p - onehot);
        }
        dv[[i, 0]] = -iw * inv_n * w.sil_value * clipped;
    }
    Ok(LossOutput { loss, policy: policy.backward(&ptape, &dlogits), value: value.backward(&vtape, &dv), advantages })
}

/// Discounted returns of a trajectory, bootstrapped with `tail` after the last step.
pub fn discounted_returns(rewards: &[f64], gamma: f64, tail: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = tail;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    out
}

fn stack(rows: &[&[f64]]) -> Array2<f64> {
    let d = rows.first().map_or(0, |r| r.len());
    Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}

#[derive(Clone, Debug, PartialEq)]
struct Step {
    obs: Vec<f64>,
    action: usize,
    reward: f64,
}

/// Ids of the replay entries written for one trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaySpan {
    pub first: u64,
    pub len: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SilWorker {
    cfg: SilConfig,
    policy: Mlp,
    value: Mlp,
    policy_opt: Optimizer,
    value_opt: Optimizer,
    #[serde(skip)]
    rollout: Vec<Step>,
    #[serde(skip)]
    trajectory: Vec<Step>,
    #[serde(skip)]
    replay: Option<PrioritizedReplay>,
}

impl PartialEq for SilWorker {
    /// Compares learned state only; rollouts and replay are transient.
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg
            && self.policy == other.policy
            && self.value == other.value
            && self.policy_opt == other.policy_opt
            && self.value_opt == other.value_opt
    }
}

impl SilWorker {
    pub fn new(cfg: SilConfig, input_dim: usize, actions: usize, rng: &mut impl Rng) -> Self {
        let h = cfg.hidden;
        Self {
            policy: Mlp::new(&[input_dim, h, h, actions], 0.01, rng),
            value: Mlp::new(&[input_dim, h, h, 1], 1.0, rng),
            policy_opt: Optimizer::new(cfg.optimizer, cfg.lr),
            value_opt: Optimizer::new(cfg.optimizer, cfg.lr),
            rollout: Vec::new(),
            trajectory: Vec::new(),
            replay: None,
            cfg,
        }
    }

    pub fn config(&self) -> &SilConfig {
        &self.cfg
    }

    pub fn policy_net(&self) -> &Mlp {
        &self.policy
    }

    pub fn value_net(&self) -> &Mlp {
        &self.value
    }

    pub fn probs(&self, obs: &[f64]) -> Vec<f64> {
        let x = stack(&[obs]);
        let logits = self.policy.predict(x.view()).expect("observation width matches network");
        log_softmax_rows(&logits).row(0).iter().map(|l| l.exp()).collect()
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        let x = stack(&[obs]);
        self.value.predict(x.view()).expect("observation width matches network")[[0, 0]]
    }

    /// Samples from the policy, or takes its most likely action when `greedy`.
    pub fn act(&self, obs: &[f64], greedy: bool, rng: &mut impl Rng) -> usize {
        let p = self.probs(obs);
        if greedy {
            return (0..p.len()).fold(0, |best, i| if p[i] > p[best] { i } else { best });
        }
        let u = rng.gen::<f64>();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    }

    pub fn replay_len(&self) -> usize {
        self.replay.as_ref().map_or(0, |r| r.len())
    }

    pub fn clear_replay(&mut self) {
        self.replay = None;
    }

    /// Records one transition. Updates run every `n_step` transitions and at
    /// terminal transitions; `next` is used for bootstrapping otherwise.
    pub fn observe(&mut self, obs: &[f64], action: usize, reward: f64, next: Option<&[f64]>, rng: &mut impl Rng) {
        let step = Step { obs: obs.to_vec(), action, reward };
        self.trajectory.push(step.clone());
        self.rollout.push(step);
        match next {
            None => self.flush_rollout(0.0, rng),
            Some(n) if self.rollout.len() >= self.cfg.n_step => {
                let tail = self.value(n);
                self.flush_rollout(tail, rng);
            }
            Some(_) => {}
        }
    }

    /// Ends the current trajectory: updates on any pending rollout (bootstrapping
    /// from `bootstrap` if given), then stores the trajectory for self-imitation.
    pub fn finish(&mut self, bootstrap: Option<&[f64]>, rng: &mut impl Rng) -> Option<ReplaySpan> {
        if !self.rollout.is_empty() {
            let tail = bootstrap.map_or(0.0, |b| self.value(b));
            self.flush_rollout(tail, rng);
        }
        let traj = std::mem::take(&mut self.trajectory);
        if traj.is_empty() {
            return None;
        }
        let rewards: Vec<f64> = traj.iter().map(|s| s.reward).collect();
        let steps: Vec<(Vec<f64>, usize)> = traj.into_iter().map(|s| (s.obs, s.action)).collect();
        Some(self.push_trajectory(&steps, &rewards))
    }

    /// Stores a finished trajectory with its discounted returns.
    pub fn push_trajectory(&mut self, steps: &[(Vec<f64>, usize)], rewards: &[f64]) -> ReplaySpan {
        let returns = discounted_returns(rewards, self.cfg.gamma, 0.0);
        let cfg = self.cfg.replay;
        let replay = self.replay.get_or_insert_with(|| PrioritizedReplay::new(cfg));
        let mut first = None;
        for ((obs, action), ret) in steps.iter().zip(returns) {
            let id = replay.push(ReplayEntry { obs: obs.clone(), action: *action, ret });
            first.get_or_insert(id);
        }
        ReplaySpan { first: first.unwrap_or(0), len: steps.len() }
    }

    /// Adds a reward delivered after the last step of a stored trajectory.
    pub fn amend(&mut self, span: ReplaySpan, bonus: f64) {
        let Some(replay) = self.replay.as_mut() else { return };
        for i in 0..span.len {
            let discount = self.cfg.gamma.powi((span.len - 1 - i) as i32);
            replay.amend_return(span.first + i as u64, discount * bonus);
        }
    }

    fn flush_rollout(&mut self, tail: f64, rng: &mut impl Rng) {
        let steps = std::mem::take(&mut self.rollout);
        let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
        let returns = discounted_returns(&rewards, self.cfg.gamma, tail);
        let rows: Vec<&[f64]> = steps.iter().map(|s| s.obs.as_slice()).collect();
        let actions: Vec<usize> = steps.iter().map(|s| s.action).collect();
        self.a2c_update(stack(&rows).view(), &actions, &returns).expect("rollout batch is well formed");
        self.sil_train(rng);
    }

    /// One actor-critic step on a batch of n-step returns.
    pub fn a2c_update(&mut self, obs: ArrayView2<f64>, actions: &[usize], returns: &[f64]) -> Result<f64, WorkerError> {
        let w = LossWeights::from_config(&self.cfg);
        let out = a2c_loss(&self.policy, &self.value, &Batch { obs, actions, returns, weights: None }, &w)?;
        self.policy_opt.step(&mut self.policy, &out.policy);
        self.value_opt.step(&mut self.value, &out.value);
        Ok(out.loss)
    }

    /// Runs the configured number of self-imitation updates.
    pub fn sil_train(&mut self, rng: &mut impl Rng) {
        let Some(replay) = self.replay.as_mut() else { return };
        if replay.len() < self.cfg.min_replay.max(1) {
            return;
        }
        let w = LossWeights::from_config(&self.cfg);
        let n = self.cfg.sil_batch.min(replay.len());
        for _ in 0..self.cfg.sil_updates {
            let samples = replay.sample(n, rng);
            let rows: Vec<&[f64]> = samples.iter().map(|s| replay.entry(s.slot).obs.as_slice()).collect();
            let obs = stack(&rows);
            let actions: Vec<usize> = samples.iter().map(|s| replay.entry(s.slot).action).collect();
            let returns: Vec<f64> = samples.iter().map(|s| replay.entry(s.slot).ret).collect();
            let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
            let batch = Batch { obs: obs.view(), actions: &actions, returns: &returns, weights: Some(&weights) };
            let out = sil_loss(&self.policy, &self.value, &batch, &w).expect("replay batch is well formed");
            for (s, adv) in samples.iter().zip(&out.advantages) {
                replay.update_priority(s.slot, adv.max(0.0));
            }
            if out.advantages.iter().all(|a| *a <= 0.0) {
                continue;
            }
            self.policy_opt.step(&mut self.policy, &out.policy);
            self.value_opt.step(&mut self.value, &out.value);
        }
    }
}
