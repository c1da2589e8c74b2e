//! Tabular Q-learning over the cells of one region.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, Pos};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self { alpha: 0.1, epsilon: 0.1, gamma: 0.99 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularWorker {
    pub cfg: TabularConfig,
    #[serde(with = "crate::serde_pairs")]
    q: BTreeMap<Pos, [f64; Action::COUNT]>,
}

impl TabularWorker {
    pub fn new(cfg: TabularConfig) -> Self {
        Self { cfg, q: BTreeMap::new() }
    }

    pub fn values(&self, s: Pos) -> [f64; Action::COUNT] {
        self.q.get(&s).copied().unwrap_or([0.0; Action::COUNT])
    }

    pub fn q(&self, s: Pos, a: Action) -> f64 {
        self.values(s)[a.index()]
    }

    pub fn value(&self, s: Pos) -> f64 {
        self.values(s).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn states(&self) -> impl Iterator<Item = &Pos> {
        self.q.keys()
    }

    /// Epsilon-greedy action; exact ties are broken uniformly at random.
    pub fn act(&self, s: Pos, greedy: bool, rng: &mut impl Rng) -> Action {
        let eps = if greedy { 0.0 } else { self.cfg.epsilon };
        if eps > 0.0 && rng.gen::<f64>() < eps {
            return Action::random(rng);
        }
        let values = self.values(s);
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..Action::COUNT).filter(|&i| values[i] == best).collect();
        let pick = if ties.len() == 1 { ties[0] } else { ties[rng.gen_range(0..ties.len())] };
        Action::from_index(pick)
    }

    /// One Q-learning step. `next = None` marks a terminal transition.
    pub fn update(&mut self, s: Pos, a: Action, reward: f64, next: Option<Pos>) {
        let bootstrap = next.map_or(0.0, |n| self.value(n));
        let target = reward + self.cfg.gamma * bootstrap;
        let entry = self.q.entry(s).or_insert([0.0; Action::COUNT]);
        entry[a.index()] += self.cfg.alpha * (target - entry[a.index()]);
    }

    /// Adds a delayed reward to an already updated transition.
    pub fn add_reward(&mut self, s: Pos, a: Action, bonus: f64) {
        let entry = self.q.entry(s).or_insert([0.0; Action::COUNT]);
        entry[a.index()] += self.cfg.alpha * bonus;
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn exit_update_with_half_learning_rate() {
        let mut w = TabularWorker::new(TabularConfig { alpha: 0.5, ..Default::default() });
        w.update(Pos::new(1, 1), Action::Right, 0.8, None);
        assert_eq!(w.q(Pos::new(1, 1), Action::Right), 0.4);
    }

    #[test]
    fn zero_reward_interior_step_leaves_zero_table() {
        let mut w = TabularWorker::new(TabularConfig::default());
        w.update(Pos::new(1, 1), Action::Up, 0.0, Some(Pos::new(1, 0)));
        assert_eq!(w.value(Pos::new(1, 1)), 0.0);
    }

    #[test]
    fn greedy_picks_unique_argmax() {
        let mut w = TabularWorker::new(TabularConfig { alpha: 1.0, epsilon: 0.0, gamma: 0.9 });
        w.update(Pos::new(0, 0), Action::Left, 1.0, None);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(w.act(Pos::new(0, 0), false, &mut rng), Action::Left);
        }
    }

    #[test]
    fn ties_are_broken_uniformly() {
        let w = TabularWorker::new(TabularConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[w.act(Pos::new(0, 0), true, &mut rng).index()] += 1;
        }
        assert!(counts.iter().all(|c| (*c as f64 / 40_000.0 - 0.25).abs() < 0.02));
    }

    #[test]
    fn bonus_moves_q_by_alpha_times_bonus() {
        let mut w = TabularWorker::new(TabularConfig { alpha: 0.25, ..Default::default() });
        w.add_reward(Pos::new(2, 2), Action::Down, 0.8);
        assert!((w.q(Pos::new(2, 2), Action::Down) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let mut w = TabularWorker::new(TabularConfig::default());
        w.update(Pos::new(3, 4), Action::Down, 0.123456789, None);
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(serde_json::from_str::<TabularWorker>(&json).unwrap(), w);
    }
}
