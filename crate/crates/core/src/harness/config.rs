//! Run configuration: experiment, agents, budgets and module settings.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agent::HrlConfig;
use crate::baselines::FlatConfig;
use crate::compression::CompressionSpec;
use crate::env::RewardMode;
use crate::workers::WorkerKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    ExplorationKdt1,
    ExplorationKdt2,
    Transfer,
    Controllability,
}

impl ExperimentId {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentId::ExplorationKdt1 => "exploration-kdt1",
            ExperimentId::ExplorationKdt2 => "exploration-kdt2",
            ExperimentId::Transfer => "transfer",
            ExperimentId::Controllability => "controllability",
        }
    }
}

impl FromStr for ExperimentId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [ExperimentId::ExplorationKdt1, ExperimentId::ExplorationKdt2, ExperimentId::Transfer, ExperimentId::Controllability]
            .into_iter()
            .find(|e| e.label() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment {s:?}")))
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Learner family behind an agent label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentBase {
    /// Hierarchical agent with self-imitation workers.
    HrlSil,
    /// Hierarchical agent with tabular workers.
    HrlTab,
    /// Hierarchical agent with tabular workers and the controllability bonus.
    HrlCo,
    /// Hierarchical agent with the configured worker kind.
    Hrl,
    Sil,
    SilExp,
}

/// An agent label such as `HRL-SIL` or `NO-TRANSFER-SIL-EXP`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentLabel {
    pub base: AgentBase,
    /// Retrains from scratch on every transfer task.
    pub no_transfer: bool,
}

const BASES: [(AgentBase, &str); 6] = [
    (AgentBase::HrlSil, "HRL-SIL"),
    (AgentBase::HrlTab, "HRL-TAB"),
    (AgentBase::HrlCo, "HRL-CO"),
    (AgentBase::Hrl, "HRL"),
    (AgentBase::SilExp, "SIL-EXP"),
    (AgentBase::Sil, "SIL"),
];

const NO_TRANSFER: &str = "NO-TRANSFER-";

impl AgentLabel {
    pub const fn new(base: AgentBase) -> Self {
        Self { base, no_transfer: false }
    }

    pub const fn no_transfer(base: AgentBase) -> Self {
        Self { base, no_transfer: true }
    }

    pub fn is_hierarchical(&self) -> bool {
        !matches!(self.base, AgentBase::Sil | AgentBase::SilExp)
    }

    pub fn hrl_config(&self, base: &HrlConfig) -> HrlConfig {
        let mut cfg = *base;
        match self.base {
            AgentBase::HrlSil => cfg.worker.kind = WorkerKind::Sil,
            AgentBase::HrlTab => cfg.worker.kind = WorkerKind::Tabular,
            AgentBase::HrlCo => {
                cfg.worker.kind = WorkerKind::Tabular;
                cfg.controllability = true;
            }
            AgentBase::Hrl | AgentBase::Sil | AgentBase::SilExp => {}
        }
        cfg
    }

    pub fn flat_config(&self, base: &FlatConfig, beta: f64) -> FlatConfig {
        let bonus = matches!(self.base, AgentBase::SilExp).then_some(beta);
        FlatConfig { bonus, ..*base }
    }

    /// File-system friendly form of the label.
    pub fn slug(&self) -> String {
        self.to_string().to_ascii_lowercase()
    }
}

impl fmt::Display for AgentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = BASES.iter().find(|(b, _)| *b == self.base).map(|(_, n)| *n).expect("every base has a name");
        if self.no_transfer {
            f.write_str(NO_TRANSFER)?;
        }
        f.write_str(name)
    }
}

impl FromStr for AgentLabel {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        let (no_transfer, rest) = match upper.strip_prefix(NO_TRANSFER) {
            Some(r) => (true, r),
            None => (false, upper.as_str()),
        };
        BASES
            .iter()
            .find(|(_, n)| *n == rest)
            .map(|(base, _)| AgentLabel { base: *base, no_transfer })
            .ok_or_else(|| HarnessError::Config(format!("unknown agent {s:?}")))
    }
}

impl Serialize for AgentLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentId,
    pub agents: Vec<AgentLabel>,
    /// Environment steps per run; per task in the transfer experiment.
    pub steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: u32,
    pub seeds: Vec<u64>,
    /// Reward modes of the exploration experiments. Empty means both.
    pub reward_modes: Vec<RewardMode>,
    /// Overrides the action noise of every environment.
    pub noise: Option<f64>,
    /// Count bonus scale of SIL-EXP.
    pub bonus_beta: f64,
    /// Replaces the layout's default region grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compression: Option<CompressionSpec>,
    pub hrl: HrlConfig,
    pub flat: FlatConfig,
    pub output_dir: PathBuf,
    /// Writes the option event log of hierarchical agents.
    pub log_events: bool,
    /// Saves the trained agents and region graphs.
    pub save_agents: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentId::ExplorationKdt1,
            agents: vec![AgentLabel::new(AgentBase::HrlTab), AgentLabel::new(AgentBase::Sil), AgentLabel::new(AgentBase::SilExp)],
            steps: 100_000,
            eval_interval: 2_000,
            eval_episodes: 20,
            seeds: (0..5).collect(),
            reward_modes: Vec::new(),
            noise: None,
            bonus_beta: 0.2,
            compression: None,
            hrl: HrlConfig::default(),
            flat: FlatConfig::default(),
            output_dir: PathBuf::from("results"),
            log_events: false,
            save_agents: false,
        }
    }
}

impl RunConfig {
    /// Defaults for `experiment`: its agent set and reward modes.
    pub fn for_experiment(experiment: ExperimentId) -> Self {
        use AgentBase::*;
        let agents = match experiment {
            ExperimentId::ExplorationKdt1 | ExperimentId::ExplorationKdt2 => {
                vec![AgentLabel::new(HrlTab), AgentLabel::new(Sil), AgentLabel::new(SilExp)]
            }
            ExperimentId::Transfer => vec![
                AgentLabel::new(HrlTab),
                AgentLabel::no_transfer(HrlTab),
                AgentLabel::new(SilExp),
                AgentLabel::no_transfer(SilExp),
            ],
            ExperimentId::Controllability => vec![AgentLabel::new(HrlCo), AgentLabel::new(Hrl)],
        };
        Self { experiment, agents, ..Self::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reward modes to run: the configured ones for exploration, otherwise
    /// the experiment's fixed mode.
    pub fn modes(&self) -> Vec<RewardMode> {
        match self.experiment {
            ExperimentId::ExplorationKdt1 | ExperimentId::ExplorationKdt2 if self.reward_modes.is_empty() => {
                vec![RewardMode::AllObjects, RewardMode::TerminalOnly]
            }
            ExperimentId::ExplorationKdt1 | ExperimentId::ExplorationKdt2 => self.reward_modes.clone(),
            ExperimentId::Transfer => vec![RewardMode::AllObjects],
            ExperimentId::Controllability => vec![RewardMode::TerminalOnly],
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.steps == 0 {
            return bad("steps must be positive".into());
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be positive".into());
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.agents.is_empty() {
            return bad("at least one agent is required".into());
        }
        if let Some(n) = self.noise {
            if !(0.0..=1.0).contains(&n) {
                return bad(format!("noise {n} outside [0, 1]"));
            }
        }
        if !(self.bonus_beta >= 0.0 && self.bonus_beta.is_finite()) {
            return bad(format!("bonus_beta {} must be a non-negative number", self.bonus_beta));
        }
        if let Some(c) = &self.compression {
            c.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        for a in &self.agents {
            if a.no_transfer && self.experiment != ExperimentId::Transfer {
                return bad(format!("{a} only applies to the transfer experiment"));
            }
            if self.experiment == ExperimentId::Controllability && !a.is_hierarchical() {
                return bad(format!("{a} has no options to measure controllability on"));
            }
        }
        if !matches!(self.experiment, ExperimentId::ExplorationKdt1 | ExperimentId::ExplorationKdt2)
            && !self.reward_modes.is_empty()
        {
            return bad(format!("{} uses a fixed reward mode", self.experiment));
        }
        Ok(())
    }
}
