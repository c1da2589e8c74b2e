//! Experiment runner: trains every configured agent on every seed, evaluates
//! on a fixed schedule and writes curves, edge statistics and aggregates.
//!
//! Output layout below the run's output directory:
//!
//! ```text
//! <experiment>/manifest.json
//! <experiment>/<reward-mode>/aggregate.csv
//! <experiment>/<reward-mode>/<agent>/seed-<n>.csv         learning curve
//! <experiment>/<reward-mode>/<agent>/seed-<n>-edges.csv   navigation edge statistics
//! <experiment>/<reward-mode>/<agent>/seed-<n>-options.csv option event log (opt-in)
//! <experiment>/<reward-mode>/<agent>/seed-<n>-task-<k>-agent.json  (opt-in)
//! ```

mod config;
mod output;
mod run;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use config::{AgentBase, AgentLabel, ExperimentId, RunConfig};
pub use output::{aggregate, find_curve_files, read_csv, write_csv, AggregateRow, SCHEMA_VERSION};
pub use run::{
    eval_points, eval_seed, evaluate, mean_std, run_seed, task_envs, CurveRow, EdgeRow, Evaluation, EventRow, Learner,
    LearnerRef, SeedRun,
};

use crate::agent::AgentError;
use crate::env::{EnvError, RewardMode};
use crate::persist::PersistError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        HarnessError::Csv { path: path.to_path_buf(), source }
    }
}

/// All seeds of all agents under one reward mode.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantResult {
    pub mode: RewardMode,
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub root: PathBuf,
    pub variants: Vec<VariantResult>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    experiment: ExperimentId,
    reward_modes: Vec<RewardMode>,
    config: &'a RunConfig,
}

/// Directory of one (agent, seed) run's files.
pub fn run_dir(root: &Path, mode: RewardMode, agent: AgentLabel) -> PathBuf {
    root.join(mode.label()).join(agent.slug())
}

/// Writes the files of one seed run into `dir`.
pub fn write_seed_run(dir: &Path, run: &SeedRun, save_agents: bool) -> Result<(), HarnessError> {
    let stem = format!("seed-{}", run.seed);
    write_csv(&dir.join(format!("{stem}.csv")), &run.rows)?;
    if run.agent.is_hierarchical() {
        write_csv(&dir.join(format!("{stem}-edges.csv")), &run.edges)?;
    }
    if !run.events.is_empty() {
        write_csv(&dir.join(format!("{stem}-options.csv")), &run.events)?;
    }
    if save_agents {
        // A learner carried across tasks is named after the last task it saw.
        let last_task = run.rows.iter().map(|r| r.task).max().unwrap_or(1);
        for (i, learner) in run.learners.iter().enumerate() {
            let task = if run.learners.len() == 1 { last_task } else { i as u32 + 1 };
            learner.save(&dir.join(format!("{stem}-task-{task}-agent.json")))?;
            if let Learner::Hrl(a) = learner {
                let graph = dir.join(format!("{stem}-task-{task}-graph.json"));
                a.graph().save(a.compression(), &graph).map_err(AgentError::from)?;
            }
        }
    }
    Ok(())
}

/// Runs the whole experiment and writes its outputs below
/// `cfg.output_dir/<experiment>`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let root = cfg.output_dir.join(cfg.experiment.label());
    std::fs::create_dir_all(&root).map_err(|e| HarnessError::io(&root, e))?;
    let manifest = Manifest { schema_version: SCHEMA_VERSION, experiment: cfg.experiment, reward_modes: cfg.modes(), config: cfg };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| HarnessError::Usage(e.to_string()))?;
    let manifest_path = root.join("manifest.json");
    std::fs::write(&manifest_path, text + "\n").map_err(|e| HarnessError::io(&manifest_path, e))?;

    let mut variants = Vec::new();
    for mode in cfg.modes() {
        let mut runs = Vec::new();
        for &agent in &cfg.agents {
            for &seed in &cfg.seeds {
                log::info!("{} {} {agent} seed {seed}", cfg.experiment, mode.label());
                let mut run = run_seed(cfg, agent, mode, seed)?;
                write_seed_run(&run_dir(&root, mode, agent), &run, cfg.save_agents)?;
                run.learners.clear();
                runs.push(run);
            }
        }
        let rows: Vec<CurveRow> = runs.iter().flat_map(|r| r.rows.iter().cloned()).collect();
        let aggregate = aggregate(&rows)?;
        write_csv(&root.join(mode.label()).join("aggregate.csv"), &aggregate)?;
        variants.push(VariantResult { mode, runs, aggregate });
    }
    Ok(ExperimentResult { root, variants })
}

/// Re-aggregates every per-seed curve found below `dir`.
pub fn aggregate_dir(dir: &Path) -> Result<Vec<AggregateRow>, HarnessError> {
    let files = find_curve_files(dir)?;
    if files.is_empty() {
        return Err(HarnessError::Usage(format!("no seed curves below {}", dir.display())));
    }
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_csv::<CurveRow>(&f)?);
    }
    aggregate(&rows)
}
