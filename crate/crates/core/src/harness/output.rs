//! CSV output and cross-seed aggregation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::run::{mean_std, CurveRow};
use super::HarnessError;

/// Version of every CSV layout written by the harness.
pub const SCHEMA_VERSION: u32 = 1;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| HarnessError::csv(path, e))
}

/// Mean and spread across seeds at one point of one agent's curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub agent: String,
    pub task: u32,
    pub step: u64,
    pub global_step: u64,
    pub seeds: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_success: f64,
    pub std_success: f64,
    pub mean_regions: f64,
    /// Mean over the seeds that recorded a death rate.
    pub mean_death_rate: Option<f64>,
}

/// Value of the curve at `step`: the last row at or before it.
fn at_step(rows: &[&CurveRow], step: u64) -> Option<CurveRow> {
    rows.iter().take_while(|r| r.step <= step).last().map(|r| (*r).clone())
}

/// Aggregates per-seed curves into mean ± std per (agent, task, step).
///
/// Seeds whose evaluation grids differ are resampled onto the coarsest grid,
/// taking the most recent evaluation at or before each grid step.
pub fn aggregate(rows: &[CurveRow]) -> Result<Vec<AggregateRow>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Usage("nothing to aggregate".into()));
    }
    let mut groups: BTreeMap<(String, u32), BTreeMap<u64, Vec<&CurveRow>>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.agent.clone(), r.task)).or_default().entry(r.seed).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((agent, task), mut seeds) in groups {
        for curve in seeds.values_mut() {
            curve.sort_by_key(|r| r.step);
        }
        let grid: Vec<u64> = seeds
            .values()
            .min_by_key(|c| c.len())
            .map(|c| c.iter().map(|r| r.step).collect())
            .unwrap_or_default();
        if seeds.values().any(|c| c.iter().map(|r| r.step).ne(grid.iter().copied())) {
            log::warn!("{agent} task {task}: evaluation grids differ, resampling to {} points", grid.len());
        }
        for step in grid {
            let at: Vec<CurveRow> = seeds.values().filter_map(|c| at_step(c, step)).collect();
            if at.is_empty() {
                continue;
            }
            let returns: Vec<f64> = at.iter().map(|r| r.mean_return).collect();
            let success: Vec<f64> = at.iter().map(|r| r.success_rate).collect();
            let regions: Vec<f64> = at.iter().map(|r| r.regions as f64).collect();
            let deaths: Vec<f64> = at.iter().filter_map(|r| r.death_rate).collect();
            let (mean_return, std_return) = mean_std(&returns);
            let (mean_success, std_success) = mean_std(&success);
            out.push(AggregateRow {
                agent: agent.clone(),
                task,
                step,
                global_step: at[0].global_step - at[0].step + step,
                seeds: at.len(),
                mean_return,
                std_return,
                mean_success,
                std_success,
                mean_regions: mean_std(&regions).0,
                mean_death_rate: (!deaths.is_empty()).then(|| mean_std(&deaths).0),
            });
        }
    }
    Ok(out)
}

/// Per-seed curve files below `dir`, in sorted order.
pub fn find_curve_files(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| HarnessError::io(&d, e))? {
            let path = entry.map_err(|e| HarnessError::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if is_curve_file(&path) {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

fn is_curve_file(path: &Path) -> bool {
    let Some(name) = path.file_name().and_then(|n| n.to_str()) else { return false };
    let Some(rest) = name.strip_prefix("seed-").and_then(|r| r.strip_suffix(".csv")) else { return false };
    rest.chars().all(|c| c.is_ascii_digit()) && !rest.is_empty()
}
