//! The discovered region graph: regions, neighbor edges and their navigation options.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compression::{CompressionSpec, RegionId};
use crate::options::OptionId;
use crate::persist::{self, PersistError};
use crate::workers::Worker;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// Attempt and success counts of one navigation option.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeStats {
    pub attempts: u64,
    pub successes: u64,
}

impl EdgeStats {
    /// Empirical success probability; `None` before the first attempt.
    pub fn success_rate(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.successes as f64 / self.attempts as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavigateOption {
    pub worker: Worker,
    pub stats: EdgeStats,
}

/// Regions only ever get added. Every region owns one exploration option;
/// every edge owns one navigation option.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionGraph {
    regions: BTreeSet<RegionId>,
    edges: BTreeMap<RegionId, BTreeMap<RegionId, NavigateOption>>,
}

const FILE_KIND: &str = "region-graph";

#[derive(Serialize, Deserialize)]
struct GraphFile {
    compression: CompressionSpec,
    graph: RegionGraph,
}

impl RegionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a region. Returns true if it was new.
    pub fn add_region(&mut self, z: RegionId) -> bool {
        self.regions.insert(z)
    }

    pub fn contains(&self, z: RegionId) -> bool {
        self.regions.contains(&z)
    }

    pub fn regions(&self) -> impl Iterator<Item = RegionId> + '_ {
        self.regions.iter().copied()
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(BTreeMap::len).sum()
    }

    /// Records an observed move from `z` into `to`, adding the destination
    /// region and the edge with a fresh worker from `make_worker` if needed.
    /// Returns `(new_region, new_edge)`.
    pub fn observe_transition(
        &mut self,
        z: RegionId,
        to: RegionId,
        make_worker: impl FnOnce() -> Worker,
    ) -> Result<(bool, bool), GraphError> {
        if !self.contains(z) {
            return Err(GraphError::Usage(format!("region {z} is not registered")));
        }
        if z == to {
            return Err(GraphError::Usage(format!("transition from region {z} to itself")));
        }
        let new_region = self.regions.insert(to);
        let out = self.edges.entry(z).or_default();
        let new_edge = !out.contains_key(&to);
        if new_edge {
            out.insert(to, NavigateOption { worker: make_worker(), stats: EdgeStats::default() });
        }
        Ok((new_region, new_edge))
    }

    /// Counts one execution of the navigation option on `z -> to`.
    pub fn record_option_outcome(&mut self, z: RegionId, to: RegionId, success: bool) -> Result<EdgeStats, GraphError> {
        let edge = self.edge_mut(z, to).ok_or_else(|| GraphError::Usage(format!("unknown edge {z}->{to}")))?;
        edge.stats.attempts += 1;
        if success {
            edge.stats.successes += 1;
        }
        Ok(edge.stats)
    }

    pub fn edge(&self, z: RegionId, to: RegionId) -> Option<&NavigateOption> {
        self.edges.get(&z)?.get(&to)
    }

    pub fn edge_mut(&mut self, z: RegionId, to: RegionId) -> Option<&mut NavigateOption> {
        self.edges.get_mut(&z)?.get_mut(&to)
    }

    pub fn neighbors(&self, z: RegionId) -> impl Iterator<Item = RegionId> + '_ {
        self.edges.get(&z).into_iter().flat_map(|m| m.keys().copied())
    }

    pub fn edges(&self) -> impl Iterator<Item = (RegionId, RegionId, &NavigateOption)> {
        self.edges.iter().flat_map(|(z, m)| m.iter().map(move |(to, o)| (*z, *to, o)))
    }

    pub fn edges_mut(&mut self) -> impl Iterator<Item = (RegionId, RegionId, &mut NavigateOption)> {
        self.edges.iter_mut().flat_map(|(z, m)| m.iter_mut().map(move |(to, o)| (*z, *to, o)))
    }

    /// Exploration option followed by the navigation options of `z`.
    pub fn options(&self, z: RegionId) -> Vec<OptionId> {
        let mut out = vec![OptionId::Explore(z)];
        out.extend(self.neighbors(z).map(|to| OptionId::Navigate { from: z, to }));
        out
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph regions {\n");
        for z in &self.regions {
            writeln!(s, "  r{z} [label=\"{z}\"];").expect("writing to a string");
        }
        for (z, to, o) in self.edges() {
            let label = match o.stats.success_rate() {
                Some(p) => format!("{p:.2} ({})", o.stats.attempts),
                None => "-".to_string(),
            };
            writeln!(s, "  r{z} -> r{to} [label=\"{label}\"];").expect("writing to a string");
        }
        s.push_str("}\n");
        s
    }

    pub fn save(&self, compression: &CompressionSpec, path: &Path) -> Result<(), GraphError> {
        #[derive(Serialize)]
        struct Out<'a> {
            compression: &'a CompressionSpec,
            graph: &'a RegionGraph,
        }
        persist::save(FILE_KIND, &Out { compression, graph: self }, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(RegionGraph, CompressionSpec), GraphError> {
        let file: GraphFile = persist::load(FILE_KIND, path)?;
        file.graph.validate()?;
        Ok((file.graph, file.compression))
    }

    fn validate(&self) -> Result<(), GraphError> {
        for (z, to, o) in self.edges() {
            if !self.contains(z) || !self.contains(to) || z == to {
                return Err(GraphError::Usage(format!("edge {z}->{to} has an unregistered endpoint")));
            }
            if o.stats.successes > o.stats.attempts {
                return Err(GraphError::Usage(format!("edge {z}->{to} has more successes than attempts")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, Pos};
    use crate::workers::{TabularConfig, TabularWorker};

    fn tab() -> Worker {
        Worker::Tabular(TabularWorker::new(TabularConfig::default()))
    }

    #[test]
    fn first_discovery_then_idempotent() {
        let mut g = RegionGraph::new();
        g.add_region(1);
        assert_eq!(g.observe_transition(1, 2, tab).unwrap(), (true, true));
        assert_eq!(g.observe_transition(1, 2, tab).unwrap(), (false, false));
        assert_eq!(g.observe_transition(2, 1, tab).unwrap(), (false, true));
    }

    #[test]
    fn unknown_source_region_is_rejected() {
        let mut g = RegionGraph::new();
        assert!(matches!(g.observe_transition(3, 4, tab), Err(GraphError::Usage(_))));
    }

    #[test]
    fn example_graph_has_five_regions_and_seven_edges() {
        let mut g = RegionGraph::new();
        g.add_region(1);
        for (a, b) in [(1, 2), (2, 3), (3, 2), (2, 4), (4, 5), (5, 4), (3, 5)] {
            g.observe_transition(a, b, tab).unwrap();
        }
        assert_eq!((g.region_count(), g.edge_count()), (5, 7));
    }

    #[test]
    fn success_rate_is_a_ratio() {
        let mut g = RegionGraph::new();
        g.add_region(1);
        g.observe_transition(1, 2, tab).unwrap();
        assert_eq!(g.edge(1, 2).unwrap().stats.success_rate(), None);
        for s in [true, true, false, true] {
            g.record_option_outcome(1, 2, s).unwrap();
        }
        assert_eq!(g.edge(1, 2).unwrap().stats.success_rate(), Some(0.75));
        assert!(g.record_option_outcome(2, 1, true).is_err());
    }

    #[test]
    fn save_load_round_trip_and_truncation() {
        let mut g = RegionGraph::new();
        g.add_region(0);
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 4)] {
            g.observe_transition(a, b, tab).unwrap();
        }
        if let Worker::Tabular(w) = &mut g.edge_mut(0, 1).unwrap().worker {
            w.update(Pos::new(1, 1), Action::Right, 0.1 + 0.2, None);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        let spec = CompressionSpec::four_rooms();
        g.save(&spec, &path).unwrap();
        let (back, back_spec) = RegionGraph::load(&path).unwrap();
        assert_eq!(back, g);
        assert_eq!(back_spec, spec);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(RegionGraph::load(&path), Err(GraphError::Persist(PersistError::Corrupt { .. }))));
    }

    #[test]
    fn dot_output_lists_edges() {
        let mut g = RegionGraph::new();
        g.add_region(0);
        g.observe_transition(0, 1, tab).unwrap();
        let dot = g.to_dot();
        assert!(dot.contains("r0 -> r1"));
        assert!(dot.starts_with("digraph"));
    }
}
