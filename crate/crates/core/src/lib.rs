pub mod compression;
pub mod env;
mod serde_pairs;
pub mod workers;
pub mod options;
pub mod graph;
pub mod manager;
pub mod persist;
pub mod agent;
pub mod baselines;
pub mod harness;
