use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hrl_core::compression::CompressionSpec;
use hrl_core::env::{EnvConfig, GridEnv, LayoutId, Pos, RewardMode};
use hrl_core::graph::RegionGraph;
use hrl_core::harness::{self, evaluate, write_csv, AgentLabel, ExperimentId, Learner, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "hrl", version, about = "Train and evaluate region-graph option agents on gridworld tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write curves, edge statistics and aggregates.
    Run(RunArgs),
    /// Evaluate a saved agent with greedy behavior.
    Eval(EvalArgs),
    /// Recompute aggregate curves from per-seed CSV files.
    Aggregate(AggregateArgs),
    /// Print a saved region graph.
    DumpGraph(DumpGraphArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// exploration-kdt1, exploration-kdt2, transfer or controllability.
    #[arg(long)]
    experiment: Option<ExperimentId>,
    /// Comma-separated agent labels, e.g. HRL-TAB,SIL-EXP.
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<AgentLabel>>,
    /// Environment steps per run (per task for transfer).
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<u32>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated reward modes for the exploration experiments.
    #[arg(long, value_delimiter = ',')]
    reward_modes: Option<Vec<RewardMode>>,
    /// Action noise for every environment.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    bonus_beta: Option<f64>,
    /// Region cell size as WIDTHxHEIGHT, e.g. 4x4.
    #[arg(long, value_parser = parse_cell_size)]
    region_size: Option<(i32, i32)>,
    /// Origin of the region grid as X,Y.
    #[arg(long, value_parser = parse_pos, requires = "region_size")]
    region_origin: Option<Pos>,
    /// Output root directory.
    #[arg(long, env = "HRL_OUTPUT_ROOT")]
    output: Option<PathBuf>,
    #[arg(long)]
    log_events: bool,
    #[arg(long)]
    save_agents: bool,
    /// Sets any nested field by dotted path, e.g. hrl.manager.alpha=0.2.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Agent file written by `run --save-agents`.
    agent: PathBuf,
    /// TOML environment configuration.
    #[arg(long, conflicts_with = "layout")]
    env: Option<PathBuf>,
    /// Built-in layout: kdt1, kdt2 or hazard.
    #[arg(long, value_parser = parse_layout, default_value = "kdt1")]
    layout: LayoutId,
    #[arg(long)]
    reward_mode: Option<RewardMode>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 20)]
    episodes: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct AggregateArgs {
    /// Directory searched recursively for seed-N.csv files.
    dir: PathBuf,
    /// Output file; defaults to <dir>/aggregate.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Dot,
    Csv,
}

#[derive(clap::Args)]
struct DumpGraphArgs {
    graph: PathBuf,
    #[arg(long, value_enum, default_value = "dot")]
    format: GraphFormat,
}

fn parse_layout(s: &str) -> Result<LayoutId, String> {
    LayoutId::parse(s).map_err(|e| e.to_string())
}

fn parse_cell_size(s: &str) -> Result<(i32, i32), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w = w.parse().map_err(|e| format!("width: {e}"))?;
    let h = h.parse().map_err(|e| format!("height: {e}"))?;
    Ok((w, h))
}

fn parse_pos(s: &str) -> Result<Pos, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
    Ok(Pos::new(x.parse().map_err(|e| format!("x: {e}"))?, y.parse().map_err(|e| format!("y: {e}"))?))
}

/// Sets `path` (dot separated) in `table` to `raw`, read as a TOML value or
/// else as a bare string.
fn set_path(table: &mut toml::Table, path: &str, raw: &str) -> Result<()> {
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).with_context(|| format!("empty path in {path:?}"))?;
    let mut cur = table;
    for k in keys {
        cur = cur
            .entry(k)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .with_context(|| format!("{k} in {path:?} is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match (&args.config, args.experiment) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_toml(&text)?
        }
        (None, Some(e)) => RunConfig::for_experiment(e),
        (None, None) => RunConfig::default(),
    };
    if let Some(e) = args.experiment {
        if args.config.is_some() && e != cfg.experiment && args.agents.is_none() {
            cfg.agents = RunConfig::for_experiment(e).agents;
        }
        cfg.experiment = e;
    }
    if !args.overrides.is_empty() {
        let mut table = toml::Table::try_from(&cfg).context("serializing configuration")?;
        for o in &args.overrides {
            let (path, raw) = o.split_once('=').with_context(|| format!("expected PATH=VALUE, got {o:?}"))?;
            set_path(&mut table, path.trim(), raw.trim())?;
        }
        cfg = RunConfig::from_toml(&toml::to_string(&table)?)?;
    }
    if let Some(a) = &args.agents {
        cfg.agents = a.clone();
    }
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    if let Some(i) = args.eval_interval {
        cfg.eval_interval = i;
    }
    if let Some(n) = args.eval_episodes {
        cfg.eval_episodes = n;
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(m) = &args.reward_modes {
        cfg.reward_modes = m.clone();
    }
    if args.noise.is_some() {
        cfg.noise = args.noise;
    }
    if let Some(b) = args.bonus_beta {
        cfg.bonus_beta = b;
    }
    if let Some((w, h)) = args.region_size {
        let origin = args.region_origin.unwrap_or(Pos::new(0, 0));
        cfg.compression = Some(CompressionSpec::new(w, h, origin)?);
    }
    if let Some(o) = &args.output {
        cfg.output_dir = o.clone();
    }
    cfg.log_events |= args.log_events;
    cfg.save_agents |= args.save_agents;
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = resolve_config(&args)?;
    if args.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let result = harness::run_experiment(&cfg)?;
    for v in &result.variants {
        println!("{}", v.mode.label());
        for row in v.aggregate.iter().filter(|r| {
            v.aggregate.iter().filter(|o| o.agent == r.agent && o.task == r.task).all(|o| o.step <= r.step)
        }) {
            println!(
                "  {:<22} task {} step {:>7}: return {:.3} ± {:.3}, success {:.2}",
                row.agent, row.task, row.step, row.mean_return, row.std_return, row.mean_success
            );
        }
    }
    println!("results in {}", result.root.display());
    Ok(())
}

fn load_env(args: &EvalArgs) -> Result<EnvConfig> {
    let mut cfg = match &args.env {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => EnvConfig::for_layout(args.layout),
    };
    if let Some(m) = args.reward_mode {
        cfg.reward_mode = m;
    }
    if let Some(n) = args.noise {
        cfg.noise = n;
    }
    Ok(cfg)
}

fn eval(args: EvalArgs) -> Result<()> {
    let learner = Learner::load(&args.agent)?;
    let env = GridEnv::new(&load_env(&args)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let ev = evaluate(learner.view(), &env, args.episodes, &mut rng)?;
    println!("episodes {}", args.episodes);
    println!("mean_return {:.6}", ev.mean_return);
    println!("std_return {:.6}", ev.std_return);
    println!("success_rate {:.6}", ev.success_rate);
    println!("deaths_per_episode {:.6}", ev.deaths_per_episode);
    if let Some(d) = ev.death_rate {
        println!("death_rate {d:.6}");
    }
    Ok(())
}

fn aggregate(args: AggregateArgs) -> Result<()> {
    let rows = harness::aggregate_dir(&args.dir)?;
    let out = args.out.unwrap_or_else(|| args.dir.join("aggregate.csv"));
    write_csv(&out, &rows)?;
    println!("{} rows written to {}", rows.len(), out.display());
    Ok(())
}

fn dump_graph(args: DumpGraphArgs) -> Result<()> {
    let (graph, compression) = RegionGraph::load(&args.graph)?;
    match args.format {
        GraphFormat::Dot => print!("{}", graph.to_dot()),
        GraphFormat::Csv => print!("{}", graph_csv(&graph, &compression)),
    }
    Ok(())
}

fn graph_csv(graph: &RegionGraph, compression: &CompressionSpec) -> String {
    let mut s = format!(
        "# cells {}x{} origin {}\nfrom,to,attempts,successes,success_rate\n",
        compression.cell_width, compression.cell_height, compression.origin
    );
    for (from, to, o) in graph.edges() {
        let rate = o.stats.success_rate().map(|p| p.to_string()).unwrap_or_default();
        s.push_str(&format!("{from},{to},{},{},{rate}\n", o.stats.attempts, o.stats.successes));
    }
    s
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Aggregate(a) => aggregate(a),
        Command::DumpGraph(a) => dump_graph(a),
    }
}
