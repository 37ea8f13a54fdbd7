//! Experiment CLI for random set-function encoders.
//!
//! Every subcommand reads one INI-style config (sections `[run]`,
//! `[dataset]`, `[encoder]`, `[embed]`, `[probe]`, `[cluster]`, `[tsne]`,
//! `[decoder]`, `[table]`), applies `--set section.key=value` overrides and
//! then the dedicated flags, and writes its artifacts under the output
//! root. Reports echo the complete effective configuration so any result
//! can be reproduced from its JSON alone.
//!
//! Exit codes: 0 on success, 2 for configuration/input errors, 3 when a
//! computation produced non-finite numbers.

mod artifacts;
mod commands;
mod config;
mod pipeline;

use clap::{Args, Parser, Subcommand};
use config::Config;
use randset::{Error, Result};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "randset", version, about = "Random set-encoder experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file; flags and --set override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config entry, e.g. --set probe.epochs=50 (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Base seed every random stream is derived from ([run] seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of repeated runs to aggregate ([run] n_runs).
    #[arg(long)]
    runs: Option<usize>,
    /// Worker threads; 0 or absent leaves the default (one per core).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory root ([run] out_dir).
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the train/test splits of a dataset and cache them.
    Prepare(CommonArgs),
    /// Embed cached splits with a randomly initialized encoder.
    Embed(CommonArgs),
    /// Train classifier probes on stored embeddings.
    Probe(CommonArgs),
    /// Cluster test embeddings with k-means++ and score AMI.
    Cluster(CommonArgs),
    /// Lay out test embeddings in 2-D with exact t-SNE.
    Tsne(CommonArgs),
    /// Train a Chamfer-loss decoder and dump reconstructions.
    Reconstruct(CommonArgs),
    /// Run one benchmark grid (table1..table5) end to end.
    Table {
        /// Grid name: table1..table5 (or just 1..5).
        name: String,
        #[command(flatten)]
        common: CommonArgs,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Prepare(c)
            | Command::Embed(c)
            | Command::Probe(c)
            | Command::Cluster(c)
            | Command::Tsne(c)
            | Command::Reconstruct(c) => c,
            Command::Table { common, .. } => common,
        }
    }
}

/// File, then --set overrides, then dedicated flags; flags win.
fn assemble(common: &CommonArgs) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::new(),
    };
    for spec in &common.set {
        cfg.apply_set(spec)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("run", "seed", seed);
    }
    if let Some(runs) = common.runs {
        cfg.set("run", "n_runs", runs);
    }
    if let Some(out) = &common.out {
        cfg.set("run", "out_dir", out);
    }
    if let Some(jobs) = common.jobs {
        cfg.set("run", "jobs", jobs);
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    let common = cli.command.common();
    let mut cfg = assemble(common)?;
    if let Some(jobs) = common.jobs.filter(|&j| j > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Prepare(_) => commands::prepare::run(&mut cfg),
        Command::Embed(_) => commands::embed::run(&mut cfg),
        Command::Probe(_) => commands::probe::run(&mut cfg),
        Command::Cluster(_) => commands::cluster::run(&mut cfg),
        Command::Tsne(_) => commands::tsne::run(&mut cfg),
        Command::Reconstruct(_) => commands::reconstruct::run(&mut cfg),
        Command::Table { name, .. } => commands::table::run(&mut cfg, name),
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(if e.is_numeric() { 3 } else { 2 });
        }
    }
}
