//! Batch CLI over the kermab library.
//!
//! * `run` executes a seeded experiment from a config file or preset and
//!   writes `trials.csv`, `actions.csv`, `summary.csv`, and `meta.txt`
//!   (plus `failures.csv` when individual trials fail).
//! * `graph-info` prints size, connectivity, and spectral gap of the
//!   configured communication graph.
//! * `plot` renders mean cumulative-regret curves with ±1 std bands from
//!   one or more `summary.csv` files into a single SVG.

mod output;
mod svg;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kermab::config::{preset, preset_names, ExperimentConfig};
use kermab::simcore::{build_graph, run_experiment, TrialConfig};

#[derive(Parser)]
#[command(name = "kermab", version, about = "Kernelized multi-agent bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ConfigSource {
    /// Path to a TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Name of a built-in preset (paper_small, paper_complete, paper_er).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV outputs.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Print n, |E|, connectivity, and lambda2 of the configured graph.
    GraphInfo {
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Plot one or more summary.csv files as an SVG.
    Plot {
        /// summary.csv files, one curve per file.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(source: &ConfigSource) -> Result<ExperimentConfig> {
    let mut cfg = match (&source.config, &source.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            ExperimentConfig::from_toml(&text)?
        }
        (None, Some(name)) => preset(name).ok_or_else(|| {
            anyhow::anyhow!(
                "unknown preset {name:?}; available: {}",
                preset_names().join(", ")
            )
        })?,
        _ => unreachable!("clap enforces exactly one source"),
    };
    if let Ok(value) = std::env::var("KERMAB_SEED") {
        cfg.sim.base_seed = value
            .parse()
            .with_context(|| format!("KERMAB_SEED must be an integer, got {value:?}"))?;
    }
    Ok(cfg)
}

fn cmd_run(source: &ConfigSource, out: &PathBuf) -> Result<()> {
    let cfg = load_config(source)?;
    // Validate paths before any work happens.
    if let Some(path) = &cfg.graph.edge_list_path {
        if !std::path::Path::new(path).is_file() {
            bail!("graph.edge_list_path {path:?} does not exist");
        }
    }
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;

    let template = TrialConfig::from_experiment(&cfg, 0);
    let outcomes = run_experiment(
        &template,
        cfg.sim.n_trials,
        cfg.sim.base_seed,
        cfg.sim.parallel,
    );
    let n_failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    output::write_run_outputs(out, &cfg, &outcomes)?;
    println!(
        "wrote {} ({} trials, {} failed)",
        out.display(),
        outcomes.len(),
        n_failed
    );
    Ok(())
}

fn cmd_graph_info(source: &ConfigSource) -> Result<()> {
    let cfg = load_config(source)?;
    let graph = build_graph(&cfg.graph)?;
    println!("n={}", graph.n());
    println!("edges={}", graph.edge_count());
    println!("connected={}", graph.is_connected());
    if graph.is_connected() {
        let mats = kermab::netgraph::perron_matrix(&graph)?;
        println!("lambda2={:.6}", mats.lambda2);
    }
    Ok(())
}

fn cmd_plot(inputs: &[PathBuf], out: &PathBuf) -> Result<()> {
    let mut series = Vec::new();
    for path in inputs {
        series.push(output::read_summary(path)?);
    }
    let labels = svg::series_labels(inputs);
    let rendered = svg::render_regret_plot(&series, &labels);
    std::fs::write(out, rendered)
        .with_context(|| format!("cannot write {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { source, out } => cmd_run(source, out),
        Command::GraphInfo { source } => cmd_graph_info(source),
        Command::Plot { inputs, out } => cmd_plot(inputs, out),
    }
}
