//! CSV and metadata output for experiment runs.
//!
//! Floats are serialized with 9 significant digits. The summary statistics
//! are computed from the serialized trial values (not the full-precision
//! ones), so re-aggregating a parsed `trials.csv` reproduces `summary.csv`
//! up to its own last digit.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use kermab::config::ExperimentConfig;
use kermab::simcore::TrialOutcome;

/// 9 significant digits, `.` decimal separator, round-trippable.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

/// The float exactly as a CSV reader will see it.
fn roundtrip(x: f64) -> f64 {
    fmt_float(x).parse().expect("formatted float parses")
}

pub fn write_run_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    outcomes: &[TrialOutcome],
) -> Result<()> {
    let mut trials = String::from("trial,t,inst_regret,cum_regret\n");
    let mut actions = String::from("trial,t,agent,action_idx,reward\n");
    let mut failures = String::from("trial,error\n");
    let mut any_failed = false;
    let mut lambda2 = None;
    // Per-trial cumulative regret as serialized, for the summary.
    let mut cum_rounded: Vec<Vec<f64>> = Vec::new();

    for outcome in outcomes {
        match &outcome.result {
            Ok(record) => {
                lambda2.get_or_insert(record.lambda2);
                let mut rounded = Vec::with_capacity(record.t_horizon);
                for t in 0..record.t_horizon {
                    let _ = writeln!(
                        trials,
                        "{},{},{},{}",
                        outcome.trial,
                        t + 1,
                        fmt_float(record.inst_regret[t]),
                        fmt_float(record.cum_regret[t]),
                    );
                    rounded.push(roundtrip(record.cum_regret[t]));
                    for agent in 0..record.n_agents {
                        let _ = writeln!(
                            actions,
                            "{},{},{},{},{}",
                            outcome.trial,
                            t + 1,
                            agent,
                            record.actions[t][agent],
                            fmt_float(record.rewards[t][agent]),
                        );
                    }
                }
                cum_rounded.push(rounded);
            }
            Err(err) => {
                any_failed = true;
                let _ = writeln!(
                    failures,
                    "{},{}",
                    outcome.trial,
                    err.to_string().replace([',', '\n'], ";")
                );
            }
        }
    }

    let mut summary = String::from("t,mean_cum_regret,std_cum_regret\n");
    if let Some(first) = cum_rounded.first() {
        let n = cum_rounded.len() as f64;
        for t in 0..first.len() {
            let mean = cum_rounded.iter().map(|c| c[t]).sum::<f64>() / n;
            let var = cum_rounded
                .iter()
                .map(|c| (c[t] - mean).powi(2))
                .sum::<f64>()
                / n;
            let _ = writeln!(
                summary,
                "{},{},{}",
                t + 1,
                fmt_float(mean),
                fmt_float(var.sqrt())
            );
        }
    }

    std::fs::write(dir.join("trials.csv"), trials)?;
    std::fs::write(dir.join("actions.csv"), actions)?;
    std::fs::write(dir.join("summary.csv"), summary)?;
    if any_failed {
        std::fs::write(dir.join("failures.csv"), failures)?;
    }
    std::fs::write(dir.join("meta.txt"), render_meta(cfg, outcomes, lambda2))?;
    Ok(())
}

/// Every resolved config value, plus run provenance: versions, seeds, and
/// the spectral gap of the network actually used.
fn render_meta(cfg: &ExperimentConfig, outcomes: &[TrialOutcome], lambda2: Option<f64>) -> String {
    let mut meta = String::new();
    let _ = writeln!(meta, "# resolved configuration");
    meta.push_str(&cfg.to_toml());
    let _ = writeln!(meta, "\n# run");
    let _ = writeln!(meta, "kermab_version = \"{}\"", env!("CARGO_PKG_VERSION"));
    if let Some(l2) = lambda2 {
        let _ = writeln!(meta, "lambda2 = {}", fmt_float(l2));
    }
    let _ = writeln!(meta, "base_seed = {}", cfg.sim.base_seed);
    let seeds: Vec<String> = outcomes.iter().map(|o| o.seed.to_string()).collect();
    let _ = writeln!(meta, "trial_seeds = [{}]", seeds.join(", "));
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| o.result.is_err())
        .map(|o| o.trial.to_string())
        .collect();
    let _ = writeln!(meta, "failed_trials = [{}]", failed.join(", "));
    meta
}

/// One parsed summary curve.
#[derive(Debug, Clone)]
pub struct SummarySeries {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn read_summary(path: &Path) -> Result<SummarySeries> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "t,mean_cum_regret,std_cum_regret" => {}
        Some((_, header)) => bail!(
            "{}:1: unexpected header {header:?} (want t,mean_cum_regret,std_cum_regret)",
            path.display()
        ),
        None => bail!("{}: empty file", path.display()),
    }
    let mut series = SummarySeries {
        t: Vec::new(),
        mean: Vec::new(),
        std: Vec::new(),
    };
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            bail!(
                "{}:{}: expected 3 fields, got {}",
                path.display(),
                idx + 1,
                fields.len()
            );
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse()
                .with_context(|| format!("{}:{}: bad {what} {s:?}", path.display(), idx + 1))
        };
        series.t.push(parse(fields[0], "t")?);
        series.mean.push(parse(fields[1], "mean")?);
        series.std.push(parse(fields[2], "std")?);
    }
    if series.t.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(series)
}
