//! `qp2loc`: batch experiments for quasi-periodic Schrödinger operators on Z².

mod commands;
mod config;
mod output;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use clap::Parser;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use commands::{Command, Job, Outcome};
use output::{csv_named, json_artifact, manifest, num, write_all, Artifact};

/// Refuse runs projected above this many solves.
const SOLVE_BUDGET: f64 = 1e6;

#[derive(Debug, Parser)]
#[command(name = "qp2loc", version, about = "Localization experiments for 2D quasi-periodic operators")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML (or `.json`) parameter file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = rayon default).
    #[arg(long, env = "QP2LOC_THREADS", default_value_t = 0)]
    threads: usize,
}

/// Failures split by exit code.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, code, e) = match f {
                Failure::Config(e) => ("config", 2, e),
                Failure::Runtime(e) => ("runtime", 1, e),
            };
            let msg = json!({ "error": kind, "command": cli.command.name(), "message": format!("{e:#}") });
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::Runtime(anyhow!(e)))?;
    }
    let mut map = config::load(&cli.config).map_err(Failure::Config)?;
    let grid = match map.remove("sweep") {
        Some(v) => Some(sweep_grid(v).map_err(Failure::Config)?),
        None => None,
    };
    let start = Instant::now();
    let mut log = String::new();
    let (effective, mut artifacts) = match &grid {
        None => {
            let job = Job::parse(cli.command, &map).map_err(Failure::Config)?;
            check_budget(job.estimate().map_err(Failure::Config)?).map_err(Failure::Config)?;
            let out = job.run(cli.seed).map_err(Failure::Runtime)?;
            (Value::Object(map), out.artifacts)
        }
        Some(g) => {
            let arts = sweep(cli, &map, g, &mut log)?;
            let mut eff = map.clone();
            eff.insert("sweep".into(), serde_json::to_value(g).map_err(|e| Failure::Runtime(e.into()))?);
            (Value::Object(eff), arts)
        }
    };
    let mut files: Vec<String> = artifacts.iter().map(|a| a.name.clone()).collect();
    files.push("manifest.json".into());
    files.sort();
    artifacts.push(manifest(cli.command.name(), &effective, cli.seed, &files).map_err(Failure::Runtime)?);
    let _ = writeln!(log, "command {}", cli.command.name());
    let _ = writeln!(log, "seed {}", cli.seed);
    let _ = writeln!(log, "threads {}", rayon::current_num_threads());
    let _ = writeln!(log, "wall_time_s {:.3}", start.elapsed().as_secs_f64());
    artifacts.push(Artifact { name: "run.log".into(), bytes: log.into_bytes() });
    write_all(&cli.out, &artifacts).map_err(Failure::Runtime)
}

fn sweep_grid(v: Value) -> Result<BTreeMap<String, Vec<f64>>> {
    serde_json::from_value(v).map_err(|e| anyhow!("invalid sweep table (expected key = [numbers]): {e}"))
}

fn check_budget(solves: f64) -> Result<()> {
    if solves > SOLVE_BUDGET {
        bail!("projected {solves:.3e} solves exceeds the budget of {SOLVE_BUDGET:.0e}; shrink the run");
    }
    Ok(())
}

/// Runs every grid point and collects one summary row per point.
fn sweep(
    cli: &Cli,
    base: &Map<String, Value>,
    grid: &BTreeMap<String, Vec<f64>>,
    log: &mut String,
) -> Result<Vec<Artifact>, Failure> {
    let points = config::sweep_points(grid);
    let mut jobs = Vec::with_capacity(points.len());
    let mut total = 0.0;
    for p in &points {
        let mut m = base.clone();
        for (k, x) in p {
            config::set_path(&mut m, k, *x).map_err(Failure::Config)?;
        }
        let job = Job::parse(cli.command, &m).map_err(Failure::Config)?;
        total += job.estimate().map_err(Failure::Config)?;
        jobs.push(job);
    }
    check_budget(total).map_err(Failure::Config)?;

    let mut header: Vec<&str> = grid.keys().map(String::as_str).collect();
    header.extend_from_slice(cli.command.summary_columns());
    let outcomes: Vec<(Outcome, f64)> = jobs
        .par_iter()
        .map(|job| {
            let t = Instant::now();
            job.run(cli.seed).map(|o| (o, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()
        .map_err(Failure::Runtime)?;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for (p, (Outcome { summary, result, .. }, secs)) in points.iter().zip(outcomes) {
        let _ = writeln!(log, "point {p:?} {secs:.3}s");
        let mut row: Vec<String> = p.iter().map(|(_, x)| num(*x)).collect();
        row.extend(summary);
        rows.push(row);
        let keys: Map<String, Value> = p.iter().map(|(k, x)| (k.clone(), json!(x))).collect();
        results.push(json!({ "point": keys, "result": result }));
    }
    let run = |e: anyhow::Error| Failure::Runtime(e);
    Ok(vec![
        csv_named("sweep.csv", &header, &rows).map_err(run)?,
        json_artifact("sweep.json", &Value::Array(results)).map_err(run)?,
    ])
}
