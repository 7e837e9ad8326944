//! `barlab <command> --config FILE [--set k=v]... [--jobs N] [--seed S] [--out DIR]`

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::Parser;
use serde_json::{json, Value};

use config::{Command, Issue};

#[derive(Debug, Parser)]
#[command(name = "barlab", version, about = "Simulation and deviation experiments for BAR processes on Galton-Watson trees")]
struct Cli {
    /// Experiment to run; `report` re-emits the outputs of a previous report.json.
    #[arg(value_enum)]
    command: Command,
    /// TOML config, or a JSON config, report or manifest (its config echo is used).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set deviation.n_rep=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    jobs: Option<usize>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "barlab-out")]
    out: PathBuf,
}

enum Failure {
    Invalid(Vec<Issue>),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (kind, errors, code) = match failure {
                Failure::Invalid(issues) => ("invalid-config", serde_json::to_value(issues).unwrap_or(Value::Null), 2),
                Failure::Runtime(e) => ("runtime", json!([{ "field": null, "reason": format!("{e:#}") }]), 1),
            };
            let record = json!({ "status": "error", "command": cli.command.as_str(), "kind": kind, "errors": errors });
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build().context("building worker pool")?;
    let (report, seed, extra) = if cli.command == Command::Report {
        let text = std::fs::read_to_string(&cli.config).with_context(|| format!("reading {}", cli.config.display()))?;
        let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", cli.config.display()))?;
        output::results_of(&doc)?;
        let seed = doc.get("seed").and_then(Value::as_u64).unwrap_or_default();
        (doc, seed, Vec::new())
    } else {
        let mut table = config::load_value(&cli.config).map_err(|e| invalid("config", e))?;
        for s in &cli.sets {
            config::apply_set(&mut table, s).map_err(|e| invalid("--set", e))?;
        }
        let mut cfg = config::from_table(table).map_err(|e| invalid("config", e))?;
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        let issues = cfg.validate(cli.command);
        if !issues.is_empty() {
            return Err(Failure::Invalid(issues));
        }
        let outcome = pool.install(|| match cli.command {
            Command::Simulate => commands::simulate(&cfg),
            Command::Estimate => commands::estimate(&cfg),
            Command::Deviation => commands::deviation(&cfg),
            Command::Chain => commands::chain(&cfg),
            Command::Bounds => commands::bounds(&cfg),
            Command::Report => unreachable!("handled above"),
        })?;
        let echo = serde_json::to_value(&cfg).context("echoing config")?;
        (output::report(cli.command.as_str(), cfg.seed, echo, outcome.results), cfg.seed, outcome.files)
    };
    let mut files = vec![("report.json".to_string(), output::to_pretty(&report))];
    files.extend(output::tables(output::results_of(&report)?)?);
    files.extend(extra);
    let manifest = json!({
        "artifact": output::ARTIFACT,
        "version": output::VERSION,
        "command": cli.command.as_str(),
        "seed": seed,
        "config": report["config"],
        "jobs": pool.current_num_threads(),
        "started_unix_seconds": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or_default(),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "outputs": files.iter().map(|(name, _)| name.as_str()).collect::<Vec<_>>(),
    });
    files.push(("manifest.json".to_string(), output::to_pretty(&manifest)));
    output::write_all(&cli.out, &files)?;
    Ok(())
}

fn invalid(field: &str, e: anyhow::Error) -> Failure {
    Failure::Invalid(vec![Issue { field: field.to_string(), reason: format!("{e:#}") }])
}
