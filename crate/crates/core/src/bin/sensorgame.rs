use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sensorgame::sim::{
    aggregate, compare_modes, render, rows_to_csv, run_scenario_mode, strip_timings, OutputFormat, PlanMode,
    ScenarioConfig,
};
use sensorgame::verify::run_builtin_checks;
use sensorgame::Error;

#[derive(Parser)]
#[command(name = "sensorgame", version, about = "Non-myopic sensor planning for multi-target tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run of a scenario.
    Run(Common),
    /// Monte Carlo batch in one planning mode.
    Mc(Common),
    /// Myopic, open-loop and open-loop-feedback planning on shared seeds.
    Compare(Common),
    /// Check utility alignment, the potential decomposition and equilibria
    /// on built-in random instances.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random instances.
        #[arg(long, default_value_t = 100)]
        runs: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Base seed (defaults to the scenario's `run.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of runs (defaults to `run.num_mc_runs`).
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    mode: Option<PlanMode>,
    /// Planning horizon of the non-myopic modes.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Worker threads for Monte Carlo runs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Keep wall-clock timings in JSON output.
    #[arg(long)]
    timings: bool,
}

enum Failure {
    Config(Error),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(c: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::load(&c.config)?;
    if let Some(mode) = c.mode {
        cfg.planning.mode = mode;
    }
    if let Some(k) = c.k {
        cfg.planning.horizon = k;
        cfg.planning.commit = cfg.planning.commit.min(k);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_out(c: &Common, text: &str) -> Result<(), Failure> {
    match &c.out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn batch(c: &Common, modes: &[PlanMode]) -> Result<(), Failure> {
    let cfg = load(c)?;
    let runs = c.runs.unwrap_or(cfg.run.num_mc_runs);
    if runs == 0 {
        return Err(Failure::Config(Error::Config {
            path: "--runs".into(),
            msg: "must be at least 1".into(),
        }));
    }
    let seed = c.seed.unwrap_or(cfg.run.seed);
    let mut result = compare_modes(&cfg, modes, runs, seed, c.jobs)?;
    for r in &result.results {
        for f in &r.failures {
            eprintln!("warning: {} run with seed {} failed: {}", r.mode, f.seed, f.error);
        }
    }
    if !c.timings {
        strip_timings(&mut result);
    }
    write_out(c, &render(&result, c.format)?)
}

fn single(c: &Common) -> Result<(), Failure> {
    let cfg = load(c)?;
    let seed = c.seed.unwrap_or(cfg.run.seed);
    let (mut metrics, log) = run_scenario_mode(&cfg, cfg.planning.mode, seed)?;
    for w in &log.warnings {
        eprintln!("warning: {w}");
    }
    if !c.timings {
        metrics.wall_times = None;
    }
    let text = match c.format {
        OutputFormat::Csv => rows_to_csv(&aggregate(metrics.mode, std::slice::from_ref(&metrics))),
        OutputFormat::Json => {
            let v = serde_json::json!({ "metrics": metrics, "log": log });
            serde_json::to_string_pretty(&v).map_err(|e| Failure::Runtime(e.to_string()))? + "\n"
        }
    };
    write_out(c, &text)
}

fn verify(seed: u64, runs: usize) -> Result<(), Failure> {
    let reports = run_builtin_checks(seed, runs)?;
    let mut ok = true;
    for r in &reports {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        ok &= r.passed;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Runtime("invariant checks failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(c) => single(c),
        Command::Mc(c) => load(c).and_then(|cfg| batch(c, &[cfg.planning.mode])),
        Command::Compare(c) => batch(c, &PlanMode::ALL),
        Command::Verify { seed, runs } => verify(*seed, *runs),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

