//! Monte Carlo batches, aggregation and result files.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::{PlanMode, ScenarioConfig};
use super::run::{run_scenario_mode, RunMetrics};

/// One line of the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub step: usize,
    pub mode: PlanMode,
    pub target_id: usize,
    /// `sqrt(mean over runs of err^2)`.
    pub rmse_mean: f64,
    /// Sample standard deviation over runs of the position error.
    pub rmse_std: f64,
    pub potential_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub seed: u64,
    pub error: String,
}

/// Runs of one mode plus their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub mode: PlanMode,
    pub base_seed: u64,
    pub runs: Vec<RunMetrics>,
    pub failures: Vec<RunFailure>,
    pub rows: Vec<AggregateRow>,
}

/// Several modes run on shared seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub results: Vec<MonteCarloResult>,
}

impl Comparison {
    pub fn rows(&self) -> Vec<AggregateRow> {
        self.results.iter().flat_map(|r| r.rows.iter().cloned()).collect()
    }

    pub fn result(&self, mode: PlanMode) -> Option<&MonteCarloResult> {
        self.results.iter().find(|r| r.mode == mode)
    }
}

/// Aggregates successful runs; row order is step-major, then target.
pub fn aggregate(mode: PlanMode, runs: &[RunMetrics]) -> Vec<AggregateRow> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let steps = first.num_steps();
    let targets = first.target_kinds.len();
    let n = runs.len() as f64;
    let mut rows = Vec::with_capacity(steps * targets);
    for t in 0..steps {
        let potential_mean = runs.iter().map(|r| r.potential[t]).sum::<f64>() / n;
        for j in 0..targets {
            let errs: Vec<f64> = runs.iter().map(|r| r.position_error[t][j]).collect();
            let mean_sq = errs.iter().map(|e| e * e).sum::<f64>() / n;
            let mean = errs.iter().sum::<f64>() / n;
            let var = if runs.len() > 1 {
                errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            rows.push(AggregateRow {
                step: t + 1,
                mode,
                target_id: j,
                rmse_mean: mean_sq.sqrt(),
                rmse_std: var.sqrt(),
                potential_mean,
            });
        }
    }
    rows
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
            Ok(pool.install(f))
        }
    }
}

fn collect(mode: PlanMode, base_seed: u64, outcomes: Vec<(u64, Result<RunMetrics>)>) -> MonteCarloResult {
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, out) in outcomes {
        match out {
            Ok(m) => runs.push(m),
            Err(e) => failures.push(RunFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    let rows = aggregate(mode, &runs);
    MonteCarloResult {
        mode,
        base_seed,
        runs,
        failures,
        rows,
    }
}

/// `n_runs` independent runs seeded `base_seed + run_index`. `jobs` bounds the
/// worker threads (`None` uses the global pool). Results do not depend on it.
pub fn run_monte_carlo(
    cfg: &ScenarioConfig,
    mode: PlanMode,
    n_runs: usize,
    base_seed: u64,
    jobs: Option<usize>,
) -> Result<MonteCarloResult> {
    Ok(compare_modes(cfg, &[mode], n_runs, base_seed, jobs)?
        .results
        .remove(0))
}

/// Runs every mode in `modes` on the same seeds.
pub fn compare_modes(
    cfg: &ScenarioConfig,
    modes: &[PlanMode],
    n_runs: usize,
    base_seed: u64,
    jobs: Option<usize>,
) -> Result<Comparison> {
    let tasks: Vec<(PlanMode, u64)> = modes
        .iter()
        .flat_map(|&m| (0..n_runs as u64).map(move |r| (m, base_seed.wrapping_add(r))))
        .collect();
    let outcomes: Vec<(PlanMode, u64, Result<RunMetrics>)> = with_pool(jobs, || {
        tasks
            .par_iter()
            .map(|&(m, s)| (m, s, run_scenario_mode(cfg, m, s).map(|(metrics, _)| metrics)))
            .collect()
    })?;
    let mut results = Vec::new();
    let mut it = outcomes.into_iter();
    for &m in modes {
        let batch: Vec<(u64, Result<RunMetrics>)> = it.by_ref().take(n_runs).map(|(_, s, r)| (s, r)).collect();
        results.push(collect(m, base_seed, batch));
    }
    Ok(Comparison { results })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

pub const CSV_HEADER: &str = "step,mode,target_id,rmse_mean,rmse_std,potential_mean";

pub fn rows_to_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.step, r.mode, r.target_id, r.rmse_mean, r.rmse_std, r.potential_mean
        )
        .expect("writing to a string");
    }
    out
}

pub fn rows_from_csv(text: &str) -> std::result::Result<Vec<AggregateRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("missing or unexpected header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(format!("line {}: expected 6 fields", i + 2));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
            Ok(AggregateRow {
                step: f[0].parse().map_err(|e| format!("line {}: {e}", i + 2))?,
                mode: f[1].parse()?,
                target_id: f[2].parse().map_err(|e| format!("line {}: {e}", i + 2))?,
                rmse_mean: num(f[3])?,
                rmse_std: num(f[4])?,
                potential_mean: num(f[5])?,
            })
        })
        .collect()
}

/// Drops wall-clock timings so that serialized output only depends on the seed.
pub fn strip_timings(c: &mut Comparison) {
    for r in &mut c.results {
        for m in &mut r.runs {
            m.wall_times = None;
        }
    }
}

/// Serializes a comparison (or a single-mode batch) in `format`.
pub fn render(c: &Comparison, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => Ok(rows_to_csv(&c.rows())),
        OutputFormat::Json => Ok(serde_json::to_string_pretty(c)? + "\n"),
    }
}

pub fn emit_results(c: &Comparison, format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render(c, format)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::TargetKind;

    fn metrics(err: f64, pot: f64) -> RunMetrics {
        RunMetrics {
            mode: PlanMode::Olf,
            seed: 0,
            target_kinds: vec![TargetKind::Cv],
            position_error: vec![vec![err]; 3],
            potential: vec![pot; 3],
            plan_calls: 1,
            converged_plans: 1,
            inner_cap_hits: 0,
            total_utility_evals: 0,
            wall_times: None,
        }
    }

    #[test]
    fn constant_metric_aggregates_to_itself() {
        let runs = vec![metrics(2.5, 1.0); 4];
        for row in aggregate(PlanMode::Olf, &runs) {
            assert!((row.rmse_mean - 2.5).abs() < 1e-12);
            assert_eq!(row.rmse_std, 0.0);
            assert!((row.potential_mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rmse_is_root_mean_square() {
        let rows = aggregate(PlanMode::Ol, &[metrics(3.0, 0.0), metrics(4.0, 0.0)]);
        assert!((rows[0].rmse_mean - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((rows[0].rmse_std - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_rows_give_header_only() {
        assert_eq!(rows_to_csv(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn csv_round_trip() {
        let rows = aggregate(PlanMode::Myopic, &[metrics(0.1 + 0.2, 1.0 / 3.0), metrics(7.0, 2.0)]);
        assert_eq!(rows_from_csv(&rows_to_csv(&rows)).unwrap(), rows);
    }
}
