//! Scenario simulation: truth, sensing, tracking and planning in closed loop.

pub mod config;
pub mod mc;
pub mod run;

pub use config::{PlanMode, ScenarioConfig, TargetKind};
pub use mc::{
    aggregate, compare_modes, emit_results, render, rows_from_csv, rows_to_csv, run_monte_carlo, strip_timings,
    AggregateRow, Comparison, MonteCarloResult, OutputFormat,
};
pub use run::{run_scenario, run_scenario_mode, RunLog, RunMetrics};
