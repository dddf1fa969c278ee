//! Experiment harness: configuration, parallel runs over cycle times and
//! seeds, per-episode CSV metrics and the discount sweep.

mod config;
mod metrics;
mod runner;
mod sweep;

pub use config::{AcOverrides, AgentSpec, Algorithm, ExperimentConfig, HyperMode, PpoOverrides, SacGammaSection, SacOverrides};
pub use metrics::{
    average_return_over_learning, mean_and_standard_error, read_episodes, read_summary, write_csv, write_episodes,
    write_summary, MetricsRow, SummaryRow, EPISODE_COLUMNS, SUMMARY_COLUMNS,
};
pub use runner::{
    build_agent, run_dir, run_experiment, run_experiment_with, run_specs, summarize, ExperimentReport, LoopExecutor,
    RunExecutor, RunOutcome, RunSpec, INCOMPLETE_MARKER,
};
pub use sweep::{run_gamma_sweep, SweepPhase, SweepReport, SweepRow, SWEEP_COLUMNS};
