use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{AgentSpec, ExperimentConfig};
use super::metrics::{self, MetricsRow, SummaryRow};
use crate::ac::AcAgent;
use crate::cycle::{run_with_observer, Agent, Observer, RandomAgent, RunSummary};
use crate::envs::make_env_with_config;
use crate::ppo::PpoAgent;
use crate::rng::SeedStreams;
use crate::sac::SacAgent;
use crate::{Error, Result};

/// Marker file left in a run directory when the run hit the time cap.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// One independent run of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    pub cycle_time_ms: u32,
    pub run_index: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub rows: Vec<MetricsRow>,
    /// The run stopped early at the time cap.
    pub incomplete: bool,
    /// Loop statistics, when the run went through the interaction loop.
    pub loop_summary: Option<RunSummary>,
}

/// Executes a single run. Implemented for closures so tests can inject
/// synthetic outcomes.
pub trait RunExecutor: Sync {
    fn execute(&self, config: &ExperimentConfig, spec: &RunSpec) -> Result<RunOutcome>;
}

impl<F> RunExecutor for F
where
    F: Fn(&ExperimentConfig, &RunSpec) -> Result<RunOutcome> + Sync,
{
    fn execute(&self, config: &ExperimentConfig, spec: &RunSpec) -> Result<RunOutcome> {
        self(config, spec)
    }
}

/// Runs the configured agent through the interaction loop.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoopExecutor;

struct RunClock {
    start: Instant,
    cap_seconds: Option<f64>,
    record: bool,
    episode_wall: Vec<f64>,
}

impl Observer for RunClock {
    fn on_env_step(&mut self, _env_step: u64, _action: &[f64], _reward: f64, terminal: bool) {
        if terminal {
            let t = if self.record { self.start.elapsed().as_secs_f64() } else { 0.0 };
            self.episode_wall.push(t);
        }
    }

    fn should_stop(&mut self) -> bool {
        self.cap_seconds.is_some_and(|cap| self.start.elapsed().as_secs_f64() > cap)
    }
}

/// Builds the agent for one run, drawing initial weights from `streams.init`.
pub fn build_agent(
    spec: AgentSpec,
    obs_dim: usize,
    action_dim: usize,
    streams: &mut SeedStreams,
) -> Result<Box<dyn Agent + Send>> {
    Ok(match spec {
        AgentSpec::Ppo(c) => Box::new(PpoAgent::new(
            obs_dim,
            action_dim,
            c,
            &mut streams.init,
            streams.policy.clone(),
            streams.shuffle.clone(),
        )?),
        AgentSpec::Sac(c) => Box::new(SacAgent::new(
            obs_dim,
            action_dim,
            c,
            &mut streams.init,
            streams.policy.clone(),
            streams.replay.clone(),
        )?),
        AgentSpec::Ac(c) => Box::new(AcAgent::new(obs_dim, action_dim, c, &mut streams.init, streams.policy.clone())?),
        AgentSpec::Random => Box::new(RandomAgent::new(action_dim, streams.policy.clone())),
    })
}

impl RunExecutor for LoopExecutor {
    fn execute(&self, config: &ExperimentConfig, spec: &RunSpec) -> Result<RunOutcome> {
        let mut env = make_env_with_config(&config.env, config.env_config()?)?;
        let interaction = config.interaction_config(spec.cycle_time_ms)?;
        let mut streams = SeedStreams::new(spec.seed);
        let mut agent = build_agent(
            config.agent_spec(spec.cycle_time_ms)?,
            env.observation_dim(),
            env.action_dim(),
            &mut streams,
        )?;
        let mut clock = RunClock {
            start: Instant::now(),
            cap_seconds: config.time_cap_seconds,
            record: config.record_wall_time,
            episode_wall: Vec::new(),
        };
        let summary = run_with_observer(
            env.as_mut(),
            agent.as_mut(),
            &interaction,
            config.total_env_steps,
            &mut streams.env_reset,
            &mut clock,
        )?;
        if summary.failed_learn_calls > 0 {
            log::warn!(
                "{} at {} ms, run {}: {} of {} learn calls failed",
                config.name,
                spec.cycle_time_ms,
                spec.run_index,
                summary.failed_learn_calls,
                summary.learn_calls
            );
        }
        let rows = summary
            .episodes
            .iter()
            .zip(&clock.episode_wall)
            .enumerate()
            .map(|(i, (ep, wall))| MetricsRow {
                run_id: spec.run_index,
                cycle_time_ms: spec.cycle_time_ms,
                env_step_at_episode_end: ep.env_step_at_end,
                episode_index: i as u64,
                undiscounted_return: ep.undiscounted_return,
                wall_seconds: *wall,
            })
            .collect();
        Ok(RunOutcome {
            rows,
            incomplete: summary.aborted,
            loop_summary: Some(summary),
        })
    }
}

/// Results of a finished experiment.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    /// `<out_root>/<name>`
    pub dir: PathBuf,
    pub runs: Vec<(RunSpec, RunOutcome)>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn summary_for(&self, cycle_time_ms: u32) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.cycle_time_ms == cycle_time_ms)
    }

    /// Per-run average returns at one cycle time, in run order.
    pub fn average_returns(&self, cycle_time_ms: u32) -> Vec<Option<f64>> {
        self.runs
            .iter()
            .filter(|(s, _)| s.cycle_time_ms == cycle_time_ms)
            .map(|(_, o)| metrics::average_return_over_learning(&o.rows))
            .collect()
    }
}

pub fn run_specs(config: &ExperimentConfig) -> Vec<RunSpec> {
    config
        .cycle_times_ms
        .iter()
        .flat_map(|&dt| {
            (0..config.num_runs).map(move |k| RunSpec {
                cycle_time_ms: dt,
                run_index: k,
                seed: config.base_seed + k as u64,
            })
        })
        .collect()
}

pub fn run_dir(experiment_dir: &Path, spec: &RunSpec) -> PathBuf {
    experiment_dir
        .join(format!("{}ms", spec.cycle_time_ms))
        .join(format!("run{}", spec.run_index))
}

fn write_run(experiment_dir: &Path, spec: &RunSpec, outcome: &RunOutcome) -> Result<()> {
    let dir = run_dir(experiment_dir, spec);
    metrics::write_episodes(&dir.join("episodes.csv"), &outcome.rows)?;
    let marker = dir.join(INCOMPLETE_MARKER);
    if outcome.incomplete {
        std::fs::write(&marker, "run stopped at the time cap\n").map_err(|e| Error::io(&marker, e))?;
    } else if marker.exists() {
        std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    Ok(())
}

/// Aggregates per-run average returns for each cycle time.
pub fn summarize(config: &ExperimentConfig, runs: &[(RunSpec, RunOutcome)]) -> Vec<SummaryRow> {
    config
        .cycle_times_ms
        .iter()
        .map(|&dt| {
            let at_dt: Vec<&RunOutcome> = runs.iter().filter(|(s, _)| s.cycle_time_ms == dt).map(|(_, o)| o).collect();
            let averages: Vec<f64> = at_dt
                .iter()
                .filter_map(|o| metrics::average_return_over_learning(&o.rows))
                .collect();
            let stats = metrics::mean_and_standard_error(&averages);
            SummaryRow {
                cycle_time_ms: dt,
                num_runs: at_dt.len(),
                runs_with_episodes: averages.len(),
                incomplete_runs: at_dt.iter().filter(|o| o.incomplete).count(),
                mean_average_return: stats.map(|s| s.0),
                standard_error: stats.map(|s| s.1),
            }
        })
        .collect()
}

/// Runs every (cycle time, seed) pair with the interaction loop and writes
/// `<out_root>/<name>/<dt>ms/run<k>/episodes.csv` plus `<out_root>/<name>/summary.csv`.
pub fn run_experiment(config: &ExperimentConfig, out_root: &Path) -> Result<ExperimentReport> {
    run_experiment_with(config, out_root, &LoopExecutor)
}

pub fn run_experiment_with(config: &ExperimentConfig, out_root: &Path, executor: &dyn RunExecutor) -> Result<ExperimentReport> {
    config.validate()?;
    let dir = out_root.join(&config.name);
    let specs = run_specs(config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_parallel)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<RunOutcome>> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                log::info!("{}: {} ms run {} (seed {})", config.name, spec.cycle_time_ms, spec.run_index, spec.seed);
                let outcome = executor.execute(config, spec)?;
                write_run(&dir, spec, &outcome)?;
                Ok(outcome)
            })
            .collect()
    });
    let runs: Vec<(RunSpec, RunOutcome)> = specs
        .into_iter()
        .zip(outcomes)
        .map(|(s, o)| o.map(|o| (s, o)))
        .collect::<Result<_>>()?;
    let summary = summarize(config, &runs);
    metrics::write_summary(&dir.join("summary.csv"), &summary)?;
    Ok(ExperimentReport { dir, runs, summary })
}
