use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use super::metrics;
use super::runner::{run_experiment_with, RunExecutor};
use crate::schedule::gamma_sweep_argmax;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepPhase {
    /// Score used to pick the discount.
    Sweep,
    /// Score of the picked discount on fresh seeds.
    Rerun,
}

/// One row of `gamma_sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cycle_time_ms: u32,
    pub gamma: f64,
    pub phase: SweepPhase,
    pub mean_average_return: Option<f64>,
    pub standard_error: Option<f64>,
    pub selected: bool,
}

pub const SWEEP_COLUMNS: [&str; 6] = [
    "cycle_time_ms",
    "gamma",
    "phase",
    "mean_average_return",
    "standard_error",
    "selected",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Selected discount per cycle time.
    pub selected: Vec<(u32, f64)>,
}

impl SweepReport {
    pub fn selected_for(&self, cycle_time_ms: u32) -> Option<f64> {
        self.selected.iter().find(|(dt, _)| *dt == cycle_time_ms).map(|(_, g)| *g)
    }
}

fn with_discount(config: &ExperimentConfig, name: String, gamma: f64) -> ExperimentConfig {
    let mut c = config.clone();
    c.name = name;
    let mut overrides = c.sac.take().unwrap_or_default();
    overrides.discount = Some(gamma);
    c.sac = Some(overrides);
    c
}

/// Runs the experiment once per candidate discount, picks the best per cycle
/// time, then reruns each pick on seeds disjoint from the sweep's.
///
/// Sweep runs go under `<out_root>/<name>/sweep/gamma<i>`, reruns under
/// `<out_root>/<name>/rerun/<dt>ms`, and the table to
/// `<out_root>/<name>/gamma_sweep.csv`.
pub fn run_gamma_sweep(
    config: &ExperimentConfig,
    candidates: &[f64],
    out_root: &Path,
    executor: &dyn RunExecutor,
) -> Result<SweepReport> {
    if config.algorithm != Algorithm::Sac {
        return Err(Error::usage("the discount sweep is defined for sac experiments"));
    }
    if candidates.is_empty() {
        return Err(Error::usage("the discount sweep needs at least one candidate"));
    }
    if let Some(g) = candidates.iter().find(|g| !(**g >= 0.0 && **g <= 1.0)) {
        return Err(Error::config(format!("discount candidate {g} is outside [0, 1]")));
    }
    config.validate()?;
    let dir = out_root.join(&config.name);
    let sweep_root = dir.join("sweep");
    let mut rows = Vec::new();
    let mut scores: Vec<Vec<(f64, Option<f64>)>> = vec![Vec::new(); config.cycle_times_ms.len()];
    for (i, &gamma) in candidates.iter().enumerate() {
        let c = with_discount(config, format!("gamma{i}"), gamma);
        let report = run_experiment_with(&c, &sweep_root, executor)?;
        for (j, s) in report.summary.iter().enumerate() {
            scores[j].push((gamma, s.mean_average_return));
            rows.push(SweepRow {
                cycle_time_ms: s.cycle_time_ms,
                gamma,
                phase: SweepPhase::Sweep,
                mean_average_return: s.mean_average_return,
                standard_error: s.standard_error,
                selected: false,
            });
        }
    }

    let rerun_root = dir.join("rerun");
    let mut selected = Vec::new();
    for (j, &dt) in config.cycle_times_ms.iter().enumerate() {
        if scores[j].iter().all(|(_, s)| s.is_none()) {
            log::warn!("no completed episodes at {dt} ms for any discount; picking the smallest");
        }
        let scored: Vec<(f64, f64)> = scores[j].iter().map(|(g, s)| (*g, s.unwrap_or(f64::NEG_INFINITY))).collect();
        let best = gamma_sweep_argmax(&scored)?;
        for row in rows.iter_mut().filter(|r| r.cycle_time_ms == dt && r.gamma == best) {
            row.selected = true;
        }
        let mut c = with_discount(config, format!("{dt}ms"), best);
        c.cycle_times_ms = vec![dt];
        c.base_seed = config.base_seed + config.num_runs as u64;
        let report = run_experiment_with(&c, &rerun_root, executor)?;
        let s = &report.summary[0];
        rows.push(SweepRow {
            cycle_time_ms: dt,
            gamma: best,
            phase: SweepPhase::Rerun,
            mean_average_return: s.mean_average_return,
            standard_error: s.standard_error,
            selected: true,
        });
        selected.push((dt, best));
    }
    metrics::write_csv(&dir.join("gamma_sweep.csv"), &SWEEP_COLUMNS, &rows)?;
    Ok(SweepReport { rows, selected })
}
