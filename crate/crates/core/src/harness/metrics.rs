use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One completed episode, as written to `episodes.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: usize,
    pub cycle_time_ms: u32,
    pub env_step_at_episode_end: u64,
    pub episode_index: u64,
    pub undiscounted_return: f64,
    pub wall_seconds: f64,
}

/// Per-cycle-time aggregate, as written to `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cycle_time_ms: u32,
    pub num_runs: usize,
    /// Runs with at least one completed episode; only these enter the mean.
    pub runs_with_episodes: usize,
    pub incomplete_runs: usize,
    pub mean_average_return: Option<f64>,
    pub standard_error: Option<f64>,
}

/// Mean undiscounted return over all completed episodes, or `None` if there
/// were none.
pub fn average_return_over_learning(rows: &[MetricsRow]) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    Some(rows.iter().map(|r| r.undiscounted_return).sum::<f64>() / rows.len() as f64)
}

/// Mean and standard error (sample standard deviation over `√n`); the error
/// is 0 for a single value.
pub fn mean_and_standard_error(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, (var / n as f64).sqrt()))
}

fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map_err(|e| Error::io(path, e))
}

/// Writes rows with a header line, even when there are no rows.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let file = create(path)?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    let mut file = writer.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    file.flush().map_err(|e| Error::io(path, e))
}

pub const EPISODE_COLUMNS: [&str; 6] = [
    "run_id",
    "cycle_time_ms",
    "env_step_at_episode_end",
    "episode_index",
    "undiscounted_return",
    "wall_seconds",
];

pub const SUMMARY_COLUMNS: [&str; 6] = [
    "cycle_time_ms",
    "num_runs",
    "runs_with_episodes",
    "incomplete_runs",
    "mean_average_return",
    "standard_error",
];

pub fn write_episodes(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_csv(path, &EPISODE_COLUMNS, rows)
}

pub fn read_episodes(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_csv(path, &SUMMARY_COLUMNS, rows)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
