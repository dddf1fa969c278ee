//! Cycle-time-aware hyper-parameter transformations.
//!
//! Cycle times are integer milliseconds so ratios stay exact; floating point
//! enters only in the discount exponentiation.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hyper-parameters tuned at an initial cycle time, from which values at other
/// cycle times are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtAwareConfig {
    pub initial_cycle_time_ms: u32,
    pub initial_batch: usize,
    pub initial_minibatch: usize,
    pub initial_discount: f64,
    pub initial_trace_decay: f64,
}

impl Default for DtAwareConfig {
    fn default() -> Self {
        Self {
            initial_cycle_time_ms: 16,
            initial_batch: 2000,
            initial_minibatch: 50,
            initial_discount: 0.99,
            initial_trace_decay: 0.95,
        }
    }
}

impl DtAwareConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_cycle_time_ms == 0 {
            return Err(Error::config("initial cycle time must be positive"));
        }
        if !(self.initial_batch >= self.initial_minibatch && self.initial_minibatch >= 1) {
            return Err(Error::config(format!(
                "need batch >= minibatch >= 1, got {} and {}",
                self.initial_batch, self.initial_minibatch
            )));
        }
        for (name, v) in [("discount", self.initial_discount), ("trace decay", self.initial_trace_decay)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("initial {name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

fn check_cycle_time(dt_ms: u32) -> Result<()> {
    if dt_ms == 0 {
        return Err(Error::config("cycle time must be positive"));
    }
    Ok(())
}

/// `max(1, round(n / d))` with ties to even, in integers.
fn div_round_half_even(n: u64, d: u64) -> u64 {
    let (q, r) = (n / d, n % d);
    let rounded = match (2 * r).cmp(&d) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q % 2),
    };
    rounded.max(1)
}

fn scale_count(initial_dt_ms: u32, count: usize, dt_ms: u32) -> usize {
    div_round_half_even(u64::from(initial_dt_ms) * count as u64, u64::from(dt_ms)) as usize
}

/// `b_δt = (δt₀ / δt) b₀`, keeping the batch time constant.
pub fn scale_batch(config: &DtAwareConfig, dt_ms: u32) -> Result<usize> {
    check_cycle_time(dt_ms)?;
    Ok(scale_count(config.initial_cycle_time_ms, config.initial_batch, dt_ms))
}

/// `m_δt = (δt₀ / δt) m₀`, never above the scaled batch size.
pub fn scale_minibatch(config: &DtAwareConfig, dt_ms: u32) -> Result<usize> {
    let batch = scale_batch(config, dt_ms)?;
    Ok(scale_count(config.initial_cycle_time_ms, config.initial_minibatch, dt_ms).min(batch))
}

fn clipped_power(base: f64, dt_ms: u32, initial_dt_ms: u32) -> f64 {
    if dt_ms <= initial_dt_ms {
        return base;
    }
    base.min(base.powf(f64::from(dt_ms) / f64::from(initial_dt_ms)))
}

/// `min(γ₀, γ₀^(δt/δt₀))`
pub fn gamma_dt(config: &DtAwareConfig, dt_ms: u32) -> Result<f64> {
    check_cycle_time(dt_ms)?;
    Ok(clipped_power(config.initial_discount, dt_ms, config.initial_cycle_time_ms))
}

/// `min(λ₀, λ₀^(δt/δt₀))`
pub fn lambda_dt(config: &DtAwareConfig, dt_ms: u32) -> Result<f64> {
    check_cycle_time(dt_ms)?;
    Ok(clipped_power(config.initial_trace_decay, dt_ms, config.initial_cycle_time_ms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SacGammaMode {
    /// `γ*^(δt/δt₀)`
    Scaled,
    /// `γ*` at every cycle time.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SacGammaRule {
    pub tuned_discount: f64,
    pub mode: SacGammaMode,
}

pub fn sac_gamma(rule: &SacGammaRule, dt_ms: u32, initial_dt_ms: u32) -> Result<f64> {
    check_cycle_time(dt_ms)?;
    check_cycle_time(initial_dt_ms)?;
    if !(rule.tuned_discount > 0.0 && rule.tuned_discount <= 1.0) {
        return Err(Error::config(format!("tuned discount must lie in (0, 1], got {}", rule.tuned_discount)));
    }
    Ok(match rule.mode {
        SacGammaMode::Constant => rule.tuned_discount,
        SacGammaMode::Scaled if dt_ms == initial_dt_ms => rule.tuned_discount,
        SacGammaMode::Scaled => rule.tuned_discount.powf(f64::from(dt_ms) / f64::from(initial_dt_ms)),
    })
}

/// The discount with the highest score; ties go to the smaller discount.
pub fn gamma_sweep_argmax(results: &[(f64, f64)]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &(gamma, score) in results {
        best = match best {
            Some((g, s)) if s > score || (s == score && g <= gamma) => Some((g, s)),
            _ => Some((gamma, score)),
        };
    }
    best.map(|(g, _)| g).ok_or_else(|| Error::usage("discount sweep has no results"))
}

/// `n` candidates `0.99^(128 / 2^i)` for `i = 0..n-1`, then `1.0`, ascending.
pub fn gamma_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        _ => (0..n - 1)
            .map(|i| 0.99f64.powf(128.0 / f64::from(1u32 << i)))
            .chain(std::iter::once(1.0))
            .collect(),
    }
}

/// One row of a printed schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRow {
    pub cycle_time_ms: u32,
    pub batch: usize,
    pub minibatch: usize,
    pub discount: f64,
    pub trace_decay: f64,
}

pub fn schedule_table(config: &DtAwareConfig, cycle_times_ms: &[u32]) -> Result<Vec<ScheduleRow>> {
    config.validate()?;
    cycle_times_ms
        .iter()
        .map(|&dt| {
            Ok(ScheduleRow {
                cycle_time_ms: dt,
                batch: scale_batch(config, dt)?,
                minibatch: scale_minibatch(config, dt)?,
                discount: gamma_dt(config, dt)?,
                trace_decay: lambda_dt(config, dt)?,
            })
        })
        .collect()
}
