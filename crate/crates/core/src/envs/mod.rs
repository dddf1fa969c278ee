//! Desk-scale continuous-control environments.
//!
//! Both environments advance by explicit Euler steps of a fixed
//! `env_timestep`, scale every reward component by that timestep, and end an
//! episode with `terminal = true` once the episode time limit is reached.

mod pole;
mod reacher;

pub use pole::PoleBalance;
pub use reacher::Reacher2D;

use serde::{Deserialize, Serialize};

use crate::rng::Stream;
use crate::{Error, Result};

/// Timing of an environment, in integer milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub env_timestep_ms: u32,
    pub episode_limit_ms: u32,
}

impl EnvConfig {
    pub fn new(env_timestep_ms: u32, episode_limit_ms: u32) -> Result<Self> {
        if env_timestep_ms == 0 {
            return Err(Error::config("environment timestep must be positive"));
        }
        if episode_limit_ms == 0 || !episode_limit_ms.is_multiple_of(env_timestep_ms) {
            return Err(Error::config(format!(
                "episode limit {episode_limit_ms} ms is not a positive multiple of the {env_timestep_ms} ms timestep"
            )));
        }
        Ok(Self {
            env_timestep_ms,
            episode_limit_ms,
        })
    }

    pub fn timestep_seconds(&self) -> f64 {
        f64::from(self.env_timestep_ms) / 1000.0
    }

    /// Multiplier applied to every reward component.
    pub fn reward_scale_per_step(&self) -> f64 {
        self.timestep_seconds()
    }

    pub fn episode_limit_steps(&self) -> u64 {
        u64::from(self.episode_limit_ms / self.env_timestep_ms)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub terminal: bool,
}

pub trait Environment: Send {
    fn name(&self) -> &'static str;

    fn config(&self) -> &EnvConfig;

    fn observation_dim(&self) -> usize;

    fn action_dim(&self) -> usize;

    /// Draws an initial state from the environment's start distribution and
    /// zeroes the clock.
    fn reset(&mut self, rng: &mut Stream) -> Vec<f64>;

    /// Advances the dynamics by one environment timestep. Actions are
    /// expected in `[-1, 1]` per dimension.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Environment steps taken since the last reset.
    fn steps_taken(&self) -> u64;

    fn clock_seconds(&self) -> f64 {
        self.steps_taken() as f64 * self.config().timestep_seconds()
    }
}

/// Builds an environment by name with its default timing.
pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "reacher2d" => Ok(Box::new(Reacher2D::new(Reacher2D::default_config())?)),
        "polebalance" => Ok(Box::new(PoleBalance::new(PoleBalance::default_config())?)),
        other => Err(Error::config(format!(
            "unknown environment {other:?}; expected \"reacher2d\" or \"polebalance\""
        ))),
    }
}

/// Builds an environment by name with explicit timing.
pub fn make_env_with_config(name: &str, config: EnvConfig) -> Result<Box<dyn Environment>> {
    match name {
        "reacher2d" => Ok(Box::new(Reacher2D::new(config)?)),
        "polebalance" => Ok(Box::new(PoleBalance::new(config)?)),
        other => Err(Error::config(format!(
            "unknown environment {other:?}; expected \"reacher2d\" or \"polebalance\""
        ))),
    }
}

/// Default environment timestep for a named environment.
pub fn default_config(name: &str) -> Result<EnvConfig> {
    match name {
        "reacher2d" => Ok(Reacher2D::default_config()),
        "polebalance" => Ok(PoleBalance::default_config()),
        other => Err(Error::config(format!("unknown environment {other:?}"))),
    }
}

/// Episode bookkeeping shared by the environments.
#[derive(Debug, Clone)]
struct EpisodeClock {
    steps: u64,
    limit_steps: u64,
    started: bool,
    finished: bool,
}

impl EpisodeClock {
    fn new(config: &EnvConfig) -> Self {
        Self {
            steps: 0,
            limit_steps: config.episode_limit_steps(),
            started: false,
            finished: false,
        }
    }

    /// Share of the episode time limit still ahead, in `[0, 1]`.
    fn remaining_fraction(&self) -> f64 {
        1.0 - self.steps as f64 / self.limit_steps as f64
    }

    fn reset(&mut self) {
        self.steps = 0;
        self.started = true;
        self.finished = false;
    }

    fn begin_step(&self, env: &str) -> Result<()> {
        if !self.started {
            return Err(Error::usage(format!("{env}: step called before reset")));
        }
        if self.finished {
            return Err(Error::usage(format!("{env}: step called after terminal without reset")));
        }
        Ok(())
    }

    /// Advances the clock; returns whether the episode ends here.
    fn end_step(&mut self, failed: bool) -> bool {
        self.steps += 1;
        self.finished = failed || self.steps >= self.limit_steps;
        self.finished
    }
}

fn check_action(env: &str, action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(Error::config(format!(
            "{env}: action has {} entries, expected {dim}",
            action.len()
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::numerical(format!("{env} step"), "non-finite action"));
    }
    Ok(())
}
