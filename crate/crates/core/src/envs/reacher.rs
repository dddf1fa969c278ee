use std::f64::consts::PI;

use rand::Rng;

use super::{check_action, EnvConfig, Environment, EpisodeClock, StepResult};
use crate::rng::Stream;
use crate::Result;

/// Length of each of the two arm links.
pub const LINK_LENGTH: f64 = 0.5;
const TORQUE_GAIN: f64 = 20.0;
const DAMPING: f64 = 2.0;
const ACTION_COST: f64 = 0.05;
/// Joint velocities are scaled by this factor in observations.
const VELOCITY_OBS_SCALE: f64 = 0.1;

/// Two-joint planar arm that must bring its fingertip onto a target.
///
/// State is `(θ1, θ2, ω1, ω2, target_x, target_y)` with joint dynamics
/// `dω/dt = 20 a - 2 ω`. Observations are
/// `(cos θ1, sin θ1, cos θ2, sin θ2, 0.1 ω1, 0.1 ω2, tx, ty, fx - tx, fy - ty, r)`
/// where `r` is the fraction of the episode time still remaining.
#[derive(Debug, Clone)]
pub struct Reacher2D {
    config: EnvConfig,
    state: [f64; 6],
    clock: EpisodeClock,
}

impl Reacher2D {
    pub const OBS_DIM: usize = 11;
    pub const ACT_DIM: usize = 2;

    pub fn default_config() -> EnvConfig {
        EnvConfig {
            env_timestep_ms: 2,
            episode_limit_ms: 2400,
        }
    }

    pub fn new(config: EnvConfig) -> Result<Self> {
        let config = EnvConfig::new(config.env_timestep_ms, config.episode_limit_ms)?;
        Ok(Self {
            clock: EpisodeClock::new(&config),
            config,
            state: [0.0; 6],
        })
    }

    pub fn state(&self) -> &[f64; 6] {
        &self.state
    }

    /// Overwrites the state and restarts the episode clock.
    pub fn set_state(&mut self, state: [f64; 6]) {
        self.state = state;
        self.clock.reset();
    }

    pub fn fingertip(&self) -> (f64, f64) {
        let [t1, t2, ..] = self.state;
        (
            LINK_LENGTH * t1.cos() + LINK_LENGTH * (t1 + t2).cos(),
            LINK_LENGTH * t1.sin() + LINK_LENGTH * (t1 + t2).sin(),
        )
    }

    pub fn distance_to_target(&self) -> f64 {
        let (fx, fy) = self.fingertip();
        (fx - self.state[4]).hypot(fy - self.state[5])
    }

    pub fn observation(&self) -> Vec<f64> {
        let [t1, t2, w1, w2, tx, ty] = self.state;
        let (fx, fy) = self.fingertip();
        vec![
            t1.cos(),
            t1.sin(),
            t2.cos(),
            t2.sin(),
            VELOCITY_OBS_SCALE * w1,
            VELOCITY_OBS_SCALE * w2,
            tx,
            ty,
            fx - tx,
            fy - ty,
            self.clock.remaining_fraction(),
        ]
    }
}

impl Environment for Reacher2D {
    fn name(&self) -> &'static str {
        "reacher2d"
    }

    fn config(&self) -> &EnvConfig {
        &self.config
    }

    fn observation_dim(&self) -> usize {
        Self::OBS_DIM
    }

    fn action_dim(&self) -> usize {
        Self::ACT_DIM
    }

    fn reset(&mut self, rng: &mut Stream) -> Vec<f64> {
        let t1 = rng.random_range(-PI..=PI);
        let t2 = rng.random_range(-PI..=PI);
        // uniform over the reachable disc
        let radius = 2.0 * LINK_LENGTH * rng.random::<f64>().sqrt();
        let angle = rng.random_range(-PI..PI);
        self.state = [t1, t2, 0.0, 0.0, radius * angle.cos(), radius * angle.sin()];
        self.clock.reset();
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.clock.begin_step(self.name())?;
        check_action(self.name(), action, Self::ACT_DIM)?;
        let dt = self.config.timestep_seconds();
        let [t1, t2, w1, w2, tx, ty] = self.state;
        self.state = [
            t1 + dt * w1,
            t2 + dt * w2,
            w1 + dt * (TORQUE_GAIN * action[0] - DAMPING * w1),
            w2 + dt * (TORQUE_GAIN * action[1] - DAMPING * w2),
            tx,
            ty,
        ];
        let effort: f64 = action.iter().map(|a| a * a).sum();
        let reward = (-self.distance_to_target() - ACTION_COST * effort) * self.config.reward_scale_per_step();
        let terminal = self.clock.end_step(false);
        Ok(StepResult {
            reward,
            next_observation: self.observation(),
            terminal,
        })
    }

    fn steps_taken(&self) -> u64 {
        self.clock.steps
    }
}
