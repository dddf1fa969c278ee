use rand::Rng;

use super::{check_action, EnvConfig, Environment, EpisodeClock, StepResult};
use crate::rng::Stream;
use crate::Result;

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
/// Half the pole length.
const POLE_HALF_LENGTH: f64 = 0.5;
const FORCE_GAIN: f64 = 10.0;
pub const ANGLE_LIMIT: f64 = 0.5;
pub const POSITION_LIMIT: f64 = 2.4;
const RESET_SPREAD: f64 = 0.05;

/// Cart-pole balance task with a continuous force in `[-1, 1]`.
///
/// State and observation are `(x, x_dot, phi, phi_dot)`. The episode fails
/// once `|phi| > 0.5` rad or `|x| > 2.4`. Every step taken earns
/// `+1 * env_timestep`, so an episode's return is the time the pole stayed up.
#[derive(Debug, Clone)]
pub struct PoleBalance {
    config: EnvConfig,
    state: [f64; 4],
    clock: EpisodeClock,
}

impl PoleBalance {
    pub const OBS_DIM: usize = 4;
    pub const ACT_DIM: usize = 1;

    pub fn default_config() -> EnvConfig {
        EnvConfig {
            env_timestep_ms: 4,
            episode_limit_ms: 16_000,
        }
    }

    pub fn new(config: EnvConfig) -> Result<Self> {
        let config = EnvConfig::new(config.env_timestep_ms, config.episode_limit_ms)?;
        Ok(Self {
            clock: EpisodeClock::new(&config),
            config,
            state: [0.0; 4],
        })
    }

    pub fn state(&self) -> &[f64; 4] {
        &self.state
    }

    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.clock.reset();
    }

    pub fn failed(&self) -> bool {
        self.state[2].abs() > ANGLE_LIMIT || self.state[0].abs() > POSITION_LIMIT
    }

    /// `(x_ddot, phi_ddot)` for the current state under `force`.
    fn accelerations(&self, force: f64) -> (f64, f64) {
        let [_, _, phi, phi_dot] = self.state;
        let total_mass = CART_MASS + POLE_MASS;
        let (sin, cos) = phi.sin_cos();
        let temp = (force + POLE_MASS * POLE_HALF_LENGTH * phi_dot * phi_dot * sin) / total_mass;
        let phi_acc = (GRAVITY * sin - cos * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - POLE_MASS * POLE_HALF_LENGTH * phi_acc * cos / total_mass;
        (x_acc, phi_acc)
    }
}

impl Environment for PoleBalance {
    fn name(&self) -> &'static str {
        "polebalance"
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
        for s in &mut self.state {
            *s = rng.random_range(-RESET_SPREAD..=RESET_SPREAD);
        }
        self.clock.reset();
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.clock.begin_step(self.name())?;
        check_action(self.name(), action, Self::ACT_DIM)?;
        let dt = self.config.timestep_seconds();
        let (x_acc, phi_acc) = self.accelerations(FORCE_GAIN * action[0]);
        let [x, x_dot, phi, phi_dot] = self.state;
        self.state = [
            x + dt * x_dot,
            x_dot + dt * x_acc,
            phi + dt * phi_dot,
            phi_dot + dt * phi_acc,
        ];
        let reward = self.config.reward_scale_per_step();
        let terminal = self.clock.end_step(self.failed());
        Ok(StepResult {
            reward,
            next_observation: self.state.to_vec(),
            terminal,
        })
    }

    fn steps_taken(&self) -> u64 {
        self.clock.steps
    }
}
