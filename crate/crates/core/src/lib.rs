//! Policy-gradient agents (PPO, SAC, one-step actor-critic) driven by an
//! interaction loop whose action-cycle time is an integer multiple of the
//! environment timestep, plus cycle-time-aware hyper-parameter schedules and
//! an experiment harness.

pub mod ac;
pub mod cycle;
pub mod envs;
pub mod harness;
pub mod models;
mod error;
pub mod nn;
pub mod ppo;
pub mod rng;
pub mod sac;
pub mod schedule;

pub use cycle::{Agent, Buffer, InteractionConfig, RunSummary, Transition};
pub use envs::{EnvConfig, Environment, StepResult};
pub use error::{Error, Result};
