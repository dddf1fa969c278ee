//! The agent-environment loop for action-cycle times that are integer
//! multiples of the environment timestep.
//!
//! The agent picks an action every `repeat = cycle_time / env_timestep`
//! environment steps and the action is held in between. Rewards received
//! while an action is held are summed into one transition, which is stored
//! right before the next action choice or as soon as the episode ends.
//! `Agent::learn` runs after every `learning_period`-th stored transition.

use std::collections::VecDeque;

use rand::Rng;

use crate::envs::Environment;
use crate::rng::Stream;
use crate::{Error, Result};

/// One agent step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    /// Sum of the environment rewards received while `action` was held.
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity transition store that overwrites its oldest entry when full.
#[derive(Debug, Clone)]
pub struct Buffer {
    slots: VecDeque<Transition>,
    capacity: usize,
}

impl Buffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "buffer capacity must be >= 1");
        Self {
            slots: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn push(&mut self, transition: Transition) {
        if self.slots.len() == self.capacity {
            self.slots.pop_front();
        }
        self.slots.push_back(transition);
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `index` counts from the oldest stored transition.
    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.slots.get(index)
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Transition> + '_ {
        self.slots.iter()
    }

    pub fn newest(&self) -> Option<&Transition> {
        self.slots.back()
    }

    /// `count` indices drawn uniformly with replacement.
    pub fn sample_indices(&self, rng: &mut Stream, count: usize) -> Vec<usize> {
        assert!(!self.is_empty(), "cannot sample from an empty buffer");
        (0..count).map(|_| rng.random_range(0..self.len())).collect()
    }
}

/// Anything that can act in the loop and learn from its buffer.
pub trait Agent {
    /// Chooses an action from the latest observation.
    fn act(&mut self, observation: &[f64]) -> Vec<f64>;

    /// Called with the buffer after every `learning_period`-th stored transition.
    fn learn(&mut self, buffer: &Buffer) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteractionConfig {
    pub action_cycle_time_ms: u32,
    pub env_timestep_ms: u32,
    pub learning_period: usize,
    pub buffer_capacity: usize,
}

impl InteractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.env_timestep_ms == 0 {
            return Err(Error::config("environment timestep must be positive"));
        }
        if self.action_cycle_time_ms == 0 || !self.action_cycle_time_ms.is_multiple_of(self.env_timestep_ms) {
            return Err(Error::config(format!(
                "action cycle time {} ms is not a positive integer multiple of the {} ms environment timestep",
                self.action_cycle_time_ms, self.env_timestep_ms
            )));
        }
        if self.learning_period == 0 || self.buffer_capacity == 0 {
            return Err(Error::config("learning period and buffer capacity must be >= 1"));
        }
        Ok(())
    }

    /// Environment steps per agent step.
    pub fn repeat(&self) -> u64 {
        u64::from(self.action_cycle_time_ms / self.env_timestep_ms)
    }
}

/// A completed episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    /// Global environment-step count at which the episode ended.
    pub env_step_at_end: u64,
    pub env_steps: u64,
    pub agent_steps: u64,
    pub undiscounted_return: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    /// Completed episodes only; a trailing partial episode is left out.
    pub episodes: Vec<EpisodeRecord>,
    pub env_steps: u64,
    pub agent_steps: u64,
    pub learn_calls: u64,
    /// Learn calls rejected with a numerical error.
    pub failed_learn_calls: u64,
    /// Set when the run stopped before `total_env_steps`.
    pub aborted: bool,
}

/// Hooks into every step of the loop. All methods default to no-ops.
pub trait Observer {
    /// Called after environment step `env_step` (global index) applied `action`.
    fn on_env_step(&mut self, _env_step: u64, _action: &[f64], _reward: f64, _terminal: bool) {}

    fn on_transition(&mut self, _agent_step: u64, _transition: &Transition) {}

    fn on_learn(&mut self, _agent_step: u64) {}

    /// Polled every few thousand environment steps; returning `true` stops the run.
    fn should_stop(&mut self) -> bool {
        false
    }
}

impl Observer for () {}

/// Sum of an episode's agent-step rewards.
pub fn accumulated_return(rewards: &[f64]) -> f64 {
    rewards.iter().sum()
}

/// Runs the loop for exactly `total_env_steps` environment steps.
pub fn run<A: Agent + ?Sized>(
    env: &mut dyn Environment,
    agent: &mut A,
    config: &InteractionConfig,
    total_env_steps: u64,
    reset_rng: &mut Stream,
) -> Result<RunSummary> {
    run_with_observer(env, agent, config, total_env_steps, reset_rng, &mut ())
}

const STOP_POLL_INTERVAL: u64 = 4096;

pub fn run_with_observer<A: Agent + ?Sized, O: Observer + ?Sized>(
    env: &mut dyn Environment,
    agent: &mut A,
    config: &InteractionConfig,
    total_env_steps: u64,
    reset_rng: &mut Stream,
    observer: &mut O,
) -> Result<RunSummary> {
    config.validate()?;
    if config.env_timestep_ms != env.config().env_timestep_ms {
        return Err(Error::config(format!(
            "interaction config assumes a {} ms environment timestep but {} runs at {} ms",
            config.env_timestep_ms,
            env.name(),
            env.config().env_timestep_ms
        )));
    }
    let repeat = config.repeat();
    let mut buffer = Buffer::new(config.buffer_capacity);
    let mut summary = RunSummary::default();

    let mut observation = env.reset(reset_rng);
    let mut episode_step: u64 = 0;
    let mut agent_step: u64 = 0;
    let mut episode_rewards: Vec<f64> = Vec::new();
    let mut episode_start_env_step: u64 = 0;

    let mut held_state = observation.clone();
    let mut held_action: Vec<f64> = Vec::new();
    let mut applied_action: Vec<f64> = Vec::new();
    let mut held_reward = 0.0;

    for env_step in 0..total_env_steps {
        if env_step % STOP_POLL_INTERVAL == 0 && env_step > 0 && observer.should_stop() {
            summary.aborted = true;
            break;
        }
        if episode_step.is_multiple_of(repeat) {
            held_state = observation.clone();
            held_reward = 0.0;
            held_action = agent.act(&observation);
            applied_action = held_action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        }
        let outcome = env.step(&applied_action)?;
        held_reward += outcome.reward;
        observer.on_env_step(env_step, &applied_action, outcome.reward, outcome.terminal);

        if (episode_step + 1).is_multiple_of(repeat) || outcome.terminal {
            let transition = Transition {
                state: std::mem::take(&mut held_state),
                action: held_action.clone(),
                reward: held_reward,
                next_state: outcome.next_observation.clone(),
                terminal: outcome.terminal,
            };
            episode_rewards.push(held_reward);
            observer.on_transition(agent_step, &transition);
            buffer.push(transition);
            if (agent_step + 1).is_multiple_of(config.learning_period as u64) {
                observer.on_learn(agent_step);
                summary.learn_calls += 1;
                match agent.learn(&buffer) {
                    Ok(()) => {}
                    Err(e) if e.is_numerical() => {
                        log::warn!("learn call at agent step {agent_step} rejected: {e}");
                        summary.failed_learn_calls += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            agent_step += 1;
        }
        episode_step += 1;

        if outcome.terminal {
            summary.episodes.push(EpisodeRecord {
                env_step_at_end: env_step + 1,
                env_steps: env_step + 1 - episode_start_env_step,
                agent_steps: episode_rewards.len() as u64,
                undiscounted_return: accumulated_return(&episode_rewards),
            });
            episode_rewards.clear();
            episode_start_env_step = env_step + 1;
            observation = env.reset(reset_rng);
            episode_step = 0;
        } else {
            observation = outcome.next_observation;
        }
        summary.env_steps = env_step + 1;
    }
    summary.agent_steps = agent_step;
    Ok(summary)
}

/// Acts uniformly at random in `[-1, 1]` and never learns.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    action_dim: usize,
    rng: Stream,
}

impl RandomAgent {
    pub fn new(action_dim: usize, rng: Stream) -> Self {
        Self { action_dim, rng }
    }
}

impl Agent for RandomAgent {
    fn act(&mut self, _observation: &[f64]) -> Vec<f64> {
        (0..self.action_dim).map(|_| self.rng.random_range(-1.0..=1.0)).collect()
    }

    fn learn(&mut self, _buffer: &Buffer) -> Result<()> {
        Ok(())
    }
}
