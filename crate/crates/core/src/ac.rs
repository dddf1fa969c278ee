//! One-step actor-critic with a per-episode discount accumulator `I` and
//! plain gradient steps.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cycle::{Agent, Buffer, Transition};
use crate::models::{GaussianMlpPolicy, ValueNet};
use crate::nn::Activation;
use crate::rng::Stream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcConfig {
    pub discount: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub hidden: Vec<usize>,
}

impl Default for AcConfig {
    fn default() -> Self {
        Self {
            discount: 0.99,
            policy_lr: 3e-4,
            value_lr: 3e-4,
            hidden: vec![64, 64],
        }
    }
}

impl AcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::config(format!("discount must lie in [0, 1], got {}", self.discount)));
        }
        if !(self.policy_lr > 0.0 && self.value_lr > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AcNetworks {
    pub policy: GaussianMlpPolicy,
    pub value: ValueNet,
}

impl AcNetworks {
    pub fn new(obs_dim: usize, action_dim: usize, config: &AcConfig, rng: &mut Stream) -> Result<Self> {
        Ok(Self {
            policy: GaussianMlpPolicy::new(obs_dim, action_dim, &config.hidden, rng)?,
            value: ValueNet::new(obs_dim, &config.hidden, Activation::Tanh, rng)?,
        })
    }
}

/// `δ = R + (1 - T) γ v(S') - v(S)`
pub fn td_error(reward: f64, terminal: bool, discount: f64, next_value: f64, value: f64) -> f64 {
    let bootstrap = if terminal { 0.0 } else { discount * next_value };
    reward + bootstrap - value
}

/// One update from a single transition. Returns `(δ, I for the next step)`.
pub fn ac_learn(transition: &Transition, nets: &mut AcNetworks, config: &AcConfig, discount_acc: f64) -> Result<(f64, f64)> {
    let value = nets.value.value(&transition.state)?;
    let next_value = if transition.terminal {
        0.0
    } else {
        nets.value.value(&transition.next_state)?
    };
    let delta = td_error(transition.reward, transition.terminal, config.discount, next_value, value);
    if !delta.is_finite() {
        return Err(Error::numerical("actor-critic TD error", format!("δ = {delta}")));
    }
    let scale = discount_acc * delta;
    if scale != 0.0 {
        let state = Array2::from_shape_vec((1, transition.state.len()), transition.state.clone())
            .map_err(|e| Error::config(e.to_string()))?;
        let action = Array2::from_shape_vec((1, transition.action.len()), transition.action.clone())
            .map_err(|e| Error::config(e.to_string()))?;
        // both gradients use the pre-update parameters
        let (_, policy_tape) = nets.policy.log_probs(state.view(), action.view())?;
        let policy_grad = nets.policy.weighted_log_prob_grad(&policy_tape, action.view(), &[1.0])?;
        let (_, value_tape) = nets.value.values(state.view())?;
        let (value_grad, _) = nets.value.weighted_grad(&value_tape, &[1.0])?;
        nets.policy.params.add_scaled(config.policy_lr * scale, &policy_grad);
        nets.value.params.add_scaled(config.value_lr * scale, &value_grad);
    }
    let next_acc = if transition.terminal {
        1.0
    } else {
        config.discount * discount_acc
    };
    Ok((delta, next_acc))
}

#[derive(Debug, Clone)]
pub struct AcAgent {
    pub config: AcConfig,
    pub nets: AcNetworks,
    /// Current discount `I`.
    pub discount_acc: f64,
    policy_rng: Stream,
}

impl AcAgent {
    pub fn new(obs_dim: usize, action_dim: usize, config: AcConfig, init_rng: &mut Stream, policy_rng: Stream) -> Result<Self> {
        config.validate()?;
        let nets = AcNetworks::new(obs_dim, action_dim, &config, init_rng)?;
        Ok(Self {
            config,
            nets,
            discount_acc: 1.0,
            policy_rng,
        })
    }
}

impl Agent for AcAgent {
    fn act(&mut self, observation: &[f64]) -> Vec<f64> {
        self.nets
            .policy
            .sample(observation, &mut self.policy_rng)
            .expect("observation matches policy input")
    }

    /// Expects a learning period of 1; learns from the newest transition.
    fn learn(&mut self, buffer: &Buffer) -> Result<()> {
        let transition = buffer.newest().ok_or_else(|| Error::usage("actor-critic learn on an empty buffer"))?;
        let (_, next) = ac_learn(transition, &mut self.nets, &self.config, self.discount_acc)?;
        self.discount_acc = next;
        Ok(())
    }
}
