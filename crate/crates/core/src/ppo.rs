//! Proximal policy optimization with λ-return targets and the clipped-ratio
//! policy gradient.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cycle::{Agent, Buffer};
use crate::models::{stack_rows, GaussianMlpPolicy, ValueNet};
use crate::nn::{Activation, AdamConfig, AdamState};
use crate::rng::Stream;
use crate::{Error, Result};

/// Bound on `log π - log π_old` before exponentiation.
const LOG_RATIO_LIMIT: f64 = 20.0;
const NORMALIZE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    /// Transitions per Learn call; also the learning period.
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub clip: f64,
    pub discount: f64,
    pub trace_decay: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            batch_size: 2000,
            minibatch_size: 50,
            epochs: 10,
            clip: 0.2,
            discount: 0.99,
            trace_decay: 0.95,
            lr: 3e-4,
            hidden: vec![64, 64],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.minibatch_size == 0 || self.minibatch_size > self.batch_size {
            return Err(Error::config(format!(
                "need 1 <= minibatch ({}) <= batch ({})",
                self.minibatch_size, self.batch_size
            )));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::config(format!("clip must lie in (0, 1), got {}", self.clip)));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::config(format!("discount must lie in (0, 1], got {}", self.discount)));
        }
        if !(0.0..=1.0).contains(&self.trace_decay) {
            return Err(Error::config(format!("trace decay must lie in [0, 1], got {}", self.trace_decay)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }

    pub fn minibatches_per_epoch(&self) -> usize {
        self.batch_size.div_ceil(self.minibatch_size)
    }
}

#[derive(Debug, Clone)]
pub struct PpoNetworks {
    pub policy: GaussianMlpPolicy,
    pub value: ValueNet,
    pub policy_adam: AdamState,
    pub value_adam: AdamState,
}

impl PpoNetworks {
    pub fn new(obs_dim: usize, action_dim: usize, config: &PpoConfig, rng: &mut Stream) -> Result<Self> {
        let policy = GaussianMlpPolicy::new(obs_dim, action_dim, &config.hidden, rng)?;
        let value = ValueNet::new(obs_dim, &config.hidden, Activation::Tanh, rng)?;
        let adam = AdamConfig::with_lr(config.lr);
        Ok(Self {
            policy_adam: AdamState::new(policy.params.len(), adam),
            value_adam: AdamState::new(value.params.len(), adam),
            policy,
            value,
        })
    }
}

/// λ-return targets for an ordered run of transitions.
///
/// `next_values[t]` is the frozen value estimate of transition `t`'s next
/// state. Within an episode the targets follow
/// `G_t = R_{t+1} + γ [(1-λ) v(S'_t) + λ G_{t+1}]`; a terminal transition's
/// target is its reward, and the last transition, if not terminal, bootstraps
/// from `v(S'_last)`.
pub fn lambda_returns(
    rewards: &[f64],
    terminals: &[bool],
    next_values: &[f64],
    discount: f64,
    trace_decay: f64,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::usage("lambda returns of an empty buffer"));
    }
    if terminals.len() != n || next_values.len() != n {
        return Err(Error::config("rewards, terminals and next values must have equal length"));
    }
    let mut targets = vec![0.0; n];
    let mut next_target = next_values[n - 1];
    for t in (0..n).rev() {
        targets[t] = if terminals[t] {
            rewards[t]
        } else {
            rewards[t] + discount * ((1.0 - trace_decay) * next_values[t] + trace_decay * next_target)
        };
        next_target = targets[t];
    }
    Ok(targets)
}

/// Shifts to zero mean and scales to unit (population) standard deviation.
pub fn normalize_advantages(raw: &[f64]) -> Vec<f64> {
    if raw.len() < 2 {
        return vec![0.0; raw.len()];
    }
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + NORMALIZE_EPS;
    raw.iter().map(|x| (x - mean) / denom).collect()
}

pub fn clip_ratio(ratio: f64, clip: f64) -> f64 {
    ratio.clamp(1.0 - clip, 1.0 + clip)
}

/// Whether the surrogate's gradient flows through `ratio * advantage`.
pub fn unclipped_branch_active(ratio: f64, advantage: f64, clip: f64) -> bool {
    let unclipped = ratio * advantage;
    let clipped = clip_ratio(ratio, clip) * advantage;
    unclipped <= clipped || (unclipped > clipped && (1.0 - clip..=1.0 + clip).contains(&ratio))
}

/// `exp(log π - log π_old)` with the exponent bounded.
pub fn probability_ratio(log_prob: f64, old_log_prob: f64) -> f64 {
    (log_prob - old_log_prob).clamp(-LOG_RATIO_LIMIT, LOG_RATIO_LIMIT).exp()
}

/// Coefficient `c` with `grad L = c * grad log π`: `-ratio * advantage` on the
/// unclipped branch, zero otherwise.
pub fn clipped_gradient_weight(ratio: f64, advantage: f64, clip: f64) -> f64 {
    if unclipped_branch_active(ratio, advantage, clip) {
        -ratio * advantage
    } else {
        0.0
    }
}

/// Gradient of the clipped surrogate loss for one sample, given
/// `grad log π_θ(A|S)`: `-(grad π_θ / π_old) * advantage`, or zero.
pub fn clipped_policy_gradient(
    log_prob: f64,
    old_log_prob: f64,
    advantage: f64,
    clip: f64,
    grad_log_prob: &[f64],
) -> Result<Vec<f64>> {
    if !old_log_prob.is_finite() {
        return Err(Error::numerical(
            "clipped policy gradient",
            "old policy assigns zero density to the stored action",
        ));
    }
    let weight = clipped_gradient_weight(probability_ratio(log_prob, old_log_prob), advantage, clip);
    Ok(grad_log_prob.iter().map(|g| weight * g).collect())
}

/// Diagnostics of one Learn call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearnStats {
    pub policy_steps: u64,
    pub value_steps: u64,
    /// Largest `|ρ - 1|` seen in the first minibatch of the first epoch.
    pub first_minibatch_ratio_deviation: f64,
    /// Fraction of samples whose gradient was zeroed by clipping.
    pub clipped_fraction: f64,
}

struct Batch {
    states: Array2<f64>,
    actions: Array2<f64>,
    targets: Vec<f64>,
    advantages: Vec<f64>,
    old_log_probs: Vec<f64>,
}

fn prepare_batch(buffer: &Buffer, nets: &PpoNetworks, config: &PpoConfig) -> Result<Batch> {
    if buffer.is_empty() {
        return Err(Error::usage("PPO learn called with an empty buffer"));
    }
    let obs_dim = nets.policy.obs_dim();
    let act_dim = nets.policy.action_dim();
    let states = stack_rows(buffer.iter().map(|t| t.state.as_slice()), obs_dim)?;
    let next_states = stack_rows(buffer.iter().map(|t| t.next_state.as_slice()), obs_dim)?;
    let actions = stack_rows(buffer.iter().map(|t| t.action.as_slice()), act_dim)?;
    let rewards: Vec<f64> = buffer.iter().map(|t| t.reward).collect();
    let terminals: Vec<bool> = buffer.iter().map(|t| t.terminal).collect();

    // frozen snapshot for bootstrapping; identical to the live network at entry
    let frozen = nets.value.params.clone();
    let (next_values, _) = nets.value.values_with(&frozen, next_states.view())?;
    let targets = lambda_returns(&rewards, &terminals, &next_values, config.discount, config.trace_decay)?;
    let (values, _) = nets.value.values(states.view())?;
    let raw: Vec<f64> = targets.iter().zip(&values).map(|(g, v)| g - v).collect();
    let advantages = normalize_advantages(&raw);
    let (old_log_probs, _) = nets.policy.log_probs(states.view(), actions.view())?;
    if let Some(i) = old_log_probs.iter().position(|lp| !lp.is_finite()) {
        return Err(Error::numerical(
            "PPO learn",
            format!("old policy log-probability of transition {i} is {}", old_log_probs[i]),
        ));
    }
    Ok(Batch {
        states,
        actions,
        targets,
        advantages,
        old_log_probs,
    })
}

/// One Learn call with caller-supplied minibatch orderings, one permutation
/// of `0..b` per epoch.
pub fn ppo_learn_with_permutations(
    buffer: &Buffer,
    nets: &mut PpoNetworks,
    config: &PpoConfig,
    permutations: &[Vec<usize>],
) -> Result<LearnStats> {
    let batch = prepare_batch(buffer, nets, config)?;
    let b = batch.targets.len();
    let mut stats = LearnStats::default();
    let mut clipped = 0usize;
    let mut seen = 0usize;

    for (epoch, order) in permutations.iter().enumerate() {
        if order.len() != b {
            return Err(Error::config(format!("permutation has {} entries, batch has {b}", order.len())));
        }
        for (mb, chunk) in order.chunks(config.minibatch_size).enumerate() {
            let size = chunk.len() as f64;
            let states = batch.states.select(Axis(0), chunk);
            let actions = batch.actions.select(Axis(0), chunk);

            let (log_probs, policy_tape) = nets.policy.log_probs(states.view(), actions.view())?;
            let mut weights = Vec::with_capacity(chunk.len());
            for (lp, &i) in log_probs.iter().zip(chunk) {
                let ratio = probability_ratio(*lp, batch.old_log_probs[i]);
                if epoch == 0 && mb == 0 {
                    stats.first_minibatch_ratio_deviation = stats.first_minibatch_ratio_deviation.max((ratio - 1.0).abs());
                }
                let w = clipped_gradient_weight(ratio, batch.advantages[i], config.clip);
                if !unclipped_branch_active(ratio, batch.advantages[i], config.clip) {
                    clipped += 1;
                }
                seen += 1;
                weights.push(w / size);
            }
            let policy_grad = nets.policy.weighted_log_prob_grad(&policy_tape, actions.view(), &weights)?;

            let (values, value_tape) = nets.value.values(states.view())?;
            // descent direction on the mean squared error (G - v)^2
            let value_weights: Vec<f64> = values
                .iter()
                .zip(chunk)
                .map(|(v, &i)| -2.0 * (batch.targets[i] - v) / size)
                .collect();
            let (value_grad, _) = nets.value.weighted_grad(&value_tape, &value_weights)?;

            if !policy_grad.is_finite() || !value_grad.is_finite() {
                return Err(Error::numerical(
                    format!("PPO learn, epoch {epoch}, minibatch {mb}"),
                    "non-finite gradient; update skipped",
                ));
            }
            nets.policy_adam.step(&mut nets.policy.params, &policy_grad)?;
            nets.value_adam.step(&mut nets.value.params, &value_grad)?;
            stats.policy_steps += 1;
            stats.value_steps += 1;
        }
    }
    stats.clipped_fraction = if seen > 0 { clipped as f64 / seen as f64 } else { 0.0 };
    Ok(stats)
}

/// One Learn call: `epochs` passes of shuffled minibatch updates.
pub fn ppo_learn(buffer: &Buffer, nets: &mut PpoNetworks, config: &PpoConfig, shuffle: &mut Stream) -> Result<LearnStats> {
    if buffer.len() != config.batch_size {
        return Err(Error::usage(format!(
            "PPO learn expects {} transitions, buffer holds {}",
            config.batch_size,
            buffer.len()
        )));
    }
    let permutations: Vec<Vec<usize>> = (0..config.epochs)
        .map(|_| {
            let mut order: Vec<usize> = (0..buffer.len()).collect();
            order.shuffle(shuffle);
            order
        })
        .collect();
    ppo_learn_with_permutations(buffer, nets, config, &permutations)
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub config: PpoConfig,
    pub nets: PpoNetworks,
    policy_rng: Stream,
    shuffle_rng: Stream,
    /// Stats of every successful Learn call, oldest first.
    pub history: Vec<LearnStats>,
}

impl PpoAgent {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        config: PpoConfig,
        init_rng: &mut Stream,
        policy_rng: Stream,
        shuffle_rng: Stream,
    ) -> Result<Self> {
        config.validate()?;
        let nets = PpoNetworks::new(obs_dim, action_dim, &config, init_rng)?;
        Ok(Self {
            config,
            nets,
            policy_rng,
            shuffle_rng,
            history: Vec::new(),
        })
    }
}

impl Agent for PpoAgent {
    fn act(&mut self, observation: &[f64]) -> Vec<f64> {
        self.nets
            .policy
            .sample(observation, &mut self.policy_rng)
            .expect("observation matches policy input")
    }

    fn learn(&mut self, buffer: &Buffer) -> Result<()> {
        let stats = ppo_learn(buffer, &mut self.nets, &self.config, &mut self.shuffle_rng)?;
        self.history.push(stats);
        Ok(())
    }
}
