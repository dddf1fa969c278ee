//! Soft actor-critic: twin critics with a min-target, a reparameterized
//! Gaussian actor, an automatically tuned temperature and Polyak-averaged
//! target critics.
//!
//! The policy network maps an observation to `2 * action_dim` outputs: the
//! means followed by the raw log standard deviations, which are clamped to
//! `[LOG_STD_MIN, LOG_STD_MAX]`. The temperature is stored as `log α`.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cycle::{Agent, Buffer, Transition};
use crate::models::{stack_rows, ValueNet};
use crate::nn::{log_prob_with_grads, Activation, AdamConfig, AdamState, MlpSpec, ParameterVector, Tape};
use crate::rng::Stream;
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub replay_capacity: usize,
    pub learning_period: usize,
    pub minibatch_size: usize,
    pub gradient_steps: usize,
    pub discount: f64,
    pub target_smoothing: f64,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    /// Agent steps of uniform-random actions before the policy acts and learns.
    pub warmup_steps: usize,
    pub hidden: Vec<usize>,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            replay_capacity: 1_000_000,
            learning_period: 1,
            minibatch_size: 256,
            gradient_steps: 1,
            discount: 0.99,
            target_smoothing: 0.005,
            policy_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            warmup_steps: 1000,
            hidden: vec![256, 256],
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_smoothing > 0.0 && self.target_smoothing <= 1.0) {
            return Err(Error::config(format!(
                "target smoothing must lie in (0, 1], got {}",
                self.target_smoothing
            )));
        }
        if self.minibatch_size == 0 || self.replay_capacity == 0 || self.learning_period == 0 {
            return Err(Error::config("minibatch, replay capacity and learning period must be >= 1"));
        }
        if self.minibatch_size > self.replay_capacity {
            return Err(Error::config("minibatch cannot exceed replay capacity"));
        }
        if !(self.discount >= 0.0 && self.discount <= 1.0) {
            return Err(Error::config(format!("discount must lie in [0, 1], got {}", self.discount)));
        }
        for lr in [self.policy_lr, self.critic_lr, self.alpha_lr] {
            if !(lr > 0.0) {
                return Err(Error::config("learning rates must be positive"));
            }
        }
        Ok(())
    }
}

/// Policy with a shared trunk and linear mean / log-std heads.
#[derive(Debug, Clone)]
pub struct SacPolicy {
    pub spec: MlpSpec,
    pub params: ParameterVector,
}

/// Evaluated policy heads for a batch of states.
#[derive(Debug, Clone)]
pub struct PolicyHeads {
    pub tape: Tape,
    pub mean: Array2<f64>,
    /// Clamped log standard deviations.
    pub log_std: Array2<f64>,
    /// 1 where the raw log-std lies inside the clamp range, else 0.
    pub log_std_pass: Array2<f64>,
}

impl PolicyHeads {
    /// `f(S, ε, θ) = μ + ε σ`
    pub fn reparameterize(&self, noise: ArrayView2<'_, f64>) -> Array2<f64> {
        &self.mean + &(&noise * &self.log_std.mapv(f64::exp))
    }

    /// `log π(a | S)` for each row.
    pub fn log_prob(&self, actions: ArrayView2<'_, f64>) -> Vec<f64> {
        (0..actions.nrows())
            .map(|i| {
                (0..actions.ncols())
                    .map(|j| log_prob_with_grads(actions[[i, j]], self.mean[[i, j]], self.log_std[[i, j]]).0)
                    .sum()
            })
            .collect()
    }
}

impl SacPolicy {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut Stream) -> Result<Self> {
        let spec = MlpSpec::new(obs_dim, hidden.to_vec(), 2 * action_dim, Activation::Relu)?;
        let params = spec.init(rng);
        Ok(Self { spec, params })
    }

    pub fn action_dim(&self) -> usize {
        self.spec.output_dim / 2
    }

    pub fn heads(&self, states: ArrayView2<'_, f64>) -> Result<PolicyHeads> {
        let tape = self.spec.forward_batch(&self.params, states)?;
        let d = self.action_dim();
        let out = tape.output();
        let mean = out.slice(s![.., ..d]).to_owned();
        let raw = out.slice(s![.., d..]);
        let log_std = raw.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        let log_std_pass = raw.mapv(|v| if (LOG_STD_MIN..=LOG_STD_MAX).contains(&v) { 1.0 } else { 0.0 });
        Ok(PolicyHeads {
            tape,
            mean,
            log_std,
            log_std_pass,
        })
    }

    pub fn sample(&self, observation: &[f64], rng: &mut Stream) -> Result<Vec<f64>> {
        let row = ArrayView2::from_shape((1, observation.len()), observation).map_err(|e| Error::config(e.to_string()))?;
        let heads = self.heads(row)?;
        Ok((0..self.action_dim())
            .map(|j| heads.mean[[0, j]] + rng.sample::<f64, _>(StandardNormal) * heads.log_std[[0, j]].exp())
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct SacNetworks {
    pub policy: SacPolicy,
    pub q1: ValueNet,
    pub q2: ValueNet,
    pub q1_target: ParameterVector,
    pub q2_target: ParameterVector,
    pub log_alpha: f64,
    pub policy_adam: AdamState,
    pub q1_adam: AdamState,
    pub q2_adam: AdamState,
    pub alpha_adam: AdamState,
}

impl SacNetworks {
    pub fn new(obs_dim: usize, action_dim: usize, config: &SacConfig, rng: &mut Stream) -> Result<Self> {
        let policy = SacPolicy::new(obs_dim, action_dim, &config.hidden, rng)?;
        let q1 = ValueNet::new(obs_dim + action_dim, &config.hidden, Activation::Relu, rng)?;
        let q2 = ValueNet::new(obs_dim + action_dim, &config.hidden, Activation::Relu, rng)?;
        Ok(Self {
            policy_adam: AdamState::new(policy.params.len(), AdamConfig::with_lr(config.policy_lr)),
            q1_adam: AdamState::new(q1.params.len(), AdamConfig::with_lr(config.critic_lr)),
            q2_adam: AdamState::new(q2.params.len(), AdamConfig::with_lr(config.critic_lr)),
            alpha_adam: AdamState::new(1, AdamConfig::with_lr(config.alpha_lr)),
            q1_target: q1.params.clone(),
            q2_target: q2.params.clone(),
            // α = 1
            log_alpha: 0.0,
            policy,
            q1,
            q2,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.action_dim()
    }

    /// `H̄ = -|A|`
    pub fn target_entropy(&self) -> f64 {
        -(self.action_dim() as f64)
    }
}

/// Bellman target `R + (1 - T) γ [min(q̄1, q̄2) - α log π(Ã'|S')]`.
pub fn critic_target(
    reward: f64,
    terminal: bool,
    discount: f64,
    alpha: f64,
    target_q1: f64,
    target_q2: f64,
    next_log_prob: f64,
) -> f64 {
    if terminal {
        return reward;
    }
    reward + discount * (target_q1.min(target_q2) - alpha * next_log_prob)
}

fn concat_columns(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a, b]).expect("row counts agree")
}

/// A sampled minibatch in matrix form.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub terminals: Vec<bool>,
}

impl Minibatch {
    pub fn from_transitions(transitions: &[&Transition]) -> Result<Self> {
        let first = transitions.first().ok_or_else(|| Error::usage("empty minibatch"))?;
        let (obs_dim, act_dim) = (first.state.len(), first.action.len());
        Ok(Self {
            states: stack_rows(transitions.iter().map(|t| t.state.as_slice()), obs_dim)?,
            actions: stack_rows(transitions.iter().map(|t| t.action.as_slice()), act_dim)?,
            rewards: transitions.iter().map(|t| t.reward).collect(),
            next_states: stack_rows(transitions.iter().map(|t| t.next_state.as_slice()), obs_dim)?,
            terminals: transitions.iter().map(|t| t.terminal).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Critic targets for a minibatch, given the standard-normal noise that
/// draws `Ã' = μ(S') + ε σ(S')`.
pub fn critic_targets(batch: &Minibatch, nets: &SacNetworks, discount: f64, next_noise: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let heads = nets.policy.heads(batch.next_states.view())?;
    let next_actions = heads.reparameterize(next_noise);
    let next_log_probs = heads.log_prob(next_actions.view());
    let inputs = concat_columns(batch.next_states.view(), next_actions.view());
    let (tq1, _) = nets.q1.values_with(&nets.q1_target, inputs.view())?;
    let (tq2, _) = nets.q2.values_with(&nets.q2_target, inputs.view())?;
    let alpha = nets.alpha();
    Ok((0..batch.len())
        .map(|i| critic_target(batch.rewards[i], batch.terminals[i], discount, alpha, tq1[i], tq2[i], next_log_probs[i]))
        .collect())
}

/// One Adam step per critic on the minibatch mean of `½(q - y)²`. Returns the
/// number of transitions skipped for a non-finite target.
pub fn critic_update(batch: &Minibatch, nets: &mut SacNetworks, config: &SacConfig, next_noise: ArrayView2<'_, f64>) -> Result<usize> {
    let targets = critic_targets(batch, nets, config.discount, next_noise)?;
    let valid: Vec<bool> = targets.iter().map(|y| y.is_finite()).collect();
    let count = valid.iter().filter(|v| **v).count();
    let skipped = batch.len() - count;
    if skipped > 0 {
        log::warn!("critic update skipped {skipped} transitions with non-finite targets");
    }
    if count == 0 {
        return Ok(skipped);
    }
    let inputs = concat_columns(batch.states.view(), batch.actions.view());
    for (net, adam) in [(&mut nets.q1, &mut nets.q1_adam), (&mut nets.q2, &mut nets.q2_adam)] {
        let (q, tape) = net.values(inputs.view())?;
        let weights: Vec<f64> = (0..batch.len())
            .map(|i| if valid[i] { (q[i] - targets[i]) / count as f64 } else { 0.0 })
            .collect();
        let (grad, _) = net.weighted_grad(&tape, &weights)?;
        adam.step(&mut net.params, &grad)?;
    }
    Ok(skipped)
}

/// Cotangent of the actor loss `α log π(f|S) - q_min(S, f)` with respect to
/// the policy outputs `(mean, raw log-std)`, per sample, given `dq_min/da` at
/// the reparameterized action. Rows are not averaged.
pub fn actor_output_cotangent(
    heads: &PolicyHeads,
    noise: ArrayView2<'_, f64>,
    alpha: f64,
    dq_da: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let (n, d) = heads.mean.dim();
    let actions = heads.reparameterize(noise);
    let mut cot = Array2::zeros((n, 2 * d));
    for i in 0..n {
        for j in 0..d {
            let log_std = heads.log_std[[i, j]];
            let sigma = log_std.exp();
            let (_, dlp_dmean, dlp_dlogstd, dlp_da) = log_prob_with_grads(actions[[i, j]], heads.mean[[i, j]], log_std);
            // path through the action: ∇_θ f (α ∇_a log π - ∇_a q_min)
            let through_action = alpha * dlp_da - dq_da[[i, j]];
            cot[[i, j]] = alpha * dlp_dmean + through_action;
            cot[[i, d + j]] = (alpha * dlp_dlogstd + through_action * noise[[i, j]] * sigma) * heads.log_std_pass[[i, j]];
        }
    }
    cot
}

/// Minibatch-mean actor loss and its gradient with respect to the policy
/// parameters, with frozen noise and explicit temperature.
pub fn actor_loss_and_gradient(
    states: ArrayView2<'_, f64>,
    nets: &SacNetworks,
    alpha: f64,
    noise: ArrayView2<'_, f64>,
) -> Result<(f64, ParameterVector)> {
    let n = states.nrows() as f64;
    let heads = nets.policy.heads(states)?;
    let actions = heads.reparameterize(noise);
    let log_probs = heads.log_prob(actions.view());
    let inputs = concat_columns(states, actions.view());
    let (q1, tape1) = nets.q1.values(inputs.view())?;
    let (q2, tape2) = nets.q2.values(inputs.view())?;
    let use_first: Vec<bool> = q1.iter().zip(&q2).map(|(a, b)| a <= b).collect();
    let mask1: Vec<f64> = use_first.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    let mask2: Vec<f64> = use_first.iter().map(|&f| if f { 0.0 } else { 1.0 }).collect();
    let (_, din1) = nets.q1.weighted_grad(&tape1, &mask1)?;
    let (_, din2) = nets.q2.weighted_grad(&tape2, &mask2)?;
    let obs_dim = states.ncols();
    let dq_da = &din1.slice(s![.., obs_dim..]) + &din2.slice(s![.., obs_dim..]);
    let mut cot = actor_output_cotangent(&heads, noise, alpha, dq_da.view());
    cot.mapv_inplace(|v| v / n);
    let grad = nets.policy.spec.backward(&nets.policy.params, &heads.tape, cot.view())?.params;
    let loss = (0..states.nrows())
        .map(|i| alpha * log_probs[i] - q1[i].min(q2[i]))
        .sum::<f64>()
        / n;
    Ok((loss, grad))
}

/// One Adam step of the policy on the minibatch-mean actor loss.
pub fn actor_update(batch: &Minibatch, nets: &mut SacNetworks, noise: ArrayView2<'_, f64>) -> Result<()> {
    let (_, grad) = actor_loss_and_gradient(batch.states.view(), nets, nets.alpha(), noise)?;
    nets.policy_adam.step(&mut nets.policy.params, &grad)
}

/// Minibatch mean of `dL_α/dα = -log π(f|S) - H̄`.
pub fn temperature_gradient(log_probs: &[f64], target_entropy: f64) -> f64 {
    log_probs.iter().map(|lp| -lp - target_entropy).sum::<f64>() / log_probs.len() as f64
}

/// One Adam step on `log α`; the chain factor `dα/d log α = α` is applied.
pub fn temperature_update(batch: &Minibatch, nets: &mut SacNetworks, noise: ArrayView2<'_, f64>) -> Result<()> {
    let heads = nets.policy.heads(batch.states.view())?;
    let actions = heads.reparameterize(noise);
    let log_probs = heads.log_prob(actions.view());
    let grad_alpha = temperature_gradient(&log_probs, nets.target_entropy());
    let mut log_alpha = [nets.log_alpha];
    nets.alpha_adam.step(&mut log_alpha, &[nets.alpha() * grad_alpha])?;
    nets.log_alpha = log_alpha[0];
    Ok(())
}

/// `w̄ ← τ w + (1 - τ) w̄` for both target critics.
pub fn target_update(nets: &mut SacNetworks, tau: f64) {
    for (target, online) in [(&mut nets.q1_target, &nets.q1.params), (&mut nets.q2_target, &nets.q2.params)] {
        for (t, w) in target.iter_mut().zip(online.iter()) {
            *t = tau * w + (1.0 - tau) * *t;
        }
    }
}

/// Noise and sample indices for one gradient step.
#[derive(Debug, Clone)]
pub struct StepDraws {
    pub indices: Vec<usize>,
    pub next_noise: Array2<f64>,
    pub actor_noise: Array2<f64>,
}

impl StepDraws {
    pub fn sample(buffer: &Buffer, minibatch: usize, action_dim: usize, replay: &mut Stream, policy: &mut Stream) -> Self {
        let indices = buffer.sample_indices(replay, minibatch);
        let normal = |rng: &mut Stream| Array2::from_shape_fn((minibatch, action_dim), |_| rng.sample(StandardNormal));
        let next_noise = normal(policy);
        let actor_noise = normal(policy);
        Self {
            indices,
            next_noise,
            actor_noise,
        }
    }
}

/// One gradient step: critics, actor, temperature, then targets.
pub fn sac_gradient_step(buffer: &Buffer, nets: &mut SacNetworks, config: &SacConfig, draws: &StepDraws) -> Result<()> {
    let transitions: Vec<&Transition> = draws
        .indices
        .iter()
        .map(|&i| buffer.get(i).ok_or_else(|| Error::usage(format!("replay index {i} out of range"))))
        .collect::<Result<_>>()?;
    let batch = Minibatch::from_transitions(&transitions)?;
    critic_update(&batch, nets, config, draws.next_noise.view())?;
    actor_update(&batch, nets, draws.actor_noise.view())?;
    temperature_update(&batch, nets, draws.actor_noise.view())?;
    target_update(nets, config.target_smoothing);
    Ok(())
}

/// Runs `gradient_steps` updates, or nothing while the replay is smaller than
/// `max(minibatch, warmup)`. Returns whether an update happened.
pub fn sac_learn(
    buffer: &Buffer,
    nets: &mut SacNetworks,
    config: &SacConfig,
    replay: &mut Stream,
    policy: &mut Stream,
) -> Result<bool> {
    if buffer.len() < config.minibatch_size.max(config.warmup_steps) {
        return Ok(false);
    }
    for _ in 0..config.gradient_steps {
        let draws = StepDraws::sample(buffer, config.minibatch_size, nets.action_dim(), replay, policy);
        sac_gradient_step(buffer, nets, config, &draws)?;
    }
    Ok(true)
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: SacConfig,
    pub nets: SacNetworks,
    policy_rng: Stream,
    replay_rng: Stream,
    steps: usize,
    pub updates: u64,
}

impl SacAgent {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        config: SacConfig,
        init_rng: &mut Stream,
        policy_rng: Stream,
        replay_rng: Stream,
    ) -> Result<Self> {
        config.validate()?;
        let nets = SacNetworks::new(obs_dim, action_dim, &config, init_rng)?;
        Ok(Self {
            config,
            nets,
            policy_rng,
            replay_rng,
            steps: 0,
            updates: 0,
        })
    }
}

impl Agent for SacAgent {
    fn act(&mut self, observation: &[f64]) -> Vec<f64> {
        self.steps += 1;
        if self.steps <= self.config.warmup_steps {
            return (0..self.nets.action_dim())
                .map(|_| self.policy_rng.random_range(-1.0..=1.0))
                .collect();
        }
        self.nets
            .policy
            .sample(observation, &mut self.policy_rng)
            .expect("observation matches policy input")
    }

    fn learn(&mut self, buffer: &Buffer) -> Result<()> {
        if sac_learn(buffer, &mut self.nets, &self.config, &mut self.replay_rng, &mut self.policy_rng)? {
            self.updates += 1;
        }
        Ok(())
    }
}
