//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Exact-math criteria fail the process when they fail. The two learning
//! checks depend on compute budget and seeds; their verdicts are printed with
//! the measurements but do not change the exit status.

use std::path::Path;
use std::time::Instant;

use dtrl_core::cycle::{run_with_observer, Agent, Buffer, InteractionConfig, Observer, Transition};
use dtrl_core::envs::{make_env, EnvConfig, Environment, StepResult};
use dtrl_core::harness::{
    run_experiment, run_experiment_with, Algorithm, ExperimentConfig, ExperimentReport, HyperMode, LoopExecutor,
    MetricsRow, PpoOverrides, SacOverrides,
};
use dtrl_core::nn::{mlp_forward, mlp_gradient, Activation, MlpSpec, ParameterVector, HALF_LOG_2PI};
use dtrl_core::ppo::{
    clip_ratio, clipped_gradient_weight, lambda_returns, ppo_learn, probability_ratio, unclipped_branch_active,
    PpoConfig, PpoNetworks,
};
use dtrl_core::rng::{stream, Purpose, Stream};
use dtrl_core::sac::{
    actor_loss_and_gradient, critic_target, target_update, temperature_gradient, SacConfig, SacNetworks,
    LOG_STD_MAX, LOG_STD_MIN,
};
use dtrl_core::schedule::{gamma_dt, lambda_dt, sac_gamma, scale_batch, scale_minibatch, DtAwareConfig, SacGammaMode, SacGammaRule};
use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between `grad` and central differences of `f`.
fn worst_fd_error(params: &ParameterVector, grad: &[f64], f: impl Fn(&ParameterVector) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus[i] += h;
        let mut minus = params.clone();
        minus[i] -= h;
        let fd = (f(&plus) - f(&minus)) / (2.0 * h);
        worst = worst.max(rel_err(fd, grad[i]));
    }
    worst
}

// ---------------------------------------------------------------- gradients

fn mlp_triples(rng: &mut Stream) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let activation = if k % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let depth = rng.random_range(1..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=8)).collect();
        let spec = MlpSpec::new(rng.random_range(1..=5), hidden, rng.random_range(1..=3), activation).unwrap();
        let mut params = spec.init(rng);
        for p in params.iter_mut() {
            *p += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        let input: Vec<f64> = (0..spec.input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cot: Vec<f64> = (0..spec.output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grad = mlp_gradient(&spec, &params, &input, &cot).unwrap();
        let f = |p: &ParameterVector| {
            let out = mlp_forward(&spec, p, &input).unwrap();
            out.iter().zip(&cot).map(|(o, c)| o * c).sum()
        };
        worst = worst.max(worst_fd_error(&params, &grad, f));
    }
    worst
}

fn sac_actor_loss(rng: &mut Stream) -> f64 {
    let cfg = SacConfig {
        hidden: vec![8, 8],
        ..SacConfig::default()
    };
    let (obs, act, n) = (3, 2, 5);
    let mut nets = SacNetworks::new(obs, act, &cfg, rng).unwrap();
    nets.log_alpha = 0.2f64.ln();
    let states = Array2::from_shape_fn((n, obs), |_| rng.random_range(-1.0..1.0));
    let noise = Array2::from_shape_fn((n, act), |_| rng.sample::<f64, _>(StandardNormal));
    let alpha = nets.alpha();
    let (_, grad) = actor_loss_and_gradient(states.view(), &nets, alpha, noise.view()).unwrap();
    // written out per sample: mean of α log π(f(s, ε)) - min q(s, f(s, ε))
    let loss = |p: &ParameterVector| {
        let mut total = 0.0;
        for i in 0..n {
            let out = mlp_forward(&nets.policy.spec, p, states.row(i).as_slice().unwrap()).unwrap();
            let mut input = states.row(i).to_vec();
            let mut log_prob = 0.0;
            for j in 0..act {
                let ls = out[act + j].clamp(LOG_STD_MIN, LOG_STD_MAX);
                input.push(out[j] + ls.exp() * noise[[i, j]]);
                log_prob += -0.5 * noise[[i, j]].powi(2) - ls - HALF_LOG_2PI;
            }
            let q1 = mlp_forward(&nets.q1.spec, &nets.q1.params, &input).unwrap()[0];
            let q2 = mlp_forward(&nets.q2.spec, &nets.q2.params, &input).unwrap()[0];
            total += alpha * log_prob - q1.min(q2);
        }
        total / n as f64
    };
    worst_fd_error(&nets.policy.params, &grad, loss)
}

fn ppo_surrogate(rng: &mut Stream) -> f64 {
    let cfg = PpoConfig {
        hidden: vec![8, 8],
        ..PpoConfig::default()
    };
    let (obs, act, n) = (4, 2, 16);
    let nets = PpoNetworks::new(obs, act, &cfg, rng).unwrap();
    let policy = &nets.policy;
    let states = Array2::from_shape_fn((n, obs), |_| rng.random_range(-1.0..1.0));
    let actions = Array2::from_shape_fn((n, act), |_| rng.random_range(-1.5..1.5));
    let advantages: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let (log_probs, tape) = policy.log_probs(states.view(), actions.view()).unwrap();
    // old log-probabilities put some ratios inside the clip interval and some outside
    let old: Vec<f64> = log_probs.iter().map(|lp| lp + rng.random_range(-0.4..0.4)).collect();
    let weights: Vec<f64> = (0..n)
        .map(|i| clipped_gradient_weight(probability_ratio(log_probs[i], old[i]), advantages[i], cfg.clip) / n as f64)
        .collect();
    let grad = policy.weighted_log_prob_grad(&tape, actions.view(), &weights).unwrap();
    let loss = |p: &ParameterVector| {
        let mut probe = policy.clone();
        probe.params = p.clone();
        let (lps, _) = probe.log_probs(states.view(), actions.view()).unwrap();
        -(0..n)
            .map(|i| {
                let rho = (lps[i] - old[i]).exp();
                (rho * advantages[i]).min(clip_ratio(rho, cfg.clip) * advantages[i])
            })
            .sum::<f64>()
            / n as f64
    };
    worst_fd_error(&policy.params, &grad, loss)
}

fn gradient_exactness() -> Verdict {
    let mut rng = stream(101, Purpose::Init);
    let mlp = mlp_triples(&mut rng);
    let sac = sac_actor_loss(&mut rng);
    let ppo = ppo_surrogate(&mut rng);
    let worst = mlp.max(sac).max(ppo);
    Verdict::new(
        worst < 1e-4,
        format!("max rel err: mlp {mlp:.2e}, sac actor {sac:.2e}, ppo surrogate {ppo:.2e}"),
    )
}

// ---------------------------------------------------------------- λ-returns

/// Closed form for one segment: `λ^{T-t-1} G_{t:T} + (1-λ) Σ_n λ^{n-1} G_{t:t+n}`,
/// where `values[k]` is the value of the state reached after `k + 1` steps and
/// a terminal segment contributes no tail value.
fn closed_form(rewards: &[f64], values: &[f64], terminal: bool, gamma: f64, lambda: f64) -> Vec<f64> {
    let len = rewards.len();
    let n_step = |t: usize, n: usize| {
        let mut g: f64 = (0..n).map(|j| gamma.powi(j as i32) * rewards[t + j]).sum();
        let tail = t + n == len && terminal;
        if !tail {
            g += gamma.powi(n as i32) * values[t + n - 1];
        }
        g
    };
    (0..len)
        .map(|t| {
            let horizon = len - t;
            let mut g = lambda.powi(horizon as i32 - 1) * n_step(t, horizon);
            for n in 1..horizon {
                g += (1.0 - lambda) * lambda.powi(n as i32 - 1) * n_step(t, n);
            }
            g
        })
        .collect()
}

fn lambda_return_oracle() -> Verdict {
    let mut rng = stream(202, Purpose::Init);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let len = rng.random_range(1..=50);
        let gamma = *[0.0, 0.5, 0.9, 1.0].choose(&mut rng).unwrap();
        let lambda = *[0.0, 0.5, 0.8, 0.95, 1.0].choose(&mut rng).unwrap();
        let terminal = rng.random_bool(0.5);
        let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut terminals = vec![false; len];
        terminals[len - 1] = terminal;
        let got = lambda_returns(&rewards, &terminals, &values, gamma, lambda).unwrap();
        let want = closed_form(&rewards, &values, terminal, gamma, lambda);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    Verdict::new(worst <= 1e-10, format!("200 episodes, max abs err {worst:.2e}"))
}

// ---------------------------------------------------------------- cycle loop

struct Recorder {
    inner: Box<dyn Environment>,
    resets: Vec<Vec<f64>>,
    steps: Vec<(Vec<f64>, StepResult)>,
}

impl Environment for Recorder {
    fn name(&self) -> &'static str {
        self.inner.name()
    }
    fn config(&self) -> &EnvConfig {
        self.inner.config()
    }
    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }
    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }
    fn reset(&mut self, rng: &mut Stream) -> Vec<f64> {
        let obs = self.inner.reset(rng);
        self.resets.push(obs.clone());
        obs
    }
    fn step(&mut self, action: &[f64]) -> dtrl_core::Result<StepResult> {
        let out = self.inner.step(action)?;
        self.steps.push((action.to_vec(), out.clone()));
        Ok(out)
    }
    fn steps_taken(&self) -> u64 {
        self.inner.steps_taken()
    }
}

/// Acts uniformly in a range slightly wider than the action bounds.
struct Probe {
    dim: usize,
    rng: Stream,
    seen: Vec<Vec<f64>>,
    acted: Vec<Vec<f64>>,
    learn_sizes: Vec<usize>,
    learn_newest: Vec<Transition>,
}

impl Agent for Probe {
    fn act(&mut self, observation: &[f64]) -> Vec<f64> {
        self.seen.push(observation.to_vec());
        let a: Vec<f64> = (0..self.dim).map(|_| self.rng.random_range(-1.2..1.2)).collect();
        self.acted.push(a.clone());
        a
    }
    fn learn(&mut self, buffer: &Buffer) -> dtrl_core::Result<()> {
        self.learn_sizes.push(buffer.len());
        self.learn_newest.push(buffer.newest().unwrap().clone());
        Ok(())
    }
}

#[derive(Default)]
struct Log {
    transitions: Vec<Transition>,
    learn_at: Vec<u64>,
}

impl Observer for Log {
    fn on_transition(&mut self, _agent_step: u64, t: &Transition) {
        self.transitions.push(t.clone());
    }
    fn on_learn(&mut self, agent_step: u64) {
        self.learn_at.push(agent_step);
    }
}

/// Checks one setting; returns a description of the first violation.
fn check_cycle(env_name: &str, repeat: u64, total: u64, period: usize, capacity: usize) -> Result<(), String> {
    let inner = make_env(env_name).unwrap();
    let env_dt = inner.config().env_timestep_ms;
    let dim = inner.action_dim();
    let mut env = Recorder {
        inner,
        resets: Vec::new(),
        steps: Vec::new(),
    };
    let mut agent = Probe {
        dim,
        rng: stream(repeat, Purpose::PolicySampling),
        seen: Vec::new(),
        acted: Vec::new(),
        learn_sizes: Vec::new(),
        learn_newest: Vec::new(),
    };
    let config = InteractionConfig {
        action_cycle_time_ms: env_dt * repeat as u32,
        env_timestep_ms: env_dt,
        learning_period: period,
        buffer_capacity: capacity,
    };
    let mut log = Log::default();
    let summary =
        run_with_observer(&mut env, &mut agent, &config, total, &mut stream(repeat, Purpose::EnvReset), &mut log)
            .map_err(|e| e.to_string())?;

    if summary.env_steps != total || env.steps.len() as u64 != total {
        return Err(format!("{} env steps taken, expected {total}", env.steps.len()));
    }

    // replay the log: decisions, held actions, grouped rewards, episode returns
    let mut expected = Vec::new();
    let mut decisions = 0usize;
    let mut resets = 1usize;
    let mut obs = env.resets[0].clone();
    let mut episode_step = 0u64;
    let mut hold: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    let mut episode_flat = 0.0;
    let mut episode_grouped: Vec<f64> = Vec::new();
    let mut episodes = 0usize;
    for (j, (action, out)) in env.steps.iter().enumerate() {
        if episode_step.is_multiple_of(repeat) {
            if agent.seen.get(decisions) != Some(&obs) {
                return Err(format!("decision {decisions} saw the wrong observation"));
            }
            let raw = agent.acted[decisions].clone();
            decisions += 1;
            hold = Some((obs.clone(), raw, 0.0));
        }
        let (state, raw, acc) = hold.as_mut().unwrap();
        let applied: Vec<f64> = raw.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        if *action != applied {
            return Err(format!("env step {j} received {action:?}, held action clamps to {applied:?}"));
        }
        *acc += out.reward;
        episode_flat += out.reward;
        if (episode_step + 1).is_multiple_of(repeat) || out.terminal {
            expected.push(Transition {
                state: state.clone(),
                action: raw.clone(),
                reward: *acc,
                next_state: out.next_observation.clone(),
                terminal: out.terminal,
            });
            episode_grouped.push(*acc);
        }
        episode_step += 1;
        if out.terminal {
            let record = summary
                .episodes
                .get(episodes)
                .ok_or_else(|| format!("episode {episodes} missing from summary"))?;
            let grouped: f64 = episode_grouped.iter().sum();
            if record.undiscounted_return.to_bits() != grouped.to_bits() {
                return Err(format!("episode {episodes} return differs from its transition rewards"));
            }
            if (record.undiscounted_return - episode_flat).abs() > 1e-12 * episode_flat.abs().max(1.0) {
                return Err(format!("episode {episodes} return differs from the env reward sum"));
            }
            if record.env_steps != episode_step || record.agent_steps != episode_step.div_ceil(repeat) {
                return Err(format!("episode {episodes} step counts are off"));
            }
            episodes += 1;
            episode_step = 0;
            episode_flat = 0.0;
            episode_grouped.clear();
            obs = env.resets[resets].clone();
            resets += 1;
        } else {
            obs = out.next_observation.clone();
        }
    }
    if episodes != summary.episodes.len() {
        return Err(format!("{} episodes in summary, {episodes} in the log", summary.episodes.len()));
    }
    if decisions != agent.acted.len() {
        return Err(format!("agent acted {} times, {decisions} decision points", agent.acted.len()));
    }
    if log.transitions != expected {
        return Err("stored transitions differ from the replayed log".into());
    }
    if summary.agent_steps != expected.len() as u64 {
        return Err("agent step count differs from the number of transitions".into());
    }
    let want_learn: Vec<u64> = (0..expected.len() as u64).filter(|k| (k + 1) % period as u64 == 0).collect();
    if log.learn_at != want_learn || summary.learn_calls != want_learn.len() as u64 {
        return Err("learn calls do not follow the learning period".into());
    }
    for (i, &k) in want_learn.iter().enumerate() {
        if agent.learn_sizes[i] != (k as usize + 1).min(capacity) || agent.learn_newest[i] != expected[k as usize] {
            return Err(format!("buffer seen by learn call {i} is wrong"));
        }
    }
    Ok(())
}

fn cycle_loop_exactness() -> Verdict {
    let mut failures = Vec::new();
    for env in ["reacher2d", "polebalance"] {
        for repeat in [1u64, 2, 4, 8, 32] {
            if let Err(e) = check_cycle(env, repeat, 100_000, 7, 50) {
                failures.push(format!("{env} x{repeat}: {e}"));
            }
        }
    }
    if failures.is_empty() {
        Verdict::new(true, "2 envs x repeats {1,2,4,8,32} x 1e5 env steps")
    } else {
        Verdict::new(false, failures.join("; "))
    }
}

// ---------------------------------------------------------------- schedule

fn schedule_table() -> Verdict {
    let base = |dt0: u32, b: usize| DtAwareConfig {
        initial_cycle_time_ms: dt0,
        initial_batch: b,
        initial_minibatch: 50,
        initial_discount: 0.99,
        initial_trace_decay: 0.95,
    };
    let mut notes = Vec::new();
    let b8 = scale_batch(&base(16, 2000), 8).unwrap();
    let b10 = scale_batch(&base(40, 400), 10).unwrap();
    let rule = SacGammaRule {
        tuned_discount: 0.9227,
        mode: SacGammaMode::Scaled,
    };
    let g120 = sac_gamma(&rule, 120, 40).unwrap();
    let ok_values = b8 == 4000 && b10 == 1600 && (g120 - 0.786).abs() <= 1e-3;
    notes.push(format!("b8 {b8}, b10 {b10}, gamma120 {g120:.4}"));

    let mut conserved = true;
    let mut cases = 0;
    for dt0 in [4u32, 8, 16, 32, 40, 64] {
        for b0 in [100usize, 400, 2000, 4096] {
            let cfg = base(dt0, b0);
            for dt in 1..=256u32 {
                if !(dt0 as usize * b0).is_multiple_of(dt as usize) {
                    continue;
                }
                cases += 1;
                let b = scale_batch(&cfg, dt).unwrap();
                conserved &= dt as usize * b == dt0 as usize * b0;
            }
        }
    }
    notes.push(format!("batch-time conserved in {cases} divisible cases"));

    let d = base(16, 2000);
    let monotone = [4u32, 8, 16, 32, 64].windows(2).all(|w| {
        gamma_dt(&d, w[1]).unwrap() <= gamma_dt(&d, w[0]).unwrap() && lambda_dt(&d, w[1]).unwrap() <= lambda_dt(&d, w[0]).unwrap()
    });
    let extra = scale_minibatch(&d, 64).unwrap() == 12
        && gamma_dt(&d, 4).unwrap() == 0.99
        && (gamma_dt(&d, 64).unwrap() - 0.99f64.powi(4)).abs() < 1e-15
        && (lambda_dt(&d, 32).unwrap() - 0.9025).abs() < 1e-15;
    Verdict::new(ok_values && conserved && monotone && extra, notes.join(", "))
}

// ---------------------------------------------------------------- clipped branch

fn clipped_branch() -> Verdict {
    let mut rng = stream(303, Purpose::Shuffle);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let eps = rng.random_range(0.01..0.5);
        let rho = rng.random_range(0.0..2.0);
        let adv: f64 = rng.sample(StandardNormal);
        let unclipped = rho * adv;
        let clipped = clip_ratio(rho, eps) * adv;
        // zero gradient iff the clipped term is the strict minimum and ρ is outside the interval
        let zero = unclipped > clipped && !(1.0 - eps..=1.0 + eps).contains(&rho);
        // subgradient of min(ρh, clip(ρ)h) with respect to ρ, by central differences
        let h = 1e-7;
        let surrogate = |r: f64| (r * adv).min(clip_ratio(r, eps) * adv);
        let slope = (surrogate(rho + h) - surrogate(rho - h)) / (2.0 * h);
        let fd_zero = slope.abs() < 1e-6 * adv.abs().max(1.0);
        let near_kink = (rho - (1.0 - eps)).abs() < 1e-6 || (rho - (1.0 + eps)).abs() < 1e-6;
        let weight = clipped_gradient_weight(rho, adv, eps);
        if unclipped_branch_active(rho, adv, eps) == zero || (weight == 0.0) != zero || (!near_kink && fd_zero != zero) {
            mismatches += 1;
        }
    }

    // ρ at the first minibatch of each Learn call
    let cfg = PpoConfig {
        batch_size: 64,
        minibatch_size: 16,
        hidden: vec![16, 16],
        ..PpoConfig::default()
    };
    let mut init = stream(304, Purpose::Init);
    let mut nets = PpoNetworks::new(3, 2, &cfg, &mut init).unwrap();
    let mut shuffle = stream(304, Purpose::Shuffle);
    let mut data = stream(305, Purpose::EnvReset);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut buffer = Buffer::new(cfg.batch_size);
        for i in 0..cfg.batch_size {
            let mut v = |n: usize| (0..n).map(|_| data.random_range(-1.0..1.0)).collect::<Vec<f64>>();
            buffer.push(Transition {
                state: v(3),
                action: v(2),
                reward: v(1)[0],
                next_state: v(3),
                terminal: i % 13 == 12,
            });
        }
        let stats = ppo_learn(&buffer, &mut nets, &cfg, &mut shuffle).unwrap();
        worst = worst.max(stats.first_minibatch_ratio_deviation);
    }
    Verdict::new(
        mismatches == 0 && worst <= 1e-12,
        format!("1e4 cases, {mismatches} mismatches; first-minibatch max |rho-1| {worst:.1e} over 20 learn calls"),
    )
}

// ---------------------------------------------------------------- SAC scalars

fn sac_micro_oracles() -> Verdict {
    let target = critic_target(1.0, false, 0.9, 0.5, 2.0, 3.0, -1.0);
    let terminal = critic_target(1.0, true, 0.9, 0.5, 2.0, 3.0, -1.0);
    let target_ok = target == 1.0 + 0.9 * (2.0 + 0.5) && terminal == 1.0;

    let cfg = SacConfig {
        hidden: vec![4],
        ..SacConfig::default()
    };
    let mut rng = stream(404, Purpose::Init);
    let mut nets = SacNetworks::new(2, 1, &cfg, &mut rng).unwrap();
    for p in nets.q1.params.iter_mut().chain(nets.q2.params.iter_mut()) {
        *p = rng.random_range(-1.0..1.0);
    }
    let online = (nets.q1.params.clone(), nets.q2.params.clone());
    let before = (nets.q1_target.clone(), nets.q2_target.clone());
    let mut tau_ok = true;
    for tau in [0.0, 0.5, 1.0] {
        let mut n = nets.clone();
        target_update(&mut n, tau);
        for (got, (w, old)) in [(&n.q1_target, (&online.0, &before.0)), (&n.q2_target, (&online.1, &before.1))] {
            for i in 0..got.len() {
                let want = match tau {
                    0.0 => old[i],
                    1.0 => w[i],
                    _ => 0.5 * w[i] + 0.5 * old[i],
                };
                tau_ok &= got[i] == want;
            }
        }
    }

    // descent on log α lowers α when entropy is above target, raises it below
    let above = temperature_gradient(&[-3.0], -2.0);
    let below = temperature_gradient(&[3.0], -2.0);
    let at = temperature_gradient(&[2.0], -2.0);
    let temp_ok = above == 5.0 && below == -1.0 && at == 0.0;
    Verdict::new(
        target_ok && tau_ok && temp_ok,
        format!("target {target}, tau cases exact {tau_ok}, temperature grads {above}/{below}/{at}"),
    )
}

// ---------------------------------------------------------------- learning

fn last_fifth_mean(rows: &[MetricsRow], total: u64) -> Option<f64> {
    let cut = total - total / 5;
    let late: Vec<f64> = rows
        .iter()
        .filter(|r| r.env_step_at_episode_end > cut)
        .map(|r| r.undiscounted_return)
        .collect();
    (!late.is_empty()).then(|| late.iter().sum::<f64>() / late.len() as f64)
}

fn per_seed_last_fifth(report: &ExperimentReport, total: u64) -> Vec<f64> {
    report
        .runs
        .iter()
        .map(|(_, o)| last_fifth_mean(&o.rows, total).unwrap_or(f64::NAN))
        .collect()
}

fn run(config: &ExperimentConfig, dir: &Path) -> ExperimentReport {
    run_experiment_with(config, dir, &LoopExecutor).unwrap()
}

fn learning_smoke(dir: &Path) -> Verdict {
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");

    // PPO on Reacher2D, returns are negative: "2x better" means half the magnitude
    let steps = 200_000;
    let mut ppo = ExperimentConfig::new("ppo_smoke", "reacher2d", Algorithm::Ppo, vec![16], steps);
    ppo.num_runs = 5;
    ppo.mode = HyperMode::Explicit;
    ppo.ppo = Some(PpoOverrides {
        batch_size: Some(500),
        minibatch_size: Some(25),
        discount: Some(0.99),
        trace_decay: Some(0.95),
        ..PpoOverrides::default()
    });
    let mut random = ppo.clone();
    random.name = "ppo_smoke_random".into();
    random.algorithm = Algorithm::Random;
    random.mode = HyperMode::Baseline;
    let ppo_scores = per_seed_last_fifth(&run(&ppo, dir), steps);
    let random_scores = per_seed_last_fifth(&run(&random, dir), steps);
    let random_mean = random_scores.iter().sum::<f64>() / random_scores.len() as f64;
    let ppo_passes = ppo_scores.iter().filter(|s| **s >= random_mean / 2.0).count();

    // SAC on PoleBalance; returns are seconds balanced
    let steps = 100_000;
    let mut sac = ExperimentConfig::new("sac_smoke", "polebalance", Algorithm::Sac, vec![40], steps);
    sac.num_runs = 5;
    sac.sac = Some(SacOverrides {
        hidden: Some(vec![64, 64]),
        alpha_lr: Some(1e-2),
        ..SacOverrides::default()
    });
    let mut random = sac.clone();
    random.name = "sac_smoke_random".into();
    random.algorithm = Algorithm::Random;
    let sac_scores = per_seed_last_fifth(&run(&sac, dir), steps);
    let random_sac = per_seed_last_fifth(&run(&random, dir), steps);
    let random_sac_mean = random_sac.iter().sum::<f64>() / random_sac.len() as f64;
    let sac_passes = sac_scores.iter().filter(|s| **s >= 3.0 * random_sac_mean).count();

    Verdict::new(
        ppo_passes >= 4 && sac_passes >= 4,
        format!(
            "ppo reacher {ppo_passes}/5 at <= {:.3} (random {random_mean:.3}; seeds {}); sac pole {sac_passes}/5 at >= {:.3} (random {random_sac_mean:.3}; seeds {})",
            random_mean / 2.0,
            fmt(&ppo_scores),
            3.0 * random_sac_mean,
            fmt(&sac_scores)
        ),
    )
}

fn dt_aware_sanity(dir: &Path) -> Verdict {
    let steps = 200_000;
    let mut baseline = ExperimentConfig::new("dt_baseline", "polebalance", Algorithm::Ppo, vec![4], steps);
    baseline.num_runs = 5;
    let mut aware = baseline.clone();
    aware.name = "dt_aware".into();
    aware.mode = HyperMode::DtAware;
    aware.dt_aware = Some(DtAwareConfig::default());
    let mut notes = Vec::new();
    for round in 0..2u64 {
        baseline.base_seed = round * 5;
        aware.base_seed = round * 5;
        let b = run(&baseline, dir).summary[0].mean_average_return.unwrap_or(f64::NAN);
        let a = run(&aware, dir).summary[0].mean_average_return.unwrap_or(f64::NAN);
        notes.push(format!("seeds {}..{}: baseline {b:.3}, dt-aware {a:.3}", round * 5, round * 5 + 4));
        if b != a {
            return Verdict::new(b < a, notes.join("; "));
        }
    }
    Verdict::new(false, format!("{}; still tied", notes.join("; ")))
}

// ---------------------------------------------------------------- determinism

fn determinism(dir: &Path) -> Verdict {
    let mut configs = Vec::new();
    let mut ppo = ExperimentConfig::new("det_ppo", "polebalance", Algorithm::Ppo, vec![8, 16], 10_000);
    ppo.num_runs = 2;
    ppo.base_seed = 11;
    ppo.ppo = Some(PpoOverrides {
        batch_size: Some(200),
        minibatch_size: Some(20),
        ..PpoOverrides::default()
    });
    configs.push(ppo);
    let mut sac = ExperimentConfig::new("det_sac", "polebalance", Algorithm::Sac, vec![40], 8_000);
    sac.num_runs = 2;
    sac.sac = Some(SacOverrides {
        hidden: Some(vec![32, 32]),
        warmup_steps: Some(100),
        ..SacOverrides::default()
    });
    configs.push(sac);
    let mut ac = ExperimentConfig::new("det_ac", "reacher2d", Algorithm::Ac, vec![16], 10_000);
    ac.max_parallel = 2;
    configs.push(ac);

    let mut compared = 0;
    for config in &configs {
        let a = run_experiment(config, &dir.join("first")).unwrap();
        let b = run_experiment(config, &dir.join("second")).unwrap();
        for (spec, _) in &a.runs {
            let rel = Path::new(&format!("{}ms", spec.cycle_time_ms)).join(format!("run{}", spec.run_index)).join("episodes.csv");
            let x = std::fs::read(a.dir.join(&rel)).unwrap();
            let y = std::fs::read(b.dir.join(&rel)).unwrap();
            if x != y {
                return Verdict::new(false, format!("{} {} differs", config.name, rel.display()));
            }
            compared += 1;
        }
    }
    Verdict::new(true, format!("{compared} episodes.csv pairs byte-identical"))
}

// ---------------------------------------------------------------- main

fn main() {
    let dir = tempfile::tempdir().unwrap();
    type Check<'a> = (&'a str, bool, Box<dyn Fn() -> Verdict + 'a>);
    let checks: Vec<Check> = vec![
        ("gradient exactness", true, Box::new(gradient_exactness)),
        ("lambda-return oracle", true, Box::new(lambda_return_oracle)),
        ("cycle-loop exactness", true, Box::new(cycle_loop_exactness)),
        ("schedule table", true, Box::new(schedule_table)),
        ("clipped-branch property", true, Box::new(clipped_branch)),
        ("sac micro-oracles", true, Box::new(sac_micro_oracles)),
        ("determinism", true, Box::new(|| determinism(&dir.path().join("det")))),
        ("learning smoke", false, Box::new(|| learning_smoke(&dir.path().join("smoke")))),
        ("dt-aware sanity", false, Box::new(|| dt_aware_sanity(&dir.path().join("sanity")))),
    ];
    // `cargo test --test acceptance -- <filter>` runs the criteria whose name contains the filter
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut gating_failures = 0;
    for (name, gating, check) in &checks {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let status = if v.pass { "PASS" } else { "FAIL" };
        let note = if !v.pass && !gating { " (reported, not gating)" } else { "" };
        println!("{status} {name}{note}: {} [{:.1}s]", v.detail, start.elapsed().as_secs_f64());
        if !v.pass && *gating {
            gating_failures += 1;
        }
    }
    if gating_failures > 0 {
        eprintln!("{gating_failures} gating criteria failed");
        std::process::exit(1);
    }
}
