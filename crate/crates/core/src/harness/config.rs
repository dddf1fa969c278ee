use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ac::AcConfig;
use crate::cycle::InteractionConfig;
use crate::envs::{self, EnvConfig};
use crate::ppo::PpoConfig;
use crate::sac::SacConfig;
use crate::schedule::{self, DtAwareConfig, SacGammaRule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ppo,
    Sac,
    Ac,
    /// Uniform actions in `[-1, 1]`, no learning; the reference baseline.
    Random,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppo" => Ok(Self::Ppo),
            "sac" => Ok(Self::Sac),
            "ac" => Ok(Self::Ac),
            "random" => Ok(Self::Random),
            other => Err(Error::config(format!("unknown algorithm {other:?}; expected ppo, sac, ac or random"))),
        }
    }
}

/// How hyper-parameters are chosen at each cycle time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperMode {
    /// Library defaults at every cycle time.
    #[default]
    Baseline,
    /// Batch, minibatch and discounts derived from the `[dt_aware]` table
    /// (PPO) or the `[sac_gamma]` rule (SAC).
    DtAware,
    /// Values from the algorithm's override table.
    Explicit,
}

impl std::str::FromStr for HyperMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "dt-aware" => Ok(Self::DtAware),
            "explicit" => Ok(Self::Explicit),
            other => Err(Error::config(format!(
                "unknown mode {other:?}; expected baseline, dt-aware or explicit"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoOverrides {
    pub batch_size: Option<usize>,
    pub minibatch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub clip: Option<f64>,
    pub discount: Option<f64>,
    pub trace_decay: Option<f64>,
    pub lr: Option<f64>,
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SacOverrides {
    pub replay_capacity: Option<usize>,
    pub learning_period: Option<usize>,
    pub minibatch_size: Option<usize>,
    pub gradient_steps: Option<usize>,
    pub discount: Option<f64>,
    pub target_smoothing: Option<f64>,
    pub policy_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub alpha_lr: Option<f64>,
    pub warmup_steps: Option<usize>,
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcOverrides {
    pub discount: Option<f64>,
    pub policy_lr: Option<f64>,
    pub value_lr: Option<f64>,
    pub hidden: Option<Vec<usize>>,
}

macro_rules! apply {
    ($target:expr, $src:expr, $($field:ident),+) => {
        $(if let Some(v) = &$src.$field { $target.$field = v.clone(); })+
    };
}

impl PpoOverrides {
    fn apply(&self, c: &mut PpoConfig) {
        apply!(c, self, batch_size, minibatch_size, epochs, clip, discount, trace_decay, lr, hidden);
    }
}

impl SacOverrides {
    fn apply(&self, c: &mut SacConfig) {
        apply!(
            c,
            self,
            replay_capacity,
            learning_period,
            minibatch_size,
            gradient_steps,
            discount,
            target_smoothing,
            policy_lr,
            critic_lr,
            alpha_lr,
            warmup_steps,
            hidden
        );
    }
}

impl AcOverrides {
    fn apply(&self, c: &mut AcConfig) {
        apply!(c, self, discount, policy_lr, value_lr, hidden);
    }
}

fn default_runs() -> usize {
    1
}

fn default_parallel() -> usize {
    1
}

/// A full experiment: one algorithm on one environment, swept over cycle
/// times and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: String,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub mode: HyperMode,
    pub cycle_times_ms: Vec<u32>,
    pub total_env_steps: u64,
    #[serde(default = "default_runs")]
    pub num_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Upper bound on concurrently executing runs.
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    /// Runs still going after this many seconds stop and are marked incomplete.
    #[serde(default)]
    pub time_cap_seconds: Option<f64>,
    /// Write elapsed wall time per episode; when off the column holds 0.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub env_timestep_ms: Option<u32>,
    #[serde(default)]
    pub episode_limit_ms: Option<u32>,
    #[serde(default)]
    pub dt_aware: Option<DtAwareConfig>,
    #[serde(default)]
    pub sac_gamma: Option<SacGammaSection>,
    #[serde(default)]
    pub ppo: Option<PpoOverrides>,
    #[serde(default)]
    pub sac: Option<SacOverrides>,
    #[serde(default)]
    pub ac: Option<AcOverrides>,
}

/// A discount rule plus the cycle time at which it was tuned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SacGammaSection {
    #[serde(flatten)]
    pub rule: SacGammaRule,
    pub initial_cycle_time_ms: u32,
}

/// Fully resolved agent hyper-parameters for one cycle time.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentSpec {
    Ppo(PpoConfig),
    Sac(SacConfig),
    Ac(AcConfig),
    Random,
}

impl AgentSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            AgentSpec::Ppo(c) => c.validate(),
            AgentSpec::Sac(c) => c.validate(),
            AgentSpec::Ac(c) => c.validate(),
            AgentSpec::Random => Ok(()),
        }
    }
}

impl ExperimentConfig {
    /// A config with defaults for everything but the required fields.
    pub fn new(name: &str, env: &str, algorithm: Algorithm, cycle_times_ms: Vec<u32>, total_env_steps: u64) -> Self {
        Self {
            name: name.to_string(),
            env: env.to_string(),
            algorithm,
            mode: HyperMode::Baseline,
            cycle_times_ms,
            total_env_steps,
            num_runs: default_runs(),
            base_seed: 0,
            max_parallel: default_parallel(),
            time_cap_seconds: None,
            record_wall_time: false,
            env_timestep_ms: None,
            episode_limit_ms: None,
            dt_aware: None,
            sac_gamma: None,
            ppo: None,
            sac: None,
            ac: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        let default = envs::default_config(&self.env)?;
        EnvConfig::new(
            self.env_timestep_ms.unwrap_or(default.env_timestep_ms),
            self.episode_limit_ms.unwrap_or(default.episode_limit_ms),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == "." || self.name == ".." {
            return Err(Error::config(format!("experiment name {:?} is not a plain directory name", self.name)));
        }
        let env = self.env_config()?;
        if self.cycle_times_ms.is_empty() {
            return Err(Error::config("at least one cycle time is required"));
        }
        for &dt in &self.cycle_times_ms {
            if dt == 0 || dt % env.env_timestep_ms != 0 {
                return Err(Error::config(format!(
                    "cycle time {dt} ms is not a positive integer multiple of the {} ms timestep of {}",
                    env.env_timestep_ms, self.env
                )));
            }
        }
        if self.total_env_steps == 0 || self.num_runs == 0 || self.max_parallel == 0 {
            return Err(Error::config("total_env_steps, num_runs and max_parallel must be >= 1"));
        }
        if let Some(cap) = self.time_cap_seconds {
            if !(cap > 0.0) {
                return Err(Error::config("time cap must be positive"));
            }
        }
        match (self.mode, self.algorithm) {
            (HyperMode::DtAware, Algorithm::Ppo) if self.dt_aware.is_none() => {
                return Err(Error::config("mode dt-aware requires a [dt_aware] table"));
            }
            (HyperMode::DtAware, Algorithm::Sac) if self.sac_gamma.is_none() => {
                return Err(Error::config("mode dt-aware for sac requires a [sac_gamma] table"));
            }
            (HyperMode::DtAware, Algorithm::Ac | Algorithm::Random) => {
                return Err(Error::config(format!("mode dt-aware is not defined for {}", self.algorithm_key())));
            }
            (HyperMode::Explicit, alg) => {
                let present = match alg {
                    Algorithm::Ppo => self.ppo.is_some(),
                    Algorithm::Sac => self.sac.is_some(),
                    Algorithm::Ac => self.ac.is_some(),
                    Algorithm::Random => true,
                };
                if !present {
                    return Err(Error::config(format!(
                        "mode explicit requires a [{}] table",
                        self.algorithm_key()
                    )));
                }
            }
            _ => {}
        }
        if let Some(d) = &self.dt_aware {
            d.validate()?;
        }
        for &dt in &self.cycle_times_ms {
            self.agent_spec(dt)?.validate()?;
        }
        Ok(())
    }

    fn algorithm_key(&self) -> &'static str {
        match self.algorithm {
            Algorithm::Ppo => "ppo",
            Algorithm::Sac => "sac",
            Algorithm::Ac => "ac",
            Algorithm::Random => "random",
        }
    }

    /// Hyper-parameters for one cycle time. Override tables apply last in
    /// every mode.
    pub fn agent_spec(&self, cycle_time_ms: u32) -> Result<AgentSpec> {
        match self.algorithm {
            Algorithm::Ppo => {
                let mut c = PpoConfig::default();
                if self.mode == HyperMode::DtAware {
                    let d = self.dt_aware.as_ref().ok_or_else(|| Error::config("missing [dt_aware] table"))?;
                    c.batch_size = schedule::scale_batch(d, cycle_time_ms)?;
                    c.minibatch_size = schedule::scale_minibatch(d, cycle_time_ms)?;
                    c.discount = schedule::gamma_dt(d, cycle_time_ms)?;
                    c.trace_decay = schedule::lambda_dt(d, cycle_time_ms)?;
                }
                if let Some(o) = &self.ppo {
                    o.apply(&mut c);
                }
                Ok(AgentSpec::Ppo(c))
            }
            Algorithm::Sac => {
                let mut c = SacConfig::default();
                if self.mode == HyperMode::DtAware {
                    let g = self.sac_gamma.as_ref().ok_or_else(|| Error::config("missing [sac_gamma] table"))?;
                    c.discount = schedule::sac_gamma(&g.rule, cycle_time_ms, g.initial_cycle_time_ms)?;
                }
                if let Some(o) = &self.sac {
                    o.apply(&mut c);
                }
                Ok(AgentSpec::Sac(c))
            }
            Algorithm::Ac => {
                let mut c = AcConfig::default();
                if let Some(o) = &self.ac {
                    o.apply(&mut c);
                }
                Ok(AgentSpec::Ac(c))
            }
            Algorithm::Random => Ok(AgentSpec::Random),
        }
    }

    pub fn interaction_config(&self, cycle_time_ms: u32) -> Result<InteractionConfig> {
        let env = self.env_config()?;
        let (learning_period, buffer_capacity) = match self.agent_spec(cycle_time_ms)? {
            AgentSpec::Ppo(c) => (c.batch_size, c.batch_size),
            AgentSpec::Sac(c) => (c.learning_period, c.replay_capacity),
            AgentSpec::Ac(_) | AgentSpec::Random => (1, 1),
        };
        let config = InteractionConfig {
            action_cycle_time_ms: cycle_time_ms,
            env_timestep_ms: env.env_timestep_ms,
            learning_period,
            buffer_capacity,
        };
        config.validate()?;
        Ok(config)
    }
}
