use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvName;
use crate::error::{Error, Result};
use crate::meta::{Algorithm, MetaHyperparams};
use crate::nn::{Activation, MlpSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Rein2PPO,
    Rein2A2C,
    BaselinePPO,
    BaselineA2C,
}

impl Mode {
    pub fn algorithm(self) -> Algorithm {
        match self {
            Mode::Rein2PPO | Mode::BaselinePPO => Algorithm::Ppo,
            Mode::Rein2A2C | Mode::BaselineA2C => Algorithm::A2c,
        }
    }

    pub fn is_rein2(self) -> bool {
        matches!(self, Mode::Rein2PPO | Mode::Rein2A2C)
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Rein2PPO => "REIN-2 (PPO + DQN)",
            Mode::Rein2A2C => "REIN-2 (A2C + DQN)",
            Mode::BaselinePPO => "PPO",
            Mode::BaselineA2C => "A2C",
        }
    }
}

/// Partial hyperparameters; unset fields keep the algorithm's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    pub gamma: Option<f64>,
    pub gae_lambda: Option<f64>,
    pub clip_eps: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs_per_update: Option<usize>,
    pub minibatch_size: Option<usize>,
    pub entropy_coef: Option<f64>,
    pub value_coef: Option<f64>,
    pub max_grad_norm: Option<f64>,
    pub segment_length: Option<usize>,
    pub normalize_advantages: Option<bool>,
    pub hidden_sizes: Option<Vec<usize>>,
    pub log_std_init: Option<f64>,
}

impl HyperOverrides {
    pub fn apply(&self, mut hp: MetaHyperparams) -> MetaHyperparams {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { hp.$f = v; } )* };
        }
        set!(
            gamma,
            gae_lambda,
            clip_eps,
            learning_rate,
            epochs_per_update,
            minibatch_size,
            entropy_coef,
            value_coef,
            max_grad_norm,
            segment_length,
            normalize_advantages,
            hidden_sizes,
            log_std_init
        );
        hp
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merge(mut self, other: HyperOverrides) -> HyperOverrides {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            gamma,
            gae_lambda,
            clip_eps,
            learning_rate,
            epochs_per_update,
            minibatch_size,
            entropy_coef,
            value_coef,
            max_grad_norm,
            segment_length,
            normalize_advantages,
            hidden_sizes,
            log_std_init
        );
        self
    }
}

/// Config file contents. Every field except `env` and `mode` is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub env: Option<EnvName>,
    pub mode: Option<Mode>,
    pub rbv_fraction: Option<f64>,
    pub n_eval_episodes: Option<usize>,
    pub outer_budget: Option<usize>,
    pub inner_hidden: Option<Vec<usize>>,
    pub inner_activation: Option<Activation>,
    pub meta: Option<HyperOverrides>,
    pub seeds: Option<Vec<u64>>,
    pub a_max: Option<f64>,
    pub fixed_eval_seeds: Option<bool>,
    pub snapshot_steps: Option<Vec<usize>>,
    pub outer_horizon: Option<usize>,
    pub reward_normalization: Option<bool>,
    pub baseline_eval_interval: Option<usize>,
    pub log_stochastic_eval: Option<bool>,
    pub smoothing: Option<f64>,
    pub eval_threads: Option<usize>,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merge(mut self, other: ConfigFile) -> ConfigFile {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            env,
            mode,
            rbv_fraction,
            n_eval_episodes,
            outer_budget,
            inner_hidden,
            inner_activation,
            seeds,
            a_max,
            fixed_eval_seeds,
            snapshot_steps,
            outer_horizon,
            reward_normalization,
            baseline_eval_interval,
            log_stochastic_eval,
            smoothing,
            eval_threads
        );
        self.meta = match (self.meta, other.meta) {
            (Some(mine), Some(theirs)) => Some(mine.merge(theirs)),
            (mine, None) => mine,
            (None, theirs) => theirs,
        };
        self
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let env = self.env.ok_or_else(|| Error::Config("`env` is required".into()))?;
        let mode = self.mode.ok_or_else(|| Error::Config("`mode` is required".into()))?;
        let defaults = EnvDefaults::for_env(env);
        let hp_base = if mode.is_rein2() {
            MetaHyperparams::for_algorithm(mode.algorithm())
        } else {
            MetaHyperparams::baseline_for(mode.algorithm())
        };
        let meta = self.meta.clone().unwrap_or_default().apply(hp_base);
        let snapshot_steps = self.snapshot_steps.clone().unwrap_or_else(|| defaults.snapshot_steps.to_vec());
        let cfg = ExperimentConfig {
            env,
            mode,
            rbv_fraction: self.rbv_fraction.unwrap_or(0.01),
            n_eval_episodes: self.n_eval_episodes.unwrap_or(10),
            outer_budget: self
                .outer_budget
                .unwrap_or_else(|| snapshot_steps.iter().copied().max().unwrap_or(1)),
            inner_hidden: self.inner_hidden.clone().unwrap_or_else(|| vec![64, 64]),
            inner_activation: self.inner_activation.unwrap_or(Activation::Relu),
            meta,
            seeds: self.seeds.clone().unwrap_or_else(|| vec![0, 1, 2]),
            a_max: self.a_max.unwrap_or(5.0),
            fixed_eval_seeds: self.fixed_eval_seeds.unwrap_or(false),
            snapshot_steps,
            outer_horizon: self.outer_horizon.unwrap_or(16),
            reward_normalization: self.reward_normalization.unwrap_or(mode.is_rein2()),
            baseline_eval_interval: self.baseline_eval_interval.unwrap_or(defaults.baseline_eval_interval),
            log_stochastic_eval: self.log_stochastic_eval.unwrap_or(true),
            smoothing: self.smoothing.unwrap_or(0.9),
            eval_threads: self.eval_threads.unwrap_or(1),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

struct EnvDefaults {
    snapshot_steps: &'static [usize],
    baseline_eval_interval: usize,
}

impl EnvDefaults {
    fn for_env(env: EnvName) -> Self {
        match env {
            EnvName::CartPoleV1 => EnvDefaults {
                snapshot_steps: &[75, 1000, 2500],
                baseline_eval_interval: 25,
            },
            EnvName::AcrobotV1 => EnvDefaults {
                snapshot_steps: &[700, 3500, 10000],
                baseline_eval_interval: 100,
            },
            EnvName::MountainCarV0 => EnvDefaults {
                snapshot_steps: &[250, 70000, 150000],
                baseline_eval_interval: 250,
            },
        }
    }
}

/// A fully resolved, validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvName,
    pub mode: Mode,
    pub rbv_fraction: f64,
    pub n_eval_episodes: usize,
    /// Outer steps for REIN-2 runs; training env steps for baselines.
    pub outer_budget: usize,
    pub inner_hidden: Vec<usize>,
    pub inner_activation: Activation,
    pub meta: MetaHyperparams,
    pub seeds: Vec<u64>,
    pub a_max: f64,
    pub fixed_eval_seeds: bool,
    pub snapshot_steps: Vec<usize>,
    pub outer_horizon: usize,
    pub reward_normalization: bool,
    /// Baselines evaluate every this many training env steps.
    pub baseline_eval_interval: usize,
    pub log_stochastic_eval: bool,
    /// Exponential smoothing factor for aggregate curves; 0 disables smoothing.
    pub smoothing: f64,
    pub eval_threads: usize,
}

impl ExperimentConfig {
    /// Defaults for `(env, mode)`.
    pub fn new(env: EnvName, mode: Mode) -> Self {
        ConfigFile {
            env: Some(env),
            mode: Some(mode),
            ..Default::default()
        }
        .resolve()
        .expect("defaults are valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ConfigFile::from_json(&text)?.resolve()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(self.rbv_fraction > 0.0 && self.rbv_fraction <= 1.0) {
            return err(format!("rbv_fraction must lie in (0, 1], got {}", self.rbv_fraction));
        }
        if self.n_eval_episodes == 0 {
            return err("n_eval_episodes must be positive".into());
        }
        if self.outer_budget == 0 {
            return err("outer_budget must be positive".into());
        }
        if self.seeds.is_empty() {
            return err("seeds must be non-empty".into());
        }
        let unique: HashSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return err(format!("duplicate seeds in {:?}", self.seeds));
        }
        if self.inner_hidden.contains(&0) {
            return err("inner_hidden sizes must be positive".into());
        }
        if !(self.a_max > 0.0 && self.a_max.is_finite()) {
            return err(format!("a_max must be positive and finite, got {}", self.a_max));
        }
        if self.outer_horizon == 0 || self.baseline_eval_interval == 0 || self.eval_threads == 0 {
            return err("outer_horizon, baseline_eval_interval and eval_threads must be positive".into());
        }
        if self.snapshot_steps.contains(&0) {
            return err("snapshot steps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return err(format!("smoothing must lie in [0, 1), got {}", self.smoothing));
        }
        self.meta.validate()
    }

    /// `[obs_dim, hidden.., n_actions]` Q-network for the configured environment.
    pub fn inner_spec(&self) -> MlpSpec {
        let s = self.env.spec();
        let mut sizes = vec![s.obs_dim];
        sizes.extend_from_slice(&self.inner_hidden);
        sizes.push(s.n_actions);
        MlpSpec::new(sizes, self.inner_activation).expect("validated sizes")
    }

    /// Same config apart from the seed list.
    pub fn same_experiment(&self, other: &ExperimentConfig) -> bool {
        let mut a = self.clone();
        a.seeds.clear();
        let mut b = other.clone();
        b.seeds.clear();
        a == b
    }
}
