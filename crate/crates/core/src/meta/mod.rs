//! Actor-critic learners (PPO and A2C) used both as the meta-learner over
//! outer actions and as the direct baselines on the inner environments.
//!
//! Updates consume only [`RolloutBuffer`]s of `(state, action, reward)`
//! segments; nothing else about the inner environment reaches the learner.

mod buffer;
mod policy;
mod update;

use serde::{Deserialize, Serialize};

pub use buffer::{compute_gae, EpisodeEnd, RolloutBuffer};
pub use policy::{
    log_softmax, softmax, ActionHead, ActorCritic, CategoricalHead, CategoricalPolicy, GaussianHead,
    GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN,
};
pub use update::{clip_grad_norm, loss_and_grad, Adam, Learner, LossKind, LossTerms, UpdateStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ppo,
    A2c,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaHyperparams {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub learning_rate: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Steps collected between updates.
    pub segment_length: usize,
    pub normalize_advantages: bool,
    pub hidden_sizes: Vec<usize>,
    /// Initial Gaussian log standard deviation (meta-learner only).
    pub log_std_init: f64,
}

impl MetaHyperparams {
    /// Meta-learner defaults for PPO.
    pub fn ppo() -> Self {
        MetaHyperparams {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            learning_rate: 3e-4,
            epochs_per_update: 10,
            minibatch_size: 16,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            segment_length: 16,
            normalize_advantages: true,
            hidden_sizes: vec![64, 64],
            log_std_init: -0.5,
        }
    }

    /// Meta-learner defaults for A2C.
    pub fn a2c() -> Self {
        MetaHyperparams {
            learning_rate: 7e-4,
            entropy_coef: 0.01,
            epochs_per_update: 1,
            normalize_advantages: false,
            ..Self::ppo()
        }
    }

    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::Ppo => Self::ppo(),
            Algorithm::A2c => Self::a2c(),
        }
    }

    /// Direct-baseline PPO defaults (single environment).
    pub fn baseline_ppo() -> Self {
        MetaHyperparams {
            segment_length: 2048,
            minibatch_size: 64,
            ..Self::ppo()
        }
    }

    /// Direct-baseline A2C defaults (single environment).
    pub fn baseline_a2c() -> Self {
        MetaHyperparams {
            segment_length: 5,
            gae_lambda: 1.0,
            entropy_coef: 0.0,
            ..Self::a2c()
        }
    }

    pub fn baseline_for(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::Ppo => Self::baseline_ppo(),
            Algorithm::A2c => Self::baseline_a2c(),
        }
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        let err = |m: &str| Err(crate::error::Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return err("gamma and gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0 && self.learning_rate > 0.0 && self.max_grad_norm > 0.0) {
            return err("clip_eps, learning_rate and max_grad_norm must be positive");
        }
        if self.epochs_per_update == 0 || self.minibatch_size == 0 || self.segment_length == 0 {
            return err("epochs_per_update, minibatch_size and segment_length must be positive");
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return err("entropy_coef and value_coef must be non-negative");
        }
        if self.hidden_sizes.contains(&0) {
            return err("hidden sizes must be positive");
        }
        Ok(())
    }
}

/// Running mean/variance (Welford) used to rescale rewards for the learner.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardNormalizer {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RewardNormalizer {
    pub const CLIP: f64 = 10.0;

    /// Folds `r` into the statistics and returns its standardized value.
    pub fn normalize(&mut self, r: f64) -> f64 {
        self.count += 1;
        let delta = r - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (r - self.mean);
        let var = self.m2 / self.count as f64;
        ((r - self.mean) / (var + 1e-8).sqrt()).clamp(-Self::CLIP, Self::CLIP)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }
}
