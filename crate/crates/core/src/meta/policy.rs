use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::inner::argmax;
use crate::nn::{Activation, ForwardScratch, MlpSpec, ParamVector};
use crate::rng::{derive_seed, Rng};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Maps an actor network output to an action distribution.
///
/// A head may own trainable parameters of its own (the Gaussian log-std);
/// they are optimized jointly with the actor and critic.
pub trait ActionHead: Clone + std::fmt::Debug {
    type Action: Clone + std::fmt::Debug + PartialEq;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn log_prob(&self, out: &[f64], action: &Self::Action) -> f64;
    fn entropy(&self, out: &[f64]) -> f64;

    /// Adds `w_logp · ∇log π(action) + w_ent · ∇H` into the gradients with
    /// respect to the actor output (`d_out`) and the head parameters (`d_head`).
    fn accumulate_grad(
        &self,
        out: &[f64],
        action: &Self::Action,
        w_logp: f64,
        w_ent: f64,
        d_out: &mut [f64],
        d_head: &mut [f64],
    );

    fn sample(&self, out: &[f64], rng: &mut Rng) -> Self::Action;
    /// The most likely action.
    fn mode(&self, out: &[f64]) -> Self::Action;

    /// Projects head parameters back into their valid range after an update.
    fn project(&mut self) {}
}

/// Diagonal Gaussian with a state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub log_std: Vec<f64>,
}

impl ActionHead for GaussianHead {
    type Action = Vec<f64>;

    fn params(&self) -> &[f64] {
        &self.log_std
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.log_std
    }

    fn log_prob(&self, mean: &[f64], action: &Vec<f64>) -> f64 {
        mean.iter()
            .zip(action)
            .zip(&self.log_std)
            .map(|((&mu, &a), &ls)| {
                let z = (a - mu) * (-ls).exp();
                -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    fn entropy(&self, _mean: &[f64]) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
    }

    fn accumulate_grad(
        &self,
        mean: &[f64],
        action: &Vec<f64>,
        w_logp: f64,
        w_ent: f64,
        d_out: &mut [f64],
        d_head: &mut [f64],
    ) {
        for j in 0..mean.len() {
            let inv_var = (-2.0 * self.log_std[j]).exp();
            let diff = action[j] - mean[j];
            d_out[j] += w_logp * diff * inv_var;
            d_head[j] += w_logp * (diff * diff * inv_var - 1.0) + w_ent;
        }
    }

    fn sample(&self, mean: &[f64], rng: &mut Rng) -> Vec<f64> {
        mean.iter()
            .zip(&self.log_std)
            .map(|(&mu, &ls)| {
                let eps: f64 = rng.sample(StandardNormal);
                mu + ls.exp() * eps
            })
            .collect()
    }

    fn mode(&self, mean: &[f64]) -> Vec<f64> {
        mean.to_vec()
    }

    fn project(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

/// Softmax over logits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoricalHead;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl ActionHead for CategoricalHead {
    type Action = usize;

    fn params(&self) -> &[f64] {
        &[]
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut []
    }

    fn log_prob(&self, logits: &[f64], action: &usize) -> f64 {
        log_softmax(logits)[*action]
    }

    fn entropy(&self, logits: &[f64]) -> f64 {
        let logp = log_softmax(logits);
        -logp.iter().map(|lp| lp.exp() * lp).sum::<f64>()
    }

    fn accumulate_grad(
        &self,
        logits: &[f64],
        action: &usize,
        w_logp: f64,
        w_ent: f64,
        d_out: &mut [f64],
        _d_head: &mut [f64],
    ) {
        let logp = log_softmax(logits);
        let h = -logp.iter().map(|lp| lp.exp() * lp).sum::<f64>();
        for (i, &lp) in logp.iter().enumerate() {
            let p = lp.exp();
            let onehot = if i == *action { 1.0 } else { 0.0 };
            d_out[i] += w_logp * (onehot - p) - w_ent * p * (lp + h);
        }
    }

    fn sample(&self, logits: &[f64], rng: &mut Rng) -> usize {
        let probs = softmax(logits);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }

    fn mode(&self, logits: &[f64]) -> usize {
        argmax(logits)
    }
}

/// Actor network, action head and critic network.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic<H: ActionHead> {
    pub actor_spec: MlpSpec,
    pub actor: ParamVector,
    pub head: H,
    pub critic_spec: MlpSpec,
    pub critic: ParamVector,
}

pub type GaussianPolicy = ActorCritic<GaussianHead>;
pub type CategoricalPolicy = ActorCritic<CategoricalHead>;

/// Glorot init with the output layer's weights scaled down.
fn init_network(spec: &MlpSpec, seed: u64, out_scale: f64) -> ParamVector {
    let mut p = spec.init_params(seed);
    let last = spec.n_layers() - 1;
    for w in &mut p.as_mut_slice()[spec.weight_range(last)] {
        *w *= out_scale;
    }
    p
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

impl GaussianPolicy {
    /// Actor `[m, hidden.., m]` whose initial mean output is `init_mean` plus a
    /// small state-dependent term; critic `[m, hidden.., 1]`.
    pub fn new_gaussian(
        init_mean: &[f64],
        hidden: &[usize],
        activation: Activation,
        log_std_init: f64,
        seed: u64,
    ) -> Result<Self> {
        let m = init_mean.len();
        let actor_spec = MlpSpec::new(layer_sizes(m, hidden, m), activation)?;
        let critic_spec = MlpSpec::new(layer_sizes(m, hidden, 1), activation)?;
        let mut actor = init_network(&actor_spec, derive_seed(seed, 0, 0), 0.01);
        let last = actor_spec.n_layers() - 1;
        actor.as_mut_slice()[actor_spec.bias_range(last)].copy_from_slice(init_mean);
        let critic = init_network(&critic_spec, derive_seed(seed, 0, 1), 1.0);
        Ok(ActorCritic {
            actor_spec,
            actor,
            head: GaussianHead {
                log_std: vec![log_std_init.clamp(LOG_STD_MIN, LOG_STD_MAX); m],
            },
            critic_spec,
            critic,
        })
    }
}

impl CategoricalPolicy {
    pub fn new_categorical(
        obs_dim: usize,
        n_actions: usize,
        hidden: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let actor_spec = MlpSpec::new(layer_sizes(obs_dim, hidden, n_actions), activation)?;
        let critic_spec = MlpSpec::new(layer_sizes(obs_dim, hidden, 1), activation)?;
        Ok(ActorCritic {
            actor: init_network(&actor_spec, derive_seed(seed, 0, 0), 0.01),
            critic: init_network(&critic_spec, derive_seed(seed, 0, 1), 1.0),
            actor_spec,
            head: CategoricalHead,
            critic_spec,
        })
    }
}

impl<H: ActionHead> ActorCritic<H> {
    pub fn actor_output(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.actor_spec.forward(&self.actor, input)
    }

    pub fn value(&self, input: &[f64]) -> Result<f64> {
        let mut scratch = ForwardScratch::default();
        Ok(self.critic_spec.forward_into(self.critic.as_slice(), input, &mut scratch)?[0])
    }

    /// Samples an action; returns it with its log-probability.
    pub fn act(&self, input: &[f64], rng: &mut Rng) -> Result<(H::Action, f64)> {
        let out = self.actor_output(input)?;
        let a = self.head.sample(&out, rng);
        let lp = self.head.log_prob(&out, &a);
        Ok((a, lp))
    }

    pub fn act_deterministic(&self, input: &[f64]) -> Result<H::Action> {
        Ok(self.head.mode(&self.actor_output(input)?))
    }

    pub fn n_params(&self) -> usize {
        self.actor.len() + self.head.params().len() + self.critic.len()
    }

    /// Actor, head and critic parameters concatenated in that order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(self.actor.as_slice());
        v.extend_from_slice(self.head.params());
        v.extend_from_slice(self.critic.as_slice());
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                what: "flat policy parameters",
                expected: self.n_params(),
                got: flat.len(),
            });
        }
        let (a, rest) = flat.split_at(self.actor.len());
        let (h, c) = rest.split_at(self.head.params().len());
        self.actor.as_mut_slice().copy_from_slice(a);
        self.head.params_mut().copy_from_slice(h);
        self.critic.as_mut_slice().copy_from_slice(c);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite() && self.head.params().iter().all(|v| v.is_finite())
    }
}
