use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::policy::{ActionHead, ActorCritic};
use super::{Algorithm, MetaHyperparams};
use crate::error::{Error, Result};
use crate::nn::ForwardScratch;
use crate::rng::{rng_from_seed, Rng};

/// Which surrogate the policy term uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// `−mean(min(ρA, clip(ρ, 1−ε, 1+ε)A))`.
    ClippedSurrogate { clip_eps: f64 },
    /// `−mean(log π · A)`.
    PolicyGradient,
}

/// Per-term values of the total loss over one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub policy: f64,
    /// Mean squared value error (before `value_coef`).
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// `policy + value_coef · value − entropy_coef · entropy`.
    pub total: f64,
}

/// Total loss over `batch` and, if requested, its gradient with respect to
/// [`ActorCritic::flat_params`].
pub fn loss_and_grad<H: ActionHead>(
    policy: &ActorCritic<H>,
    buf: &RolloutBuffer<H::Action>,
    batch: &[usize],
    kind: LossKind,
    hp: &MetaHyperparams,
    want_grad: bool,
) -> Result<(LossTerms, Option<Vec<f64>>)> {
    if batch.is_empty() || buf.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if !buf.has_advantages() {
        return Err(Error::Config("advantages must be computed before an update".into()));
    }
    let n = batch.len() as f64;
    let n_actor = policy.actor.len();
    let n_head = policy.head.params().len();
    let mut grad = want_grad.then(|| vec![0.0; policy.n_params()]);
    let mut terms = LossTerms::default();
    let mut scratch = ForwardScratch::default();

    for &i in batch {
        let state = &buf.states[i];
        let adv = buf.advantages[i];
        let ret = buf.returns[i];
        let action = &buf.actions[i];

        let out = policy.actor_spec.forward_into(policy.actor.as_slice(), state, &mut scratch)?.to_vec();
        let logp = policy.head.log_prob(&out, action);
        let ent = policy.head.entropy(&out);
        let value = policy.critic_spec.forward_into(policy.critic.as_slice(), state, &mut scratch)?[0];

        let d_logp = match kind {
            LossKind::ClippedSurrogate { clip_eps } => {
                let log_ratio = logp - buf.log_probs[i];
                let ratio = log_ratio.exp();
                let unclipped = ratio * adv;
                let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv;
                terms.approx_kl += (ratio - 1.0) - log_ratio;
                if (ratio - 1.0).abs() > clip_eps {
                    terms.clip_fraction += 1.0;
                }
                if unclipped <= clipped {
                    terms.policy -= unclipped;
                    -ratio * adv / n
                } else {
                    terms.policy -= clipped;
                    0.0
                }
            }
            LossKind::PolicyGradient => {
                terms.policy -= logp * adv;
                -adv / n
            }
        };
        terms.entropy += ent;
        let verr = value - ret;
        terms.value += verr * verr;

        if let Some(g) = grad.as_mut() {
            let (g_actor, rest) = g.split_at_mut(n_actor);
            let (g_head, g_critic) = rest.split_at_mut(n_head);
            let mut d_out = vec![0.0; out.len()];
            policy
                .head
                .accumulate_grad(&out, action, d_logp, -hp.entropy_coef / n, &mut d_out, g_head);
            policy
                .actor_spec
                .backward_accumulate(policy.actor.as_slice(), state, &d_out, g_actor)?;
            let d_value = hp.value_coef * 2.0 * verr / n;
            policy
                .critic_spec
                .backward_accumulate(policy.critic.as_slice(), state, &[d_value], g_critic)?;
        }
    }
    terms.policy /= n;
    terms.value /= n;
    terms.entropy /= n;
    terms.approx_kl /= n;
    terms.clip_fraction /= n;
    terms.total = terms.policy + hp.value_coef * terms.value - hp.entropy_coef * terms.entropy;
    if !terms.total.is_finite() {
        return Err(Error::NonFinite(format!("loss {terms:?}")));
    }
    Ok((terms, grad))
}

/// Adam with bias correction; minimizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Scales `grad` to at most `max_norm` in L2; returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Statistics of one update, averaged over its gradient steps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss_policy: f64,
    pub loss_value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub n_grad_steps: usize,
}

/// A policy together with its optimizer state.
#[derive(Debug, Clone)]
pub struct Learner<H: ActionHead> {
    pub policy: ActorCritic<H>,
    pub hp: MetaHyperparams,
    pub algorithm: Algorithm,
    adam: Adam,
    shuffle_rng: Rng,
}

impl<H: ActionHead> Learner<H> {
    pub fn new(policy: ActorCritic<H>, algorithm: Algorithm, hp: MetaHyperparams, shuffle_seed: u64) -> Self {
        let adam = Adam::new(policy.n_params(), hp.learning_rate);
        Learner {
            policy,
            hp,
            algorithm,
            adam,
            shuffle_rng: rng_from_seed(shuffle_seed),
        }
    }

    /// Computes advantages for `buf` and runs the configured update.
    pub fn update(&mut self, buf: &mut RolloutBuffer<H::Action>) -> Result<UpdateStats> {
        buf.finish(self.hp.gamma, self.hp.gae_lambda)?;
        match self.algorithm {
            Algorithm::Ppo => self.ppo_update(buf),
            Algorithm::A2c => self.a2c_update(buf),
        }
    }

    fn gradient_step(&mut self, grad: &mut [f64]) -> Result<f64> {
        let norm = clip_grad_norm(grad, self.hp.max_grad_norm);
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient norm".into()));
        }
        let mut flat = self.policy.flat_params();
        self.adam.step(&mut flat, grad);
        self.policy.set_flat_params(&flat)?;
        self.policy.head.project();
        if !self.policy.is_finite() {
            return Err(Error::NonFinite("policy parameters after update".into()));
        }
        Ok(norm)
    }

    /// Clipped-surrogate epochs over shuffled minibatches.
    pub fn ppo_update(&mut self, buf: &mut RolloutBuffer<H::Action>) -> Result<UpdateStats> {
        if !buf.has_advantages() {
            return Err(Error::Config("advantages must be computed before an update".into()));
        }
        if self.hp.normalize_advantages {
            buf.normalize_advantages();
        }
        let kind = LossKind::ClippedSurrogate {
            clip_eps: self.hp.clip_eps,
        };
        let mut stats = UpdateStats::default();
        let mut order: Vec<usize> = (0..buf.len()).collect();
        for _ in 0..self.hp.epochs_per_update {
            order.shuffle(&mut self.shuffle_rng);
            for batch in order.chunks(self.hp.minibatch_size.max(1)) {
                let (terms, grad) = loss_and_grad(&self.policy, buf, batch, kind, &self.hp, true)?;
                let mut grad = grad.expect("gradient requested");
                let norm = self.gradient_step(&mut grad)?;
                accumulate(&mut stats, &terms, norm);
            }
        }
        Ok(finalize(stats))
    }

    /// One gradient step over the whole segment.
    pub fn a2c_update(&mut self, buf: &mut RolloutBuffer<H::Action>) -> Result<UpdateStats> {
        if !buf.has_advantages() {
            return Err(Error::Config("advantages must be computed before an update".into()));
        }
        if self.hp.normalize_advantages {
            buf.normalize_advantages();
        }
        let batch: Vec<usize> = (0..buf.len()).collect();
        let (terms, grad) = loss_and_grad(&self.policy, buf, &batch, LossKind::PolicyGradient, &self.hp, true)?;
        let mut grad = grad.expect("gradient requested");
        let norm = self.gradient_step(&mut grad)?;
        let mut stats = UpdateStats::default();
        accumulate(&mut stats, &terms, norm);
        Ok(finalize(stats))
    }
}

fn accumulate(stats: &mut UpdateStats, terms: &LossTerms, norm: f64) {
    stats.loss_policy += terms.policy;
    stats.loss_value += terms.value;
    stats.entropy += terms.entropy;
    stats.approx_kl += terms.approx_kl;
    stats.clip_fraction += terms.clip_fraction;
    stats.grad_norm += norm;
    stats.n_grad_steps += 1;
}

fn finalize(mut s: UpdateStats) -> UpdateStats {
    let n = s.n_grad_steps.max(1) as f64;
    s.loss_policy /= n;
    s.loss_value /= n;
    s.entropy /= n;
    s.approx_kl /= n;
    s.clip_fraction /= n;
    s.grad_norm /= n;
    s
}
