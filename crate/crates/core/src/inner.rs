//! Frozen-weight Q-network policies and their multi-episode evaluation.

use serde::{Deserialize, Serialize};

use crate::env::{make_env, EnvName};
use crate::error::{Error, Result};
use crate::nn::{ForwardScratch, MlpSpec, ParamVector};
use crate::rng::{derive_seed, stream};

/// An inner-learner. Its parameters are never modified by evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerPolicy {
    spec: MlpSpec,
    params: ParamVector,
}

impl InnerPolicy {
    pub fn new(spec: MlpSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::DimensionMismatch {
                what: "inner policy parameters",
                expected: spec.param_count(),
                got: params.len(),
            });
        }
        Ok(InnerPolicy { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    /// Argmax of the Q-values; ties go to the lowest action index.
    pub fn act_greedy(&self, obs: &[f64]) -> Result<usize> {
        let mut scratch = ForwardScratch::default();
        self.act_greedy_with(obs, &mut scratch)
    }

    fn act_greedy_with(&self, obs: &[f64], scratch: &mut ForwardScratch) -> Result<usize> {
        let q = self.spec.forward_into(self.params.as_slice(), obs, scratch)?;
        Ok(argmax(q))
    }

    /// Runs `n_episodes` greedy episodes; episode `i` uses a fresh environment
    /// seeded from `(seed, i)`.
    pub fn evaluate(&self, env_name: EnvName, n_episodes: usize, seed: u64) -> Result<EvalReport> {
        let episodes = (0..n_episodes)
            .map(|i| self.run_episode(env_name, episode_seed(seed, i)))
            .collect::<Result<Vec<_>>>()?;
        EvalReport::from_episodes(episodes)
    }

    /// Same result as [`InnerPolicy::evaluate`], with episodes spread over
    /// up to `threads` workers.
    pub fn evaluate_parallel(
        &self,
        env_name: EnvName,
        n_episodes: usize,
        seed: u64,
        threads: usize,
    ) -> Result<EvalReport> {
        let threads = threads.clamp(1, n_episodes.max(1));
        if threads == 1 {
            return self.evaluate(env_name, n_episodes, seed);
        }
        let mut results: Vec<Option<Result<(f64, usize)>>> = (0..n_episodes).map(|_| None).collect();
        std::thread::scope(|s| {
            for (w, chunk) in results.chunks_mut(n_episodes.div_ceil(threads)).enumerate() {
                let base = w * n_episodes.div_ceil(threads);
                s.spawn(move || {
                    for (j, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(self.run_episode(env_name, episode_seed(seed, base + j)));
                    }
                });
            }
        });
        let episodes = results
            .into_iter()
            .map(|r| r.expect("every episode slot filled"))
            .collect::<Result<Vec<_>>>()?;
        EvalReport::from_episodes(episodes)
    }

    fn run_episode(&self, env_name: EnvName, seed: u64) -> Result<(f64, usize)> {
        let mut env = make_env(env_name, seed);
        let mut scratch = ForwardScratch::default();
        let mut obs = env.reset();
        let mut ret = 0.0;
        loop {
            let a = self.act_greedy_with(&obs, &mut scratch)?;
            let out = env.step(a)?;
            ret += out.reward;
            if out.done() {
                return Ok((ret, env.elapsed_steps()));
            }
            obs = out.observation;
        }
    }
}

pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    derive_seed(seed, stream::EPISODE, episode as u64)
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Outcome of one multi-episode evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episode_returns: Vec<f64>,
    pub episode_lengths: Vec<usize>,
    pub mean_return: f64,
    pub total_inner_steps: usize,
}

impl EvalReport {
    pub fn from_episodes(episodes: Vec<(f64, usize)>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Config("evaluation needs at least one episode".into()));
        }
        let (episode_returns, episode_lengths): (Vec<f64>, Vec<usize>) = episodes.into_iter().unzip();
        let mean_return = episode_returns.iter().sum::<f64>() / episode_returns.len() as f64;
        let total_inner_steps = episode_lengths.iter().sum();
        Ok(EvalReport {
            episode_returns,
            episode_lengths,
            mean_return,
            total_inner_steps,
        })
    }

    pub fn min_return(&self) -> f64 {
        self.episode_returns.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_return(&self) -> f64 {
        self.episode_returns.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_length(&self) -> f64 {
        self.total_inner_steps as f64 / self.episode_lengths.len() as f64
    }
}
