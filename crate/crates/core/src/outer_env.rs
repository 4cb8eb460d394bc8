//! The outer MDP seen by the meta-learner.
//!
//! An action is a vector of weights for the masked positions of the inner
//! Q-network; the reward is the mean return of the resulting frozen network
//! over `N` evaluation episodes; the state is the difference between the two
//! most recent (clipped) actions. Off-mask weights stay at their initial
//! values for the whole run.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::env::EnvName;
use crate::error::{Error, Result};
use crate::inner::{EvalReport, InnerPolicy};
use crate::nn::{MlpSpec, ParamVector};
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Fixed subset of parameter indices controlled by the meta-learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbvMask {
    indices: Vec<usize>,
    fraction: f64,
    source_seed: u64,
    k: usize,
}

impl RbvMask {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    pub fn len(&self) -> usize {
        self.indices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
    pub fn fraction(&self) -> f64 {
        self.fraction
    }
    pub fn source_seed(&self) -> u64 {
        self.source_seed
    }
    /// Length of the full parameter vector the mask indexes into.
    pub fn full_len(&self) -> usize {
        self.k
    }

    /// Values of `params` at the masked positions.
    pub fn gather(&self, params: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| params[i]).collect()
    }
}

/// `ceil(fraction · k)`, ignoring floating-point noise in the product.
pub fn mask_size(k: usize, fraction: f64) -> usize {
    let raw = fraction * k as f64;
    let rounded = raw.round();
    let m = if (raw - rounded).abs() <= 1e-9 * k as f64 {
        rounded
    } else {
        raw.ceil()
    };
    (m as usize).clamp(1, k)
}

/// Samples `ceil(fraction · k)` distinct indices uniformly without replacement.
pub fn make_mask(k: usize, fraction: f64, seed: u64) -> Result<RbvMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    if k == 0 {
        return Err(Error::InvalidSpec("mask over an empty parameter vector".into()));
    }
    let m = mask_size(k, fraction);
    let mut rng = rng_from_seed(seed);
    let mut indices = index::sample(&mut rng, k, m).into_vec();
    indices.sort_unstable();
    Ok(RbvMask {
        indices,
        fraction,
        source_seed: seed,
        k,
    })
}

/// Weight differences between consecutive inner-learners, restricted to the mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterState(pub Vec<f64>);

/// Proposed weights for the masked positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterAction(pub Vec<f64>);

impl OuterAction {
    pub fn clipped(&self, a_max: f64) -> OuterAction {
        OuterAction(self.0.iter().map(|v| v.clamp(-a_max, a_max)).collect())
    }
}

/// Copy of `base` with the masked entries replaced by the clipped action.
pub fn compose_params(
    base: &ParamVector,
    mask: &RbvMask,
    action: &OuterAction,
    a_max: f64,
) -> Result<ParamVector> {
    if action.0.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            what: "outer action",
            expected: mask.len(),
            got: action.0.len(),
        });
    }
    if base.len() != mask.full_len() {
        return Err(Error::DimensionMismatch {
            what: "base parameters",
            expected: mask.full_len(),
            got: base.len(),
        });
    }
    let mut out = base.clone();
    for (&i, &a) in mask.indices.iter().zip(&action.0) {
        out.0[i] = a.clamp(-a_max, a_max);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterTransition {
    pub state: OuterState,
    /// The action after clipping; this is what was evaluated.
    pub action: OuterAction,
    pub reward: f64,
    pub next_state: OuterState,
    pub truncated: bool,
    pub eval_report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterEnvConfig {
    pub n_eval_episodes: usize,
    pub a_max: f64,
    /// Outer steps per truncated segment.
    pub horizon: usize,
    /// Reuse the same evaluation episodes at every outer step.
    pub fixed_eval_seeds: bool,
    pub eval_threads: usize,
}

impl Default for OuterEnvConfig {
    fn default() -> Self {
        OuterEnvConfig {
            n_eval_episodes: 10,
            a_max: 5.0,
            horizon: 16,
            fixed_eval_seeds: false,
            eval_threads: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OuterEnv {
    env_name: EnvName,
    inner_spec: MlpSpec,
    base_params: ParamVector,
    mask: RbvMask,
    config: OuterEnvConfig,
    eval_seed: u64,
    prev_masked_action: Vec<f64>,
    state: OuterState,
    outer_elapsed: usize,
    eval_counter: u64,
}

impl OuterEnv {
    pub fn new(
        env_name: EnvName,
        inner_spec: MlpSpec,
        base_params: ParamVector,
        mask: RbvMask,
        config: OuterEnvConfig,
        eval_seed: u64,
    ) -> Result<Self> {
        if base_params.len() != inner_spec.param_count() || mask.full_len() != base_params.len() {
            return Err(Error::DimensionMismatch {
                what: "base parameters",
                expected: inner_spec.param_count(),
                got: base_params.len(),
            });
        }
        if config.n_eval_episodes == 0 || config.horizon == 0 {
            return Err(Error::Config(
                "n_eval_episodes and horizon must be positive".into(),
            ));
        }
        if !(config.a_max > 0.0) {
            return Err(Error::Config(format!("a_max must be positive, got {}", config.a_max)));
        }
        let spec = env_name.spec();
        if inner_spec.input_dim() != spec.obs_dim || inner_spec.output_dim() != spec.n_actions {
            return Err(Error::InvalidSpec(format!(
                "inner network {:?} does not fit {} (obs {}, actions {})",
                inner_spec.layer_sizes, env_name, spec.obs_dim, spec.n_actions
            )));
        }
        let m = mask.len();
        let mut env = OuterEnv {
            env_name,
            inner_spec,
            base_params,
            mask,
            config,
            eval_seed,
            prev_masked_action: Vec::new(),
            state: OuterState(vec![0.0; m]),
            outer_elapsed: 0,
            eval_counter: 0,
        };
        env.reset();
        Ok(env)
    }

    pub fn mask(&self) -> &RbvMask {
        &self.mask
    }
    pub fn base_params(&self) -> &ParamVector {
        &self.base_params
    }
    pub fn inner_spec(&self) -> &MlpSpec {
        &self.inner_spec
    }
    pub fn env_name(&self) -> EnvName {
        self.env_name
    }
    pub fn config(&self) -> &OuterEnvConfig {
        &self.config
    }
    pub fn state(&self) -> &OuterState {
        &self.state
    }
    pub fn prev_masked_action(&self) -> &[f64] {
        &self.prev_masked_action
    }
    pub fn outer_elapsed(&self) -> usize {
        self.outer_elapsed
    }
    /// Base parameters at the masked positions (the implicit action before the first step).
    pub fn initial_masked_action(&self) -> Vec<f64> {
        self.mask.gather(self.base_params.as_slice())
    }

    /// Restarts from the initial network. The evaluation seed stream is not rewound.
    pub fn reset(&mut self) -> OuterState {
        self.prev_masked_action = self.initial_masked_action();
        self.outer_elapsed = 0;
        self.state = OuterState(vec![0.0; self.mask.len()]);
        self.state.clone()
    }

    /// Full inner parameter vector for an action.
    pub fn compose(&self, action: &OuterAction) -> Result<ParamVector> {
        compose_params(&self.base_params, &self.mask, action, self.config.a_max)
    }

    pub fn step(&mut self, action: &OuterAction) -> Result<OuterTransition> {
        if action.0.len() != self.mask.len() {
            return Err(Error::DimensionMismatch {
                what: "outer action",
                expected: self.mask.len(),
                got: action.0.len(),
            });
        }
        if action.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("outer action".into()));
        }
        let clipped = action.clipped(self.config.a_max);
        let theta = self.compose(&clipped)?;
        let policy = InnerPolicy::new(self.inner_spec.clone(), theta)?;
        let seed = self.next_eval_seed();
        let report = policy.evaluate_parallel(
            self.env_name,
            self.config.n_eval_episodes,
            seed,
            self.config.eval_threads,
        )?;

        let next_state = OuterState(
            clipped
                .0
                .iter()
                .zip(&self.prev_masked_action)
                .map(|(a, p)| a - p)
                .collect(),
        );
        let state = std::mem::replace(&mut self.state, next_state.clone());
        self.prev_masked_action = clipped.0.clone();
        self.outer_elapsed += 1;
        Ok(OuterTransition {
            state,
            action: clipped,
            reward: report.mean_return,
            next_state,
            truncated: self.outer_elapsed % self.config.horizon == 0,
            eval_report: report,
        })
    }

    fn next_eval_seed(&mut self) -> u64 {
        let idx = if self.config.fixed_eval_seeds {
            0
        } else {
            self.eval_counter
        };
        self.eval_counter += 1;
        derive_seed(self.eval_seed, stream::EVAL, idx)
    }
}
