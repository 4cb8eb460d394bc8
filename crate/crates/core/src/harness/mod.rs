//! Experiment orchestration: the REIN-2 outer loop, direct baselines, seed
//! aggregation, snapshot tables and the RBV sweep.

mod config;
mod log;
mod report;

use std::time::Instant;

pub use config::{ConfigFile, ExperimentConfig, HyperOverrides, Mode};
pub use log::{RunLog, StepRecord, StochasticEval, CSV_COLUMNS};
pub use report::{
    aggregate_seeds, run_rbv_sweep, snapshot_table, AggregateCurve, SnapshotTable, SweepEntry, SweepReport,
};

use crate::env::make_env;
use crate::error::{Error, Result};
use crate::inner::{EvalReport, InnerPolicy};
use crate::meta::{
    ActionHead, CategoricalPolicy, EpisodeEnd, GaussianPolicy, Learner, RewardNormalizer, RolloutBuffer,
    UpdateStats,
};
use crate::nn::Activation;
use crate::outer_env::{make_mask, OuterAction, OuterEnv, OuterEnvConfig};
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Worker cap: `REIN2_THREADS` if set, otherwise the available parallelism.
pub fn max_threads() -> usize {
    std::env::var("REIN2_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Running best and cumulative sample count shared by both run kinds.
#[derive(Default)]
struct Tracker {
    best: Option<f64>,
    started: Option<Instant>,
    last: Option<Instant>,
}

impl Tracker {
    fn record(
        &mut self,
        outer_step: usize,
        inner_env_steps_cum: u64,
        report: &EvalReport,
        normalized_reward: Option<f64>,
        update: Option<UpdateStats>,
    ) -> StepRecord {
        let now = Instant::now();
        let since = self.last.or(self.started).unwrap_or(now);
        self.last = Some(now);
        let raw = report.mean_return;
        let best = self.best.map_or(raw, |b| b.max(raw));
        self.best = Some(best);
        StepRecord {
            outer_step,
            inner_env_steps_cum,
            raw_reward: raw,
            normalized_reward,
            best_so_far: best,
            eval_return_min: report.min_return(),
            eval_return_max: report.max_return(),
            eval_len_mean: report.mean_length(),
            update,
            wall_ms: now.duration_since(since).as_secs_f64() * 1e3,
        }
    }
}

/// Wraps numerical failures into a partial log; other errors propagate.
fn finish_run(mut log: RunLog, result: Result<()>) -> Result<RunLog> {
    match result {
        Ok(()) => Ok(log),
        Err(Error::NonFinite(msg)) => {
            log.aborted = Some(msg);
            Ok(log)
        }
        Err(e) => Err(e),
    }
}

/// The meta-learning loop: act, evaluate the generated network, store the
/// transition, and update the meta-learner after every full segment.
pub fn run_rein2(config: &ExperimentConfig, seed: u64) -> Result<RunLog> {
    if !config.mode.is_rein2() {
        return Err(Error::Config(format!("run_rein2 called with mode {:?}", config.mode)));
    }
    config.validate()?;
    let inner_spec = config.inner_spec();
    let k = inner_spec.param_count();
    let base = inner_spec.init_params(derive_seed(seed, stream::INNER_INIT, 0));
    let mask = make_mask(k, config.rbv_fraction, derive_seed(seed, stream::MASK, 0))?;
    let mut outer = OuterEnv::new(
        config.env,
        inner_spec,
        base,
        mask,
        OuterEnvConfig {
            n_eval_episodes: config.n_eval_episodes,
            a_max: config.a_max,
            horizon: config.outer_horizon,
            fixed_eval_seeds: config.fixed_eval_seeds,
            eval_threads: config.eval_threads,
        },
        derive_seed(seed, stream::EVAL, 0),
    )?;
    let hp = config.meta.clone();
    let policy = GaussianPolicy::new_gaussian(
        &outer.initial_masked_action(),
        &hp.hidden_sizes,
        Activation::Tanh,
        hp.log_std_init,
        derive_seed(seed, stream::META_INIT, 0),
    )?;
    let mut learner = Learner::new(
        policy,
        config.mode.algorithm(),
        hp.clone(),
        derive_seed(seed, stream::SHUFFLE, 0),
    );
    let mut sample_rng = rng_from_seed(derive_seed(seed, stream::META_SAMPLE, 0));

    let mut log = RunLog {
        config: config.clone(),
        seed,
        k: Some(k),
        mask_size: Some(outer.mask().len()),
        records: Vec::with_capacity(config.outer_budget),
        stochastic_eval: Vec::new(),
        aborted: None,
    };
    let mut tracker = Tracker {
        started: Some(Instant::now()),
        ..Default::default()
    };
    let mut normalizer = RewardNormalizer::default();
    let mut buffer = RolloutBuffer::default();
    let mut inner_steps: u64 = 0;
    let mut state = outer.reset();

    let result = (|| -> Result<()> {
        for t in 1..=config.outer_budget {
            let (action, log_prob) = learner.policy.act(&state.0, &mut sample_rng)?;
            let value = learner.policy.value(&state.0)?;
            let tr = outer.step(&OuterAction(action.clone()))?;
            inner_steps += tr.eval_report.total_inner_steps as u64;

            let reward = if config.reward_normalization {
                normalizer.normalize(tr.reward)
            } else {
                tr.reward
            };
            let end = if tr.truncated {
                EpisodeEnd::Truncated {
                    bootstrap_value: learner.policy.value(&tr.next_state.0)?,
                }
            } else {
                EpisodeEnd::Continues
            };
            buffer.push(state.0, action, log_prob, reward, value, end);
            state = tr.next_state;

            let update = if buffer.len() == hp.segment_length {
                buffer.bootstrap_value = Some(learner.policy.value(&state.0)?);
                let stats = learner.update(&mut buffer)?;
                buffer.clear();
                Some(stats)
            } else {
                None
            };
            let normalized = config.reward_normalization.then_some(reward);
            log.records
                .push(tracker.record(t, inner_steps, &tr.eval_report, normalized, update));
        }
        Ok(())
    })();
    finish_run(log, result)
}

/// Trains a categorical actor-critic directly on the inner environment and
/// evaluates it every `baseline_eval_interval` env steps.
pub fn run_baseline(config: &ExperimentConfig, seed: u64) -> Result<RunLog> {
    if config.mode.is_rein2() {
        return Err(Error::Config(format!("run_baseline called with mode {:?}", config.mode)));
    }
    config.validate()?;
    let spec = config.env.spec();
    let hp = config.meta.clone();
    let policy = CategoricalPolicy::new_categorical(
        spec.obs_dim,
        spec.n_actions,
        &hp.hidden_sizes,
        Activation::Tanh,
        derive_seed(seed, stream::META_INIT, 0),
    )?;
    let mut learner = Learner::new(
        policy,
        config.mode.algorithm(),
        hp.clone(),
        derive_seed(seed, stream::SHUFFLE, 0),
    );
    let mut sample_rng = rng_from_seed(derive_seed(seed, stream::META_SAMPLE, 0));
    let mut env = make_env(config.env, derive_seed(seed, stream::BASELINE_ENV, 0));
    let mut normalizer = RewardNormalizer::default();

    let mut log = RunLog {
        config: config.clone(),
        seed,
        k: None,
        mask_size: None,
        records: Vec::new(),
        stochastic_eval: Vec::new(),
        aborted: None,
    };
    let mut tracker = Tracker {
        started: Some(Instant::now()),
        ..Default::default()
    };

    let result = (|| -> Result<()> {
        let mut obs = env.reset();
        let mut buffer = RolloutBuffer::default();
        let mut steps = 0usize;
        let mut pending_update: Option<UpdateStats> = None;
        let mut eval_index = 0u64;
        while steps < config.outer_budget {
            while buffer.len() < hp.segment_length && steps < config.outer_budget {
                let (action, log_prob) = learner.policy.act(&obs, &mut sample_rng)?;
                let value = learner.policy.value(&obs)?;
                let out = env.step(action)?;
                steps += 1;
                let end = if out.terminated {
                    EpisodeEnd::Terminated
                } else if out.truncated {
                    EpisodeEnd::Truncated {
                        bootstrap_value: learner.policy.value(&out.observation)?,
                    }
                } else {
                    EpisodeEnd::Continues
                };
                let reward = if config.reward_normalization {
                    normalizer.normalize(out.reward)
                } else {
                    out.reward
                };
                buffer.push(obs, action, log_prob, reward, value, end);
                obs = if out.done() { env.reset() } else { out.observation };

                if steps % config.baseline_eval_interval == 0 {
                    let eval_seed = derive_seed(seed, stream::EVAL, eval_index);
                    eval_index += 1;
                    let greedy = InnerPolicy::new(learner.policy.actor_spec.clone(), learner.policy.actor.clone())?
                        .evaluate(config.env, config.n_eval_episodes, eval_seed)?;
                    if config.log_stochastic_eval {
                        let mean = stochastic_eval(&learner.policy, config, eval_seed)?;
                        log.stochastic_eval.push(StochasticEval {
                            step: steps,
                            mean_return: mean,
                        });
                    }
                    log.records.push(tracker.record(
                        steps,
                        steps as u64,
                        &greedy,
                        None,
                        pending_update.take(),
                    ));
                }
            }
            if buffer.len() == hp.segment_length {
                buffer.bootstrap_value = Some(learner.policy.value(&obs)?);
                pending_update = Some(learner.update(&mut buffer)?);
                buffer.clear();
            }
        }
        Ok(())
    })();
    finish_run(log, result)
}

/// Mean return of `n_eval_episodes` episodes with sampled actions.
fn stochastic_eval(policy: &CategoricalPolicy, config: &ExperimentConfig, seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, stream::META_SAMPLE, 1));
    let mut total = 0.0;
    for i in 0..config.n_eval_episodes {
        let mut env = make_env(config.env, crate::inner::episode_seed(seed, i));
        let mut obs = env.reset();
        loop {
            let logits = policy.actor_output(&obs)?;
            let a = policy.head.sample(&logits, &mut rng);
            let out = env.step(a)?;
            total += out.reward;
            if out.done() {
                break;
            }
            obs = out.observation;
        }
    }
    Ok(total / config.n_eval_episodes as f64)
}

/// Dispatches on the config's mode.
pub fn run(config: &ExperimentConfig, seed: u64) -> Result<RunLog> {
    if config.mode.is_rein2() {
        run_rein2(config, seed)
    } else {
        run_baseline(config, seed)
    }
}

/// Runs every seed of `config`, up to [`max_threads`] at a time. Logs are
/// returned in seed order.
pub fn run_seeds(config: &ExperimentConfig) -> Result<Vec<RunLog>> {
    run_jobs(config.seeds.iter().map(|&s| (config.clone(), s)).collect())
}

pub(crate) fn run_jobs(jobs: Vec<(ExperimentConfig, u64)>) -> Result<Vec<RunLog>> {
    let threads = max_threads().min(jobs.len()).max(1);
    if threads == 1 {
        return jobs.iter().map(|(c, s)| run(c, *s)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<std::sync::Mutex<Option<Result<RunLog>>>> =
        (0..jobs.len()).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let r = run(&jobs[i].0, jobs[i].1);
                *slots[i].lock().expect("unpoisoned") = Some(r);
            });
        }
    });
    slots
        .iter_mut()
        .map(|m| m.get_mut().expect("unpoisoned").take().expect("job ran"))
        .collect()
}
