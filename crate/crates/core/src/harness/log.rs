use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::env::{AcrobotParams, CartPoleParams, EnvName, MountainCarParams};
use crate::error::{Error, Result};
use crate::meta::UpdateStats;

/// CSV header, in column order.
pub const CSV_COLUMNS: [&str; 13] = [
    "outer_step",
    "inner_env_steps_cum",
    "raw_reward",
    "normalized_reward",
    "best_so_far",
    "eval_return_min",
    "eval_return_max",
    "eval_len_mean",
    "loss_policy",
    "loss_value",
    "entropy",
    "approx_kl",
    "wall_ms",
];

/// One logged evaluation.
///
/// For REIN-2 runs there is one record per outer step. For baselines,
/// `outer_step` holds the number of training env steps at evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub outer_step: usize,
    pub inner_env_steps_cum: u64,
    pub raw_reward: f64,
    pub normalized_reward: Option<f64>,
    pub best_so_far: f64,
    pub eval_return_min: f64,
    pub eval_return_max: f64,
    pub eval_len_mean: f64,
    /// Present on steps that completed an update.
    pub update: Option<UpdateStats>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticEval {
    pub step: usize,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: ExperimentConfig,
    pub seed: u64,
    /// Inner parameter count and mask size (REIN-2 runs).
    pub k: Option<usize>,
    pub mask_size: Option<usize>,
    pub records: Vec<StepRecord>,
    /// Sampling-mode evaluations of baselines, alongside the greedy ones in `records`.
    pub stochastic_eval: Vec<StochasticEval>,
    /// Set when the run stopped early on a numerical failure.
    pub aborted: Option<String>,
}

impl RunLog {
    pub fn raw_rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.raw_reward).collect()
    }

    /// Equality of everything except wall-clock timings.
    pub fn same_trajectory(&self, other: &RunLog) -> bool {
        let strip = |log: &RunLog| {
            let mut l = log.clone();
            l.records.iter_mut().for_each(|r| r.wall_ms = 0.0);
            l
        };
        strip(self) == strip(other)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(CSV_COLUMNS)?;
        for r in &self.records {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let u = r.update.as_ref();
            wtr.write_record([
                r.outer_step.to_string(),
                r.inner_env_steps_cum.to_string(),
                r.raw_reward.to_string(),
                opt(r.normalized_reward),
                r.best_so_far.to_string(),
                r.eval_return_min.to_string(),
                r.eval_return_max.to_string(),
                r.eval_len_mean.to_string(),
                opt(u.map(|s| s.loss_policy)),
                opt(u.map(|s| s.loss_value)),
                opt(u.map(|s| s.entropy)),
                opt(u.map(|s| s.approx_kl)),
                format!("{:.3}", r.wall_ms),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Parses the CSV written by [`RunLog::write_csv`]. Update statistics
    /// not stored in the CSV (grad norm, clip fraction) read back as zero.
    pub fn read_csv_records<R: std::io::Read>(r: R) -> Result<Vec<StepRecord>> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != CSV_COLUMNS {
            return Err(Error::Format(format!("unexpected CSV header {header:?}")));
        }
        let mut out = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let f = |i: usize| -> Result<f64> {
                row[i].parse::<f64>().map_err(|e| Error::Format(format!("column {}: {e}", CSV_COLUMNS[i])))
            };
            let opt = |i: usize| -> Result<Option<f64>> {
                if row[i].is_empty() {
                    Ok(None)
                } else {
                    f(i).map(Some)
                }
            };
            let update = match (opt(8)?, opt(9)?, opt(10)?, opt(11)?) {
                (Some(p), Some(v), Some(e), Some(k)) => Some(UpdateStats {
                    loss_policy: p,
                    loss_value: v,
                    entropy: e,
                    approx_kl: k,
                    ..Default::default()
                }),
                _ => None,
            };
            out.push(StepRecord {
                outer_step: row[0].parse().map_err(|e| Error::Format(format!("outer_step: {e}")))?,
                inner_env_steps_cum: row[1]
                    .parse()
                    .map_err(|e| Error::Format(format!("inner_env_steps_cum: {e}")))?,
                raw_reward: f(2)?,
                normalized_reward: opt(3)?,
                best_so_far: f(4)?,
                eval_return_min: f(5)?,
                eval_return_max: f(6)?,
                eval_len_mean: f(7)?,
                update,
                wall_ms: f(12)?,
            });
        }
        Ok(out)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`; returns the CSV path.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        self.write_csv(fs::File::create(&csv_path)?)?;
        let sidecar = Sidecar {
            config: self.config.clone(),
            seed: self.seed,
            k: self.k,
            mask_size: self.mask_size,
            aborted: self.aborted.clone(),
            stochastic_eval: self.stochastic_eval.clone(),
            environment: EnvironmentConstants::for_env(self.config.env),
            csv_columns: CSV_COLUMNS.iter().map(|s| s.to_string()).collect(),
        };
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(csv_path)
    }

    /// Loads a run from its `<stem>.json` sidecar and the matching CSV.
    pub fn read_files(json_path: &Path) -> Result<RunLog> {
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(json_path)?)?;
        let records = Self::read_csv_records(fs::File::open(json_path.with_extension("csv"))?)?;
        Ok(RunLog {
            config: sidecar.config,
            seed: sidecar.seed,
            k: sidecar.k,
            mask_size: sidecar.mask_size,
            records,
            stochastic_eval: sidecar.stochastic_eval,
            aborted: sidecar.aborted,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    config: ExperimentConfig,
    seed: u64,
    k: Option<usize>,
    mask_size: Option<usize>,
    aborted: Option<String>,
    stochastic_eval: Vec<StochasticEval>,
    environment: EnvironmentConstants,
    csv_columns: Vec<String>,
}

/// Dynamics constants echoed into each sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EnvironmentConstants {
    name: EnvName,
    obs_dim: usize,
    n_actions: usize,
    max_episode_steps: usize,
    constants: Vec<(String, f64)>,
}

impl EnvironmentConstants {
    fn for_env(env: EnvName) -> Self {
        let s = env.spec();
        let constants = match env {
            EnvName::CartPoleV1 => {
                let p = CartPoleParams::GYM;
                vec![
                    ("gravity", p.gravity),
                    ("mass_cart", p.mass_cart),
                    ("mass_pole", p.mass_pole),
                    ("half_length", p.half_length),
                    ("force_mag", p.force_mag),
                    ("tau", p.tau),
                    ("theta_threshold", p.theta_threshold),
                    ("x_threshold", p.x_threshold),
                ]
            }
            EnvName::AcrobotV1 => {
                let p = AcrobotParams::GYM;
                vec![
                    ("dt", p.dt),
                    ("link_length_1", p.link_length_1),
                    ("link_mass_1", p.link_mass_1),
                    ("link_mass_2", p.link_mass_2),
                    ("link_com_pos_1", p.link_com_pos_1),
                    ("link_com_pos_2", p.link_com_pos_2),
                    ("link_moi", p.link_moi),
                    ("max_vel_1", p.max_vel_1),
                    ("max_vel_2", p.max_vel_2),
                    ("gravity", p.gravity),
                ]
            }
            EnvName::MountainCarV0 => {
                let p = MountainCarParams::GYM;
                vec![
                    ("min_position", p.min_position),
                    ("max_position", p.max_position),
                    ("max_speed", p.max_speed),
                    ("goal_position", p.goal_position),
                    ("force", p.force),
                    ("gravity", p.gravity),
                ]
            }
        };
        EnvironmentConstants {
            name: env,
            obs_dim: s.obs_dim,
            n_actions: s.n_actions,
            max_episode_steps: s.max_episode_steps,
            constants: constants.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}
