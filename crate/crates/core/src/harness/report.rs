use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::log::RunLog;
use super::run_jobs;
use crate::error::{Error, Result};
use crate::outer_env::mask_size;

/// Per-step statistics across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub label: String,
    pub steps: Vec<usize>,
    pub inner_env_steps_mean: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Exponential moving average of `mean`.
    pub smoothed: Vec<f64>,
    pub n_seeds: usize,
}

/// Mean and min/max envelope of `raw_reward` at each logged step.
///
/// Logs must come from the same experiment (seeds aside). If some runs
/// aborted early, the curve covers the common prefix.
pub fn aggregate_seeds(logs: &[RunLog], smoothing: f64) -> Result<AggregateCurve> {
    let first = logs.first().ok_or_else(|| Error::Config("no logs to aggregate".into()))?;
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::Config(format!("smoothing must lie in [0, 1), got {smoothing}")));
    }
    for l in &logs[1..] {
        if !l.config.same_experiment(&first.config) {
            return Err(Error::Config("cannot aggregate runs of different experiments".into()));
        }
    }
    let len = logs.iter().map(|l| l.records.len()).min().unwrap_or(0);
    let steps: Vec<usize> = first.records[..len].iter().map(|r| r.outer_step).collect();
    for l in &logs[1..] {
        if l.records[..len].iter().map(|r| r.outer_step).ne(steps.iter().copied()) {
            return Err(Error::Config("runs logged different step sequences".into()));
        }
    }
    let n = logs.len() as f64;
    let mut curve = AggregateCurve {
        label: first.config.mode.label().to_string(),
        steps,
        inner_env_steps_mean: Vec::with_capacity(len),
        mean: Vec::with_capacity(len),
        min: Vec::with_capacity(len),
        max: Vec::with_capacity(len),
        smoothed: Vec::with_capacity(len),
        n_seeds: logs.len(),
    };
    let mut ema: Option<f64> = None;
    for t in 0..len {
        let vals = logs.iter().map(|l| l.records[t].raw_reward);
        let mean = vals.clone().sum::<f64>() / n;
        curve.mean.push(mean);
        curve.min.push(vals.clone().fold(f64::INFINITY, f64::min));
        curve.max.push(vals.fold(f64::NEG_INFINITY, f64::max));
        curve
            .inner_env_steps_mean
            .push(logs.iter().map(|l| l.records[t].inner_env_steps_cum as f64).sum::<f64>() / n);
        let s = match ema {
            None => mean,
            Some(prev) => smoothing * prev + (1.0 - smoothing) * mean,
        };
        ema = Some(s);
        curve.smoothed.push(s);
    }
    Ok(curve)
}

impl AggregateCurve {
    /// Index of the latest logged step not after `step`.
    pub fn index_at(&self, step: usize) -> Result<usize> {
        let (first, last) = match (self.steps.first(), self.steps.last()) {
            (Some(&f), Some(&l)) => (f, l),
            _ => return Err(Error::Config(format!("curve `{}` is empty", self.label))),
        };
        if step < first || step > last {
            return Err(Error::Config(format!(
                "step {step} outside the logged range [{first}, {last}] of `{}`",
                self.label
            )));
        }
        Ok(self.steps.partition_point(|&s| s <= step) - 1)
    }

    pub fn mean_at(&self, step: usize) -> Result<f64> {
        Ok(self.mean[self.index_at(step)?])
    }

    /// Tab-separated plot data with a header row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("step\tinner_env_steps_mean\tmean\tmin\tmax\tsmoothed\n");
        for i in 0..self.steps.len() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                self.steps[i], self.inner_env_steps_mean[i], self.mean[i], self.min[i], self.max[i], self.smoothed[i]
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotCell {
    pub mean_reward: f64,
    /// Mean cumulative inner env steps behind the value.
    pub inner_env_steps: f64,
    pub is_column_max: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotTable {
    pub steps: Vec<usize>,
    pub rows: Vec<(String, Vec<SnapshotCell>)>,
}

/// Mean raw reward of each curve at each requested step, with column maxima marked.
///
/// Curves logged at a coarser cadence (baselines) report their most recent
/// evaluation at or before the step.
pub fn snapshot_table(curves: &[AggregateCurve], steps: &[usize]) -> Result<SnapshotTable> {
    let mut rows = Vec::with_capacity(curves.len());
    for c in curves {
        let cells = steps
            .iter()
            .map(|&s| {
                let i = c.index_at(s)?;
                Ok(SnapshotCell {
                    mean_reward: c.mean[i],
                    inner_env_steps: c.inner_env_steps_mean[i],
                    is_column_max: false,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((c.label.clone(), cells));
    }
    for j in 0..steps.len() {
        let best = rows
            .iter()
            .map(|(_, cells)| cells[j].mean_reward)
            .fold(f64::NEG_INFINITY, f64::max);
        for (_, cells) in &mut rows {
            cells[j].is_column_max = cells[j].mean_reward == best;
        }
    }
    Ok(SnapshotTable {
        steps: steps.to_vec(),
        rows,
    })
}

impl SnapshotTable {
    /// Markdown table; maxima in bold, inner env steps in brackets.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Algorithm |");
        for s in &self.steps {
            let _ = write!(out, " {s} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(self.steps.len()));
        out.push('\n');
        for (label, cells) in &self.rows {
            let _ = write!(out, "| {label} |");
            for c in cells {
                if c.is_column_max {
                    let _ = write!(out, " **{:.2}** [{:.0}] |", c.mean_reward, c.inner_env_steps);
                } else {
                    let _ = write!(out, " {:.2} [{:.0}] |", c.mean_reward, c.inner_env_steps);
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub fraction: f64,
    pub mask_size: usize,
    pub curve: AggregateCurve,
    pub logs: Vec<RunLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
}

pub const MAX_SWEEP_FRACTION: f64 = 0.5;

/// Runs REIN-2 for every `fraction × seed` and aggregates per fraction.
pub fn run_rbv_sweep(config: &ExperimentConfig, fractions: &[f64]) -> Result<SweepReport> {
    if !config.mode.is_rein2() {
        return Err(Error::Config("the RBV sweep needs a REIN-2 mode".into()));
    }
    if fractions.is_empty() {
        return Err(Error::Config("no RBV fractions given".into()));
    }
    for &f in fractions {
        if !(f > 0.0 && f <= MAX_SWEEP_FRACTION) {
            return Err(Error::Config(format!(
                "sweep fractions must lie in (0, {MAX_SWEEP_FRACTION}], got {f}"
            )));
        }
    }
    let jobs: Vec<(ExperimentConfig, u64)> = fractions
        .iter()
        .flat_map(|&f| {
            let mut c = config.clone();
            c.rbv_fraction = f;
            c.seeds.clone().into_iter().map(move |s| (c.clone(), s))
        })
        .collect();
    let mut logs = run_jobs(jobs)?.into_iter();
    let k = config.inner_spec().param_count();
    let mut entries = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let group: Vec<RunLog> = logs.by_ref().take(config.seeds.len()).collect();
        let mut curve = aggregate_seeds(&group, config.smoothing)?;
        curve.label = format!("{} RBV {}%", config.mode.label(), f * 100.0);
        entries.push(SweepEntry {
            fraction: f,
            mask_size: mask_size(k, f),
            curve,
            logs: group,
        });
    }
    Ok(SweepReport { entries })
}
