use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rein2::env::EnvName;
use rein2::harness::{
    aggregate_seeds, run_rbv_sweep, run_seeds, snapshot_table, AggregateCurve, ConfigFile, ExperimentConfig,
    HyperOverrides, Mode, RunLog,
};
use rein2::nn::Activation;
use rein2::{selftest, Error, Result};

#[derive(Parser)]
#[command(name = "rein2", version, about = "Meta-RL over frozen Q-network weights, with PPO/A2C baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the meta-learner over generated Q-networks, one run per seed.
    TrainRein2(TrainArgs),
    /// Train PPO or A2C directly on the environment, one run per seed.
    TrainBaseline(TrainArgs),
    /// Run REIN-2 for every RBV fraction and seed.
    SweepRbv {
        #[command(flatten)]
        train: TrainArgs,
        /// Comma-separated fractions in (0, 0.5].
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,0.2,0.5")]
        fractions: Vec<f64>,
    },
    /// Snapshot table and aggregate curves from saved run logs.
    Report {
        /// Run sidecars (`*.json`) or directories containing them.
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Snapshot steps; defaults to the first run's configured steps.
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<usize>>,
        /// Directory for the aggregate TSV files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Ppo,
    A2c,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for logs.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, value_enum)]
    algo: Option<Algo>,
    #[arg(long)]
    env: Option<EnvName>,
    #[arg(long)]
    rbv_fraction: Option<f64>,
    #[arg(long)]
    n_eval_episodes: Option<usize>,
    #[arg(long)]
    outer_budget: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    inner_hidden: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_activation)]
    inner_activation: Option<Activation>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    a_max: Option<f64>,
    #[arg(long)]
    fixed_eval_seeds: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    snapshot_steps: Option<Vec<usize>>,
    #[arg(long)]
    outer_horizon: Option<usize>,
    #[arg(long)]
    reward_normalization: Option<bool>,
    #[arg(long)]
    baseline_eval_interval: Option<usize>,
    #[arg(long)]
    log_stochastic_eval: Option<bool>,
    #[arg(long)]
    smoothing: Option<f64>,
    #[arg(long)]
    eval_threads: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gae_lambda: Option<f64>,
    #[arg(long)]
    clip_eps: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs_per_update: Option<usize>,
    #[arg(long)]
    minibatch_size: Option<usize>,
    #[arg(long)]
    entropy_coef: Option<f64>,
    #[arg(long)]
    value_coef: Option<f64>,
    #[arg(long)]
    max_grad_norm: Option<f64>,
    #[arg(long)]
    segment_length: Option<usize>,
    #[arg(long)]
    normalize_advantages: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    hidden_sizes: Option<Vec<usize>>,
    #[arg(long, allow_hyphen_values = true)]
    log_std_init: Option<f64>,
}

fn parse_activation(s: &str) -> std::result::Result<Activation, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl TrainArgs {
    fn resolve(&self, rein2: bool) -> Result<ExperimentConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::from_json(&std::fs::read_to_string(p)?)?,
            None => ConfigFile::default(),
        };
        let algo = match (self.algo, file.mode) {
            (Some(a), _) => a,
            (None, Some(m)) if m.is_rein2() == rein2 => match m.algorithm() {
                rein2::meta::Algorithm::Ppo => Algo::Ppo,
                rein2::meta::Algorithm::A2c => Algo::A2c,
            },
            (None, Some(m)) => {
                return Err(Error::Config(format!("config mode {m:?} does not match this subcommand")));
            }
            (None, None) => Algo::Ppo,
        };
        let mode = match (rein2, algo) {
            (true, Algo::Ppo) => Mode::Rein2PPO,
            (true, Algo::A2c) => Mode::Rein2A2C,
            (false, Algo::Ppo) => Mode::BaselinePPO,
            (false, Algo::A2c) => Mode::BaselineA2C,
        };
        let flags = ConfigFile {
            env: self.env,
            mode: Some(mode),
            rbv_fraction: self.rbv_fraction,
            n_eval_episodes: self.n_eval_episodes,
            outer_budget: self.outer_budget,
            inner_hidden: self.inner_hidden.clone(),
            inner_activation: self.inner_activation,
            meta: Some(HyperOverrides {
                gamma: self.gamma,
                gae_lambda: self.gae_lambda,
                clip_eps: self.clip_eps,
                learning_rate: self.learning_rate,
                epochs_per_update: self.epochs_per_update,
                minibatch_size: self.minibatch_size,
                entropy_coef: self.entropy_coef,
                value_coef: self.value_coef,
                max_grad_norm: self.max_grad_norm,
                segment_length: self.segment_length,
                normalize_advantages: self.normalize_advantages,
                hidden_sizes: self.hidden_sizes.clone(),
                log_std_init: self.log_std_init,
            }),
            seeds: self.seeds.clone(),
            a_max: self.a_max,
            fixed_eval_seeds: self.fixed_eval_seeds,
            snapshot_steps: self.snapshot_steps.clone(),
            outer_horizon: self.outer_horizon,
            reward_normalization: self.reward_normalization,
            baseline_eval_interval: self.baseline_eval_interval,
            log_stochastic_eval: self.log_stochastic_eval,
            smoothing: self.smoothing,
            eval_threads: self.eval_threads,
        };
        file.merge(flags).resolve()
    }
}

fn run_stem(config: &ExperimentConfig) -> String {
    let mode = match config.mode {
        Mode::Rein2PPO => "rein2-ppo",
        Mode::Rein2A2C => "rein2-a2c",
        Mode::BaselinePPO => "baseline-ppo",
        Mode::BaselineA2C => "baseline-a2c",
    };
    if config.mode.is_rein2() {
        format!("{}_{mode}_rbv{}", config.env.gym_id(), config.rbv_fraction)
    } else {
        format!("{}_{mode}", config.env.gym_id())
    }
}

/// Writes per-seed logs and the aggregate TSV; returns whether any run aborted.
fn save_runs(out: &Path, logs: &[RunLog], curve: &AggregateCurve) -> Result<bool> {
    let mut aborted = false;
    for log in logs {
        let stem = format!("{}_seed{}", run_stem(&log.config), log.seed);
        let path = log.write_files(out, &stem)?;
        println!("wrote {}", path.display());
        if let Some(msg) = &log.aborted {
            eprintln!("seed {} aborted after {} steps: {msg}", log.seed, log.records.len());
            aborted = true;
        }
    }
    let tsv = out.join(format!("{}_aggregate.tsv", run_stem(&logs[0].config)));
    std::fs::write(&tsv, curve.to_tsv())?;
    println!("wrote {}", tsv.display());
    Ok(aborted)
}

/// Snapshot steps of `config` that the curve covers.
fn covered_steps(config: &ExperimentConfig, curve: &AggregateCurve) -> Vec<usize> {
    config
        .snapshot_steps
        .iter()
        .copied()
        .filter(|&s| curve.index_at(s).is_ok())
        .collect()
}

fn train(args: &TrainArgs, rein2: bool) -> Result<bool> {
    let config = args.resolve(rein2)?;
    let logs = run_seeds(&config)?;
    let curve = aggregate_seeds(&logs, config.smoothing)?;
    let aborted = save_runs(&args.out, &logs, &curve)?;
    let steps = covered_steps(&config, &curve);
    if !steps.is_empty() {
        print!("{}", snapshot_table(std::slice::from_ref(&curve), &steps)?.to_markdown());
    }
    Ok(aborted)
}

fn sweep(args: &TrainArgs, fractions: &[f64]) -> Result<bool> {
    let config = args.resolve(true)?;
    let report = run_rbv_sweep(&config, fractions)?;
    let mut aborted = false;
    for e in &report.entries {
        println!("fraction {} -> mask size {}", e.fraction, e.mask_size);
        aborted |= save_runs(&args.out, &e.logs, &e.curve)?;
    }
    let curves: Vec<AggregateCurve> = report.entries.iter().map(|e| e.curve.clone()).collect();
    let steps = covered_steps(&config, &curves[0]);
    if !steps.is_empty() {
        print!("{}", snapshot_table(&curves, &steps)?.to_markdown());
    }
    Ok(aborted)
}

fn collect_sidecars(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|f| f.extension().is_some_and(|x| x == "json"));
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn report(paths: &[PathBuf], steps: Option<&[usize]>, out: Option<&Path>) -> Result<()> {
    let mut groups: Vec<Vec<RunLog>> = Vec::new();
    for path in collect_sidecars(paths)? {
        let log = RunLog::read_files(&path)?;
        match groups.iter_mut().find(|g| g[0].config.same_experiment(&log.config)) {
            Some(g) => g.push(log),
            None => groups.push(vec![log]),
        }
    }
    if groups.is_empty() {
        return Err(Error::Config("no run logs found".into()));
    }
    let mut curves = Vec::with_capacity(groups.len());
    for g in &groups {
        let mut curve = aggregate_seeds(g, g[0].config.smoothing)?;
        if g[0].config.mode.is_rein2() {
            curve.label = format!("{} RBV {}%", curve.label, g[0].config.rbv_fraction * 100.0);
        }
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)?;
            let tsv = dir.join(format!("{}_aggregate.tsv", run_stem(&g[0].config)));
            std::fs::write(&tsv, curve.to_tsv())?;
            println!("wrote {}", tsv.display());
        }
        curves.push(curve);
    }
    let steps = steps.map_or_else(|| groups[0][0].config.snapshot_steps.clone(), <[usize]>::to_vec);
    print!("{}", snapshot_table(&curves, &steps)?.to_markdown());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::TrainRein2(a) => train(a, true),
        Command::TrainBaseline(a) => train(a, false),
        Command::SweepRbv { train, fractions } => sweep(train, fractions),
        Command::Report { logs, steps, out } => report(logs, steps.as_deref(), out.as_deref()).map(|()| false),
        Command::Selftest => {
            let results = selftest::run_all();
            let mut failed = false;
            for (name, r) in &results {
                match r {
                    Ok(()) => println!("PASS {name}"),
                    Err(e) => {
                        failed = true;
                        println!("FAIL {name}: {e}");
                    }
                }
            }
            if failed {
                return ExitCode::from(1);
            }
            Ok(false)
        }
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(Error::NonFinite(String::new()).exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
