use std::process::Command;

use rein2::env::EnvName;
use rein2::harness::{
    aggregate_seeds, run, run_baseline, run_rein2, snapshot_table, ConfigFile, ExperimentConfig, Mode, RunLog,
    CSV_COLUMNS,
};

fn small(env: EnvName, mode: Mode, budget: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(env, mode);
    c.outer_budget = budget;
    c.n_eval_episodes = 3;
    c
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rein2"))
}

#[test]
fn reruns_reproduce_logs() {
    for (env, mode, budget) in [
        (EnvName::CartPoleV1, Mode::Rein2PPO, 40),
        (EnvName::AcrobotV1, Mode::Rein2A2C, 20),
        (EnvName::CartPoleV1, Mode::BaselinePPO, 300),
        (EnvName::MountainCarV0, Mode::BaselineA2C, 500),
    ] {
        let mut c = small(env, mode, budget);
        c.baseline_eval_interval = 100;
        let a = run(&c, 5).unwrap();
        let b = run(&c, 5).unwrap();
        assert!(a.same_trajectory(&b), "{env} {mode:?}");
        assert!(!a.records.is_empty());
    }
}

#[test]
fn log_invariants() {
    let log = run_rein2(&small(EnvName::CartPoleV1, Mode::Rein2PPO, 50), 1).unwrap();
    let mut steps = 0u64;
    let mut best = f64::NEG_INFINITY;
    for (i, r) in log.records.iter().enumerate() {
        assert_eq!(r.outer_step, i + 1);
        steps += (r.eval_len_mean * 3.0).round() as u64;
        assert_eq!(r.inner_env_steps_cum, steps);
        best = best.max(r.raw_reward);
        assert_eq!(r.best_so_far, best);
        assert!(r.eval_return_min <= r.raw_reward && r.raw_reward <= r.eval_return_max);
        assert!(r.normalized_reward.is_some());
    }
}

#[test]
fn baseline_and_rein2_share_the_reward_scale() {
    let mut c = small(EnvName::MountainCarV0, Mode::BaselinePPO, 500);
    c.baseline_eval_interval = 250;
    let base = run_baseline(&c, 0).unwrap();
    let meta = run_rein2(&small(EnvName::MountainCarV0, Mode::Rein2PPO, 5), 0).unwrap();
    for r in base.records.iter().chain(&meta.records) {
        assert!((-200.0..=-1.0).contains(&r.raw_reward));
    }
    assert_eq!(base.records.last().unwrap().inner_env_steps_cum, 500);
}

#[test]
fn files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let log = run_rein2(&small(EnvName::CartPoleV1, Mode::Rein2PPO, 20), 2).unwrap();
    let csv_path = log.write_files(dir.path(), "run").unwrap();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    let back = RunLog::read_files(&dir.path().join("run.json")).unwrap();
    assert_eq!(back.config, log.config);
    assert_eq!(back.raw_rewards(), log.raw_rewards());
    assert_eq!(back.records.len(), 20);
    assert_eq!(back.records[15].update.unwrap().loss_policy, log.records[15].update.unwrap().loss_policy);
    assert!(back.records[0].update.is_none());
}

#[test]
fn numerical_failure_keeps_a_partial_log() {
    let mut c = small(EnvName::CartPoleV1, Mode::Rein2PPO, 100);
    c.meta.learning_rate = 1e300;
    let log = run_rein2(&c, 0).unwrap();
    assert!(log.aborted.is_some());
    assert!(log.records.len() >= 15 && log.records.len() < 100);
}

#[test]
fn config_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, r#"{"env": "CartPole-v1", "mode": "Rein2PPO"}"#).unwrap();
    let c = ExperimentConfig::load(&p).unwrap();
    assert_eq!((c.n_eval_episodes, c.rbv_fraction), (10, 0.01));
    assert_eq!(c.snapshot_steps, vec![75, 1000, 2500]);
    for bad in [
        r#"{"env": "CartPole-v1", "mode": "Rein2PPO", "rbv_fraction": 0}"#,
        r#"{"env": "CartPole-v1", "mode": "Rein2PPO", "seeds": [1, 1]}"#,
        r#"{"env": "CartPole-v1", "mode": "Rein2PPO", "colour": 1}"#,
        r#"{"env": "CartPole-v1", "mode": "Rein2PPO", "meta": {"gama": 0.9}}"#,
        r#"{"mode": "Rein2PPO"}"#,
    ] {
        std::fs::write(&p, bad).unwrap();
        assert!(ExperimentConfig::load(&p).is_err(), "{bad}");
    }
    let merged = ConfigFile::from_json(r#"{"env": "Acrobot-v1", "mode": "Rein2A2C", "n_eval_episodes": 4}"#)
        .unwrap()
        .merge(ConfigFile::from_json(r#"{"n_eval_episodes": 6}"#).unwrap())
        .resolve()
        .unwrap();
    assert_eq!(merged.n_eval_episodes, 6);
    assert_eq!(merged.meta.learning_rate, 7e-4);
}

#[test]
fn shipped_configs_load() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 6);
}

#[test]
fn snapshot_tables_mix_step_axes() {
    let rein2: Vec<RunLog> = [0, 1]
        .iter()
        .map(|&s| run_rein2(&small(EnvName::CartPoleV1, Mode::Rein2PPO, 80), s).unwrap())
        .collect();
    let mut bc = small(EnvName::CartPoleV1, Mode::BaselineA2C, 100);
    bc.baseline_eval_interval = 25;
    let base: Vec<RunLog> = [0, 1].iter().map(|&s| run_baseline(&bc, s).unwrap()).collect();
    let curves = [aggregate_seeds(&rein2, 0.9).unwrap(), aggregate_seeds(&base, 0.9).unwrap()];
    let t = snapshot_table(&curves, &[25, 75]).unwrap();
    assert_eq!(t.rows.len(), 2);
    for j in 0..2 {
        assert!(t.rows.iter().any(|(_, c)| c[j].is_column_max));
    }
    assert_eq!(t.rows[1].1[1].mean_reward, curves[1].mean[2]);
    assert!(snapshot_table(&curves, &[10]).is_err());
}

#[test]
fn cli_train_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let status = bin()
        .args(["train-rein2", "--env", "CartPole-v1", "--outer-budget", "20", "--n-eval-episodes", "2"])
        .args(["--seeds", "0,1", "--snapshot-steps", "10,20", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("CartPole-v1_rein2-ppo_rbv0.01_seed1.csv").exists());
    assert!(out.join("CartPole-v1_rein2-ppo_rbv0.01_aggregate.tsv").exists());

    let status = bin()
        .args(["train-baseline", "--algo", "a2c", "--env", "CartPole-v1", "--outer-budget", "50"])
        .args(["--baseline-eval-interval", "10", "--seeds", "0,1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let output = bin().arg("report").arg(&out).args(["--steps", "10,20"]).output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("REIN-2 (PPO + DQN) RBV 1%"), "{text}");
    assert!(text.contains("| A2C |"), "{text}");
}

#[test]
fn cli_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"env": "MountainCar-v0", "mode": "Rein2A2C", "outer_budget": 5, "seeds": [3]}"#).unwrap();
    let out = dir.path().join("o");
    let status = bin()
        .args(["train-rein2", "--n-eval-episodes", "1", "--outer-budget", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let log = RunLog::read_files(&out.join("MountainCar-v0_rein2-a2c_rbv0.01_seed3.json")).unwrap();
    assert_eq!(log.records.len(), 3);
    assert_eq!(log.config.n_eval_episodes, 1);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| bin().args(args).arg("--out").arg(dir.path()).status().unwrap().code();
    assert_eq!(code(&["train-rein2", "--env", "CartPole-v1", "--rbv-fraction", "0"]), Some(1));
    assert_eq!(code(&["train-rein2", "--config", "/nonexistent/config.json"]), Some(3));
    assert_eq!(
        code(&["train-rein2", "--env", "CartPole-v1", "--outer-budget", "40", "--seeds", "0", "--learning-rate", "1e300"]),
        Some(2)
    );
    assert_eq!(code(&["sweep-rbv", "--env", "CartPole-v1", "--fractions", "0.9"]), Some(1));
    let st = bin().arg("selftest").output().unwrap();
    assert!(st.status.success());
    assert_eq!(String::from_utf8(st.stdout).unwrap().lines().filter(|l| l.starts_with("PASS")).count(), 7);
}
