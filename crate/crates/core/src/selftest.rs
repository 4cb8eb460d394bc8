//! Quick invariant checks behind `rein2 selftest`.

use rand::Rng as _;

use crate::env::{make_env, EnvName};
use crate::harness::{run, ExperimentConfig, Mode};
use crate::meta::{
    compute_gae, loss_and_grad, ActionHead, EpisodeEnd, GaussianPolicy, LossKind, MetaHyperparams, RolloutBuffer,
};
use crate::nn::{Activation, MlpSpec};
use crate::outer_env::{make_mask, OuterAction, OuterEnv, OuterEnvConfig};
use crate::rng::rng_from_seed;

type Check = std::result::Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn env_replay() -> Check {
    for name in EnvName::ALL {
        let trace = |seed: u64| -> crate::Result<Vec<f64>> {
            let mut env = make_env(name, seed);
            let mut rng = rng_from_seed(seed ^ 0xabc);
            let mut out = env.reset();
            for _ in 0..300 {
                let o = env.step(rng.random_range(0..name.spec().n_actions))?;
                out.extend_from_slice(&o.observation);
                out.push(o.reward);
                if o.done() {
                    out.extend(env.reset());
                }
            }
            Ok(out)
        };
        let a = trace(7).map_err(|e| e.to_string())?;
        let b = trace(7).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name} is not reproducible"))?;
    }
    Ok(())
}

fn mlp_gradient() -> Check {
    let spec = MlpSpec::new(vec![3, 5, 2], Activation::Tanh).map_err(|e| e.to_string())?;
    let params = spec.init_params(11);
    let x = [0.3, -0.7, 1.1];
    let og = [0.5, -1.5];
    let g = spec.backward(&params, &x, &og).map_err(|e| e.to_string())?;
    let f = |p: &crate::nn::ParamVector| -> f64 {
        let y = spec.forward(p, &x).expect("valid dims");
        y[0] * og[0] + y[1] * og[1]
    };
    let h = 1e-5;
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus.0[i] += h;
        let mut minus = params.clone();
        minus.0[i] -= h;
        let fd = (f(&plus) - f(&minus)) / (2.0 * h);
        ensure((fd - g.0[i]).abs() <= 1e-6 * (1.0 + fd.abs()), || {
            format!("parameter {i}: analytic {} vs numeric {fd}", g.0[i])
        })?;
    }
    Ok(())
}

fn loss_gradient() -> Check {
    let mut rng = rng_from_seed(5);
    let policy = GaussianPolicy::new_gaussian(&[0.1, -0.2, 0.3], &[8], Activation::Tanh, -0.5, 3)
        .map_err(|e| e.to_string())?;
    let mut buf = RolloutBuffer::default();
    for _ in 0..6 {
        let s: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, lp) = policy.act(&s, &mut rng).map_err(|e| e.to_string())?;
        buf.push(s, a, lp - 0.05, rng.random_range(-1.0..1.0), 0.0, EpisodeEnd::Continues);
    }
    buf.bootstrap_value = Some(0.0);
    buf.finish(0.99, 0.95).map_err(|e| e.to_string())?;
    let hp = MetaHyperparams::ppo();
    let batch: Vec<usize> = (0..buf.len()).collect();
    for kind in [LossKind::ClippedSurrogate { clip_eps: 0.2 }, LossKind::PolicyGradient] {
        let (_, g) = loss_and_grad(&policy, &buf, &batch, kind, &hp, true).map_err(|e| e.to_string())?;
        let g = g.expect("requested");
        let base = policy.flat_params();
        let h = 1e-5;
        let mut p = policy.clone();
        for i in (0..base.len()).step_by(7) {
            let mut eval = |delta: f64| {
                let mut v = base.clone();
                v[i] += delta;
                p.set_flat_params(&v).expect("same length");
                loss_and_grad(&p, &buf, &batch, kind, &hp, false).expect("valid batch").0.total
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            ensure((fd - g[i]).abs() <= 1e-4 * fd.abs().max(g[i].abs()).max(1e-3), || {
                format!("{kind:?} parameter {i}: analytic {} vs numeric {fd}", g[i])
            })?;
        }
    }
    Ok(())
}

fn gae_brute_force() -> Check {
    let mut rng = rng_from_seed(9);
    for _ in 0..20 {
        let n = rng.random_range(1..12);
        let mut buf: RolloutBuffer<usize> = RolloutBuffer::default();
        for _ in 0..n {
            buf.push(vec![], 0, 0.0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), EpisodeEnd::Continues);
        }
        let boot = rng.random_range(-1.0..1.0);
        buf.bootstrap_value = Some(boot);
        let (gamma, lambda) = (0.9, 0.8);
        let (adv, _) = compute_gae(&buf, gamma, lambda).map_err(|e| e.to_string())?;
        for t in 0..n {
            let mut expected = 0.0;
            for l in t..n {
                let next_v = if l + 1 < n { buf.values[l + 1] } else { boot };
                let delta = buf.rewards[l] + gamma * next_v - buf.values[l];
                expected += (gamma * lambda).powi((l - t) as i32) * delta;
            }
            ensure((expected - adv[t]).abs() < 1e-10, || format!("advantage {t}: {} vs {expected}", adv[t]))?;
        }
    }
    Ok(())
}

fn outer_identities() -> Check {
    let spec = MlpSpec::new(vec![4, 16, 2], Activation::Relu).map_err(|e| e.to_string())?;
    let base = spec.init_params(1);
    let mask = make_mask(spec.param_count(), 0.1, 2).map_err(|e| e.to_string())?;
    let indices = mask.indices().to_vec();
    let config = OuterEnvConfig {
        n_eval_episodes: 2,
        ..Default::default()
    };
    let mut outer =
        OuterEnv::new(EnvName::CartPoleV1, spec, base.clone(), mask, config, 3).map_err(|e| e.to_string())?;
    outer.reset();
    let mut rng = rng_from_seed(4);
    let mut prev = outer.initial_masked_action();
    for _ in 0..50 {
        let a: Vec<f64> = (0..indices.len()).map(|_| rng.random_range(-7.0..7.0)).collect();
        let theta = outer.compose(&OuterAction(a.clone())).map_err(|e| e.to_string())?;
        let tr = outer.step(&OuterAction(a)).map_err(|e| e.to_string())?;
        let clipped = &tr.action.0;
        for j in 0..clipped.len() {
            ensure(tr.next_state.0[j] == clipped[j] - prev[j], || "state is not the action difference".into())?;
        }
        for (i, (&t, &b)) in theta.0.iter().zip(&base.0).enumerate() {
            if !indices.contains(&i) {
                ensure(t.to_bits() == b.to_bits(), || format!("off-mask weight {i} changed"))?;
            }
        }
        let mean = tr.eval_report.episode_returns.iter().sum::<f64>() / 2.0;
        ensure(tr.reward == mean, || "reward is not the mean return".into())?;
        ensure(outer.mask().indices() == indices.as_slice(), || "mask changed".into())?;
        prev = clipped.clone();
    }
    Ok(())
}

fn run_determinism() -> Check {
    let mut config = ExperimentConfig::new(EnvName::CartPoleV1, Mode::Rein2PPO);
    config.outer_budget = 20;
    config.n_eval_episodes = 2;
    let a = run(&config, 0).map_err(|e| e.to_string())?;
    let b = run(&config, 0).map_err(|e| e.to_string())?;
    ensure(a.same_trajectory(&b), || "two runs with one seed differ".into())
}

fn head_consistency() -> Check {
    let policy = GaussianPolicy::new_gaussian(&[0.5, -0.5], &[4], Activation::Tanh, -0.5, 0)
        .map_err(|e| e.to_string())?;
    let out = policy.actor_output(&[0.0, 0.0]).map_err(|e| e.to_string())?;
    let ent = policy.head.entropy(&out);
    let expected = 2.0 * (0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() - 0.5);
    ensure((ent - expected).abs() < 1e-12, || format!("entropy {ent} vs {expected}"))
}

/// Runs every check; names paired with outcomes.
pub fn run_all() -> Vec<(&'static str, Check)> {
    let checks: [(&'static str, fn() -> Check); 7] = [
        ("environment replay", env_replay),
        ("network gradient", mlp_gradient),
        ("meta loss gradient", loss_gradient),
        ("advantage estimation", gae_brute_force),
        ("outer environment identities", outer_identities),
        ("run determinism", run_determinism),
        ("gaussian entropy", head_consistency),
    ];
    checks.iter().map(|(n, f)| (*n, f())).collect()
}
