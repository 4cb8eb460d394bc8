//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng as _;
use rein2::env::{make_env, EnvName};
use rein2::meta::{
    loss_and_grad, ActionHead, ActorCritic, CategoricalPolicy, EpisodeEnd, GaussianPolicy, LossKind,
    MetaHyperparams, RolloutBuffer,
};
use rein2::inner::InnerPolicy;
use rein2::nn::{Activation, MlpSpec};
use rein2::outer_env::{make_mask, OuterAction, OuterEnv, OuterEnvConfig};
use rein2::rng::{derive_seed, rng_from_seed, stream, Rng};

/// CartPole, written from the Florian (2007) pole-balancing equations with
/// literal constants.
pub fn cartpole_oracle(s: [f64; 4], action: usize) -> ([f64; 4], f64, bool) {
    let (g, mc, mp, l, dt) = (9.8, 1.0, 0.1, 0.5, 0.02);
    let f = if action == 1 { 10.0 } else { -10.0 };
    let (x, xd, th, thd) = (s[0], s[1], s[2], s[3]);
    let num = g * th.sin() + th.cos() * ((-f - mp * l * thd * thd * th.sin()) / (mc + mp));
    let den = l * (4.0 / 3.0 - mp * th.cos().powi(2) / (mc + mp));
    let thdd = num / den;
    let xdd = (f + mp * l * (thd * thd * th.sin() - thdd * th.cos())) / (mc + mp);
    let ns = [x + dt * xd, xd + dt * xdd, th + dt * thd, thd + dt * thdd];
    let limit = 12.0 * std::f64::consts::PI / 180.0;
    let term = ns[0].abs() > 2.4 || ns[2].abs() > limit;
    (ns, 1.0, term)
}

/// Acrobot accelerations from the Lagrangian in mass-matrix form,
/// `M(q) q'' = tau - h(q, q') - phi(q)`, solved by Cramer's rule.
fn acrobot_accel(q: [f64; 4], tau: f64) -> [f64; 4] {
    let (m1, m2, l1, lc1, lc2, i1, i2, g) = (1.0, 1.0, 1.0, 0.5, 0.5, 1.0, 1.0, 9.8);
    let [t1, t2, w1, w2] = q;
    let hp = std::f64::consts::FRAC_PI_2;
    let m11 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * t2.cos()) + i1 + i2;
    let m12 = m2 * (lc2 * lc2 + l1 * lc2 * t2.cos()) + i2;
    let m22 = m2 * lc2 * lc2 + i2;
    let grav2 = m2 * lc2 * g * (t1 + t2 - hp).cos();
    let grav1 = (m1 * lc1 + m2 * l1) * g * (t1 - hp).cos() + grav2;
    let cor1 = -m2 * l1 * lc2 * t2.sin() * (w2 * w2 + 2.0 * w1 * w2);
    let cor2 = m2 * l1 * lc2 * t2.sin() * w1 * w1;
    let r1 = -(cor1 + grav1);
    let r2 = tau - (cor2 + grav2);
    let det = m11 * m22 - m12 * m12;
    let a1 = (r1 * m22 - m12 * r2) / det;
    let a2 = (m11 * r2 - m12 * r1) / det;
    [w1, w2, a1, a2]
}

pub fn acrobot_oracle(s: [f64; 4], action: usize) -> ([f64; 4], f64, bool) {
    let tau = action as f64 - 1.0;
    let dt = 0.2;
    let add = |a: [f64; 4], k: [f64; 4], h: f64| [a[0] + h * k[0], a[1] + h * k[1], a[2] + h * k[2], a[3] + h * k[3]];
    let k1 = acrobot_accel(s, tau);
    let k2 = acrobot_accel(add(s, k1, dt / 2.0), tau);
    let k3 = acrobot_accel(add(s, k2, dt / 2.0), tau);
    let k4 = acrobot_accel(add(s, k3, dt), tau);
    let mut ns = [0.0; 4];
    for i in 0..4 {
        ns[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let pi = std::f64::consts::PI;
    for a in &mut ns[..2] {
        *a = (*a + pi).rem_euclid(2.0 * pi) - pi;
    }
    ns[2] = ns[2].clamp(-4.0 * pi, 4.0 * pi);
    ns[3] = ns[3].clamp(-9.0 * pi, 9.0 * pi);
    let term = -ns[0].cos() - (ns[0] + ns[1]).cos() > 1.0;
    (ns, -1.0, term)
}

pub fn mountain_car_oracle(s: [f64; 4], action: usize) -> ([f64; 4], f64, bool) {
    let v = (s[1] + 0.001 * (action as f64 - 1.0) - 0.0025 * (3.0 * s[0]).cos()).clamp(-0.07, 0.07);
    let p = (s[0] + v).clamp(-1.2, 0.6);
    let v = if p <= -1.2 && v < 0.0 { 0.0 } else { v };
    ([p, v, 0.0, 0.0], -1.0, p >= 0.5 && v >= 0.0)
}

pub fn oracle_step(name: EnvName, s: [f64; 4], action: usize) -> ([f64; 4], f64, bool) {
    match name {
        EnvName::CartPoleV1 => cartpole_oracle(s, action),
        EnvName::AcrobotV1 => acrobot_oracle(s, action),
        EnvName::MountainCarV0 => mountain_car_oracle(s, action),
    }
}

fn padded(state: &[f64]) -> [f64; 4] {
    let mut s = [0.0; 4];
    s[..state.len()].copy_from_slice(state);
    s
}

/// Largest per-component deviation between the environment and the oracle
/// over `steps` random actions. Each oracle step starts from the
/// environment's state before the step, so rounding differences are not
/// amplified by chaotic dynamics (Acrobot). Reward and episode-end flags
/// must agree exactly.
pub fn oracle_max_deviation(name: EnvName, seed: u64, steps: usize) -> Result<f64, String> {
    let mut env = make_env(name, seed);
    let mut rng = rng_from_seed(seed.wrapping_add(1000));
    env.reset();
    let mut worst: f64 = 0.0;
    for t in 0..steps {
        let a = rng.random_range(0..name.spec().n_actions);
        let (ns, r, term) = oracle_step(name, padded(env.state()), a);
        let out = env.step(a).map_err(|e| e.to_string())?;
        for (x, y) in env.state().iter().zip(ns.iter()) {
            worst = worst.max((x - y).abs());
        }
        if out.reward != r || out.terminated != term {
            return Err(format!("{name} step {t}: reward/termination mismatch"));
        }
        let truncate = !term && env.elapsed_steps() >= name.spec().max_episode_steps;
        if out.truncated != truncate {
            return Err(format!("{name} step {t}: truncation mismatch"));
        }
        if out.done() {
            env.reset();
        }
    }
    Ok(worst)
}

/// Advantages by summing discounted TD errors directly, O(L^2).
pub fn brute_force_advantages(
    rewards: &[f64],
    values: &[f64],
    ends: &[EpisodeEnd],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut weight = 1.0;
            for l in t..n {
                let next_value = match ends[l] {
                    EpisodeEnd::Terminated => 0.0,
                    EpisodeEnd::Truncated { bootstrap_value } => bootstrap_value,
                    EpisodeEnd::Continues if l + 1 < n => values[l + 1],
                    EpisodeEnd::Continues => bootstrap,
                };
                total += weight * (rewards[l] + gamma * next_value - values[l]);
                if !matches!(ends[l], EpisodeEnd::Continues) {
                    break;
                }
                weight *= gamma * lambda;
            }
            total
        })
        .collect()
}

pub fn random_ends(rng: &mut Rng, n: usize) -> Vec<EpisodeEnd> {
    (0..n)
        .map(|_| match rng.random_range(0..6) {
            0 => EpisodeEnd::Terminated,
            1 => EpisodeEnd::Truncated {
                bootstrap_value: rng.random_range(-2.0..2.0),
            },
            _ => EpisodeEnd::Continues,
        })
        .collect()
}

/// Fills a buffer with on-policy samples whose stored log-probabilities are
/// perturbed, so PPO ratios differ from one and some clip.
pub fn filled_buffer<H: ActionHead>(
    policy: &ActorCritic<H>,
    obs_dim: usize,
    n: usize,
    rng: &mut Rng,
    hp: &MetaHyperparams,
) -> RolloutBuffer<H::Action> {
    let mut buf = RolloutBuffer::default();
    let ends = random_ends(rng, n);
    for end in ends {
        let s: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (a, lp) = policy.act(&s, rng).unwrap();
        let v = policy.value(&s).unwrap();
        buf.push(s, a, lp + rng.random_range(-0.4..0.4), rng.random_range(-2.0..2.0), v, end);
    }
    buf.bootstrap_value = Some(rng.random_range(-1.0..1.0));
    buf.finish(hp.gamma, hp.gae_lambda).unwrap();
    if hp.normalize_advantages {
        buf.normalize_advantages();
    }
    buf
}

/// Worst relative error between the analytic loss gradient and central
/// differences with step `h`, over every parameter.
pub fn gradient_error<H: ActionHead>(
    policy: &ActorCritic<H>,
    buf: &RolloutBuffer<H::Action>,
    kind: LossKind,
    hp: &MetaHyperparams,
    h: f64,
) -> f64 {
    let batch: Vec<usize> = (0..buf.len()).collect();
    let grad = loss_and_grad(policy, buf, &batch, kind, hp, true).unwrap().1.unwrap();
    let base = policy.flat_params();
    let mut probe = policy.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut eval = |delta: f64| {
            let mut v = base.clone();
            v[i] += delta;
            probe.set_flat_params(&v).unwrap();
            loss_and_grad(&probe, buf, &batch, kind, hp, false).unwrap().0.total
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let scale = fd.abs().max(grad[i].abs()).max(1e-6);
        worst = worst.max((fd - grad[i]).abs() / scale);
    }
    worst
}

pub fn toy_gaussian(rng: &mut Rng) -> GaussianPolicy {
    let m = rng.random_range(1..4);
    let mean: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = rng.random_range(2..6);
    GaussianPolicy::new_gaussian(&mean, &[h], Activation::Tanh, rng.random_range(-1.0..0.0), rng.random()).unwrap()
}

pub fn toy_categorical(rng: &mut Rng) -> (CategoricalPolicy, usize) {
    let obs = rng.random_range(1..5);
    let n_act = rng.random_range(2..4);
    let h = rng.random_range(2..6);
    let mut p = CategoricalPolicy::new_categorical(obs, n_act, &[h], Activation::Tanh, rng.random()).unwrap();
    // Undo the small output scaling so probabilities are far from uniform.
    for w in p.actor.as_mut_slice() {
        *w *= 3.0;
    }
    (p, obs)
}

/// Checks every outer-MDP identity along `steps` random actions.
pub fn check_rollout(env: EnvName, fraction: f64, seed: u64, steps: usize) -> Result<(), String> {
    let s = env.spec();
    let spec = MlpSpec::new(vec![s.obs_dim, 16, 16, s.n_actions], Activation::Relu).unwrap();
    let base = spec.init_params(seed);
    let mask = make_mask(spec.param_count(), fraction, seed + 1).unwrap();
    let indices = mask.indices().to_vec();
    let config = OuterEnvConfig {
        n_eval_episodes: 3,
        horizon: 7,
        ..Default::default()
    };
    let a_max = config.a_max;
    let eval_seed = seed + 2;
    let mut outer = OuterEnv::new(env, spec.clone(), base.clone(), mask, config, eval_seed).unwrap();
    let state = outer.reset();
    if state.0.iter().any(|&v| v != 0.0) || state.0.len() != indices.len() {
        return Err("reset state is not a zero vector of mask length".into());
    }
    let mut rng = rng_from_seed(seed + 3);
    let mut prev: Vec<f64> = indices.iter().map(|&i| base.0[i]).collect();
    for t in 0..steps {
        let action: Vec<f64> = (0..indices.len()).map(|_| rng.random_range(-8.0..8.0)).collect();
        let theta = outer.compose(&OuterAction(action.clone())).unwrap();
        let tr = outer.step(&OuterAction(action.clone())).unwrap();
        for j in 0..indices.len() {
            let clipped = action[j].clamp(-a_max, a_max);
            if tr.action.0[j] != clipped {
                return Err(format!("step {t}: action {j} not clipped"));
            }
            if tr.next_state.0[j] != clipped - prev[j] {
                return Err(format!("step {t}: state {j} is not the action difference"));
            }
            if theta.0[indices[j]] != clipped {
                return Err(format!("step {t}: masked weight {j} not set"));
            }
        }
        for (i, (a, b)) in theta.0.iter().zip(&base.0).enumerate() {
            if indices.binary_search(&i).is_err() && a.to_bits() != b.to_bits() {
                return Err(format!("step {t}: off-mask weight {i} changed"));
            }
        }
        if outer.base_params() != &base || outer.mask().indices() != indices.as_slice() {
            return Err(format!("step {t}: base or mask changed"));
        }
        // Re-evaluate the composed network independently on the same episodes.
        let episode_seed = derive_seed(eval_seed, stream::EVAL, t as u64);
        let report = InnerPolicy::new(spec.clone(), theta).unwrap().evaluate(env, 3, episode_seed).unwrap();
        if report.episode_returns != tr.eval_report.episode_returns {
            return Err(format!("step {t}: evaluation does not match the composed network"));
        }
        let mean = tr.eval_report.episode_returns.iter().sum::<f64>() / 3.0;
        if tr.reward != mean {
            return Err(format!("step {t}: reward {} is not the mean return {mean}", tr.reward));
        }
        if tr.truncated != ((t + 1) % 7 == 0) {
            return Err(format!("step {t}: wrong truncation flag"));
        }
        prev = tr.action.0.clone();
    }
    Ok(())
}
