mod common;

use proptest::prelude::*;
use rand::Rng as _;
use rein2::meta::{
    compute_gae, loss_and_grad, Algorithm, EpisodeEnd, Learner, LossKind, MetaHyperparams, RolloutBuffer,
};
use rein2::rng::rng_from_seed;

fn ppo_kind() -> LossKind {
    LossKind::ClippedSurrogate { clip_eps: 0.2 }
}

fn toy_hp(rng: &mut rein2::rng::Rng) -> MetaHyperparams {
    MetaHyperparams {
        entropy_coef: rng.random_range(0.0..0.05),
        value_coef: rng.random_range(0.1..1.0),
        ..MetaHyperparams::ppo()
    }
}

#[test]
fn gaussian_loss_gradients_match_finite_differences() {
    for instance in 0..12 {
        let mut rng = rng_from_seed(100 + instance);
        let policy = common::toy_gaussian(&mut rng);
        let hp = toy_hp(&mut rng);
        let obs = policy.actor_spec.input_dim();
        let n = rng.random_range(1..10);
        let buf = common::filled_buffer(&policy, obs, n, &mut rng, &hp);
        for kind in [ppo_kind(), LossKind::PolicyGradient] {
            let err = common::gradient_error(&policy, &buf, kind, &hp, 1e-5);
            assert!(err < 1e-4, "instance {instance} {kind:?}: relative error {err:e}");
        }
    }
}

#[test]
fn categorical_loss_gradients_match_finite_differences() {
    for instance in 0..12 {
        let mut rng = rng_from_seed(200 + instance);
        let (policy, obs) = common::toy_categorical(&mut rng);
        let hp = toy_hp(&mut rng);
        let n = rng.random_range(1..10);
        let buf = common::filled_buffer(&policy, obs, n, &mut rng, &hp);
        for kind in [ppo_kind(), LossKind::PolicyGradient] {
            let err = common::gradient_error(&policy, &buf, kind, &hp, 1e-5);
            assert!(err < 1e-4, "instance {instance} {kind:?}: relative error {err:e}");
        }
    }
}

/// Stores exact on-policy log-probabilities so every ratio is one.
fn on_policy_buffer(rng: &mut rein2::rng::Rng) -> (rein2::meta::GaussianPolicy, RolloutBuffer<Vec<f64>>) {
    let policy = common::toy_gaussian(rng);
    let obs = policy.actor_spec.input_dim();
    let mut buf = RolloutBuffer::default();
    for _ in 0..8 {
        let s: Vec<f64> = (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, lp) = policy.act(&s, rng).unwrap();
        buf.push(s, a, lp, rng.random_range(-1.0..1.0), 0.0, EpisodeEnd::Continues);
    }
    buf.bootstrap_value = Some(0.0);
    buf.finish(0.99, 0.95).unwrap();
    (policy, buf)
}

#[test]
fn unit_ratio_surrogate_equals_mean_advantage() {
    let mut rng = rng_from_seed(7);
    let (policy, buf) = on_policy_buffer(&mut rng);
    let batch: Vec<usize> = (0..buf.len()).collect();
    let (terms, _) = loss_and_grad(&policy, &buf, &batch, ppo_kind(), &MetaHyperparams::ppo(), false).unwrap();
    let mean_adv = buf.advantages.iter().sum::<f64>() / buf.len() as f64;
    assert!((terms.policy + mean_adv).abs() < 1e-12);
    assert!(terms.approx_kl.abs() < 1e-12);
    assert_eq!(terms.clip_fraction, 0.0);
}

#[test]
fn zero_advantages_give_no_policy_gradient() {
    let mut rng = rng_from_seed(8);
    let (policy, mut buf) = on_policy_buffer(&mut rng);
    buf.advantages.iter_mut().for_each(|a| *a = 0.0);
    let hp = MetaHyperparams {
        value_coef: 0.0,
        entropy_coef: 0.0,
        ..MetaHyperparams::ppo()
    };
    let batch: Vec<usize> = (0..buf.len()).collect();
    for kind in [ppo_kind(), LossKind::PolicyGradient] {
        let (terms, grad) = loss_and_grad(&policy, &buf, &batch, kind, &hp, true).unwrap();
        assert_eq!(terms.policy, 0.0);
        assert!(grad.unwrap().iter().all(|&g| g == 0.0));
    }
}

#[test]
fn single_sample_terms() {
    let mut rng = rng_from_seed(9);
    let (policy, buf) = on_policy_buffer(&mut rng);
    let hp = MetaHyperparams::ppo();
    let (terms, _) = loss_and_grad(&policy, &buf, &[3], LossKind::PolicyGradient, &hp, false).unwrap();
    let out = policy.actor_output(&buf.states[3]).unwrap();
    let std: Vec<f64> = policy.head.log_std.iter().map(|l| l.exp()).collect();
    let logp: f64 = buf.actions[3]
        .iter()
        .zip(&out)
        .zip(&std)
        .map(|((a, m), s)| -0.5 * ((a - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
        .sum();
    assert!((terms.policy + logp * buf.advantages[3]).abs() < 1e-10);
    let v = policy.value(&buf.states[3]).unwrap();
    assert!((terms.value - (v - buf.returns[3]).powi(2)).abs() < 1e-12);
}

#[test]
fn updates_are_deterministic_and_finite() {
    for algo in [Algorithm::Ppo, Algorithm::A2c] {
        let run = || {
            let mut rng = rng_from_seed(10);
            let (policy, buf) = on_policy_buffer(&mut rng);
            let mut learner = Learner::new(policy, algo, MetaHyperparams::for_algorithm(algo), 3);
            let mut b = buf.clone();
            let stats = learner.update(&mut b).unwrap();
            (learner.policy.flat_params(), stats)
        };
        let (p1, s1) = run();
        let (p2, s2) = run();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
        assert!(p1.iter().all(|v| v.is_finite()));
        assert!(s1.grad_norm.is_finite());
    }
}

#[test]
fn update_improves_the_surrogate() {
    let mut rng = rng_from_seed(11);
    let (policy, buf) = on_policy_buffer(&mut rng);
    let hp = MetaHyperparams {
        learning_rate: 1e-3,
        ..MetaHyperparams::ppo()
    };
    let batch: Vec<usize> = (0..buf.len()).collect();
    let mut normalized = buf.clone();
    normalized.normalize_advantages();
    let before = loss_and_grad(&policy, &normalized, &batch, ppo_kind(), &hp, false).unwrap().0.policy;
    let mut learner = Learner::new(policy, Algorithm::Ppo, hp.clone(), 0);
    let mut b = buf.clone();
    learner.update(&mut b).unwrap();
    let after = loss_and_grad(&learner.policy, &normalized, &batch, ppo_kind(), &hp, false).unwrap().0.policy;
    assert!(after < before, "surrogate loss {before} -> {after}");
}

proptest! {
    #[test]
    fn gae_matches_brute_force(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = rng_from_seed(seed);
        let gamma = rng.random_range(0.0..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let ends = common::random_ends(&mut rng, n);
        let mut buf: RolloutBuffer<usize> = RolloutBuffer::default();
        for &end in &ends {
            buf.push(vec![], 0, 0.0, rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), end);
        }
        let boot = rng.random_range(-5.0..5.0);
        buf.bootstrap_value = Some(boot);
        let (adv, ret) = compute_gae(&buf, gamma, lambda).unwrap();
        let oracle = common::brute_force_advantages(&buf.rewards, &buf.values, &ends, boot, gamma, lambda);
        for t in 0..n {
            prop_assert!((adv[t] - oracle[t]).abs() < 1e-10);
            prop_assert_eq!(ret[t], adv[t] + buf.values[t]);
        }
    }

    #[test]
    fn normalized_advantages_have_unit_moments(xs in prop::collection::vec(-100.0f64..100.0, 2..64)) {
        let mut buf: RolloutBuffer<usize> = RolloutBuffer::default();
        for _ in &xs {
            buf.push(vec![], 0, 0.0, 0.0, 0.0, EpisodeEnd::Continues);
        }
        buf.advantages = xs.clone();
        buf.normalize_advantages();
        let n = xs.len() as f64;
        let mean = buf.advantages.iter().sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread > 1e-6 {
            let var = buf.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
        // No value can sit more than sqrt(n - 1) deviations from the mean.
        prop_assert!(buf.advantages.iter().all(|a| a.abs() <= (n - 1.0).sqrt() + 1e-9));
    }
}
