mod common;

use rein2::env::{make_env, EnvName};

#[test]
fn trajectories_match_reference_equations() {
    for name in EnvName::ALL {
        for seed in 0..5 {
            let dev = common::oracle_max_deviation(name, seed, 1000).unwrap();
            assert!(dev <= 1e-9, "{name} seed {seed}: deviation {dev:e}");
        }
    }
}

#[test]
fn reset_states_lie_in_documented_ranges() {
    for seed in 0..200 {
        let mut cp = make_env(EnvName::CartPoleV1, seed);
        cp.reset();
        assert!(cp.state().iter().all(|v| (-0.05..0.05).contains(v)));
        let mut ac = make_env(EnvName::AcrobotV1, seed);
        ac.reset();
        assert!(ac.state().iter().all(|v| (-0.1..0.1).contains(v)));
        let mut mc = make_env(EnvName::MountainCarV0, seed);
        mc.reset();
        assert!((-0.6..-0.4).contains(&mc.state()[0]) && mc.state()[1] == 0.0);
    }
}
