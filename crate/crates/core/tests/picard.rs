mod common;

use cmkv::{picard_solve, picard_step, simulate_limit, Error, LimitSimConfig, PicardState};

#[test]
fn zero_dynamics_is_a_fixed_point_from_the_start() {
    let cfg = LimitSimConfig::new(common::zero_dynamics(), 25, 0.5).with_dt(0.01).with_seed(4);
    let s0 = PicardState::initial(&cfg).unwrap();
    let s1 = picard_step(&s0, &cfg).unwrap();
    assert_eq!(s1.trajectories, s0.trajectories);
    assert!(s1.gaps[0].iter().all(|&u| u == 0.0));
    let report = picard_solve(&cfg, 1).unwrap();
    for row in &report.bundle.states {
        assert_eq!(row, &s0.trajectories[0]);
    }
}

#[test]
fn iterates_reach_the_direct_run_after_one_per_step() {
    let cfg = LimitSimConfig::new(common::builtin("arctan_rademacher"), 30, 0.5).with_dt(0.05).with_seed(8);
    let direct = simulate_limit(&cfg).unwrap();
    let mut state = PicardState::initial(&cfg).unwrap();
    for n in 1..=10 {
        state = picard_step(&state, &cfg).unwrap();
        // Iterate n agrees with the direct run on the first n + 1 grid times.
        for s in 0..=n {
            assert_eq!(state.trajectories[s], direct.states[s], "iterate {n}, step {s}");
        }
    }
    state = picard_step(&state, &cfg).unwrap();
    assert!(state.gaps.last().unwrap().iter().all(|&u| u == 0.0));
}

#[test]
fn example3_gaps_contract() {
    let cfg = LimitSimConfig::new(common::builtin("example3"), 100, 0.5).with_dt(0.01).with_seed(12);
    let gaps = picard_solve(&cfg, 5).unwrap().gaps_at_horizon();
    for n in 1..gaps.len() {
        assert!(gaps[n] < gaps[n - 1], "gaps {gaps:?}");
    }
}

#[test]
fn deterministic_gaps_grow_in_time() {
    let cfg = LimitSimConfig::new(common::deterministic_decay(), 20, 1.0).with_dt(0.01).with_seed(15);
    let report = picard_solve(&cfg, 6).unwrap();
    for (n, g) in report.gaps.iter().enumerate() {
        assert!(g.windows(2).all(|w| w[1] >= w[0]), "gap {n} decreases in time");
    }
}

#[test]
fn picard_limit_is_as_close_to_the_direct_run_as_resampling() {
    let cfg = LimitSimConfig::new(common::builtin("example1"), 500, 0.5).with_dt(0.005).with_seed(19);
    let report = picard_solve(&cfg, 8).unwrap();
    assert!(
        report.w2_to_direct < 3.0 * report.w2_independent_direct,
        "{} vs {}",
        report.w2_to_direct,
        report.w2_independent_direct
    );
}

#[test]
fn explosive_drift_is_reported_as_divergence() {
    let cfg = LimitSimConfig::new(common::custom("50*x", "0", "1", "0"), 10, 1.0).with_dt(0.01).with_seed(1);
    let err = picard_solve(&cfg, 4).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err}");
    assert!(err.is_numerical());
}

#[test]
fn picard_is_deterministic() {
    let cfg = LimitSimConfig::new(common::builtin("example3"), 40, 0.3).with_dt(0.01).with_seed(6);
    let a = picard_solve(&cfg, 3).unwrap();
    let b = picard_solve(&cfg, 3).unwrap();
    assert_eq!(a.gaps, b.gaps);
    assert_eq!(a.bundle.states, b.bundle.states);
    assert!(picard_solve(&cfg, 0).is_err());
}
