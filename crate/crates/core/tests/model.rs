mod common;

use std::f64::consts::FRAC_PI_2;

use cmkv::model::{build_model, check_centering, kappa_sq, sigma_xi_pair, Probe};
use cmkv::noise::{draw_marks, Channel, NoiseStream};
use cmkv::{EmpiricalMeasure1D, Error, ModelSpec};
use proptest::prelude::*;
use serde_json::json;

const BUILTINS: [&str; 4] = ["example1", "example2", "example3", "arctan_rademacher"];

fn probe() -> impl Strategy<Value = (f64, f64, Vec<f64>)> {
    (-5.0f64..5.0, -5.0f64..5.0, prop::collection::vec(-4.0f64..4.0, 1..8))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kappa_sq_is_nonnegative((x, y, m) in probe(), which in 0usize..4) {
        let model = common::builtin(BUILTINS[which]);
        let m = EmpiricalMeasure1D::new(m).unwrap();
        prop_assert!(kappa_sq(&model, x, y, &m).unwrap() >= 0.0);
    }

    #[test]
    fn arctan_kappa_sq_closed_form((x, y, m) in probe(), eps in 0.05f64..2.0) {
        let model = ModelSpec::builtin_with("arctan_rademacher", json!({"eps": eps})).unwrap();
        let m = EmpiricalMeasure1D::new(m).unwrap();
        let want = (eps + FRAC_PI_2 + (x - y + m.mean()).atan()).powi(2);
        let got = kappa_sq(&model, x, y, &m).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn builtins_are_centered((x, y, m) in probe(), which in 0usize..4) {
        let model = common::builtin(BUILTINS[which]);
        let m = EmpiricalMeasure1D::new(m).unwrap();
        let c = model.coefficients().centering(x, y, &m, &m);
        prop_assert!(c.abs() <= 1e-12);
    }

    #[test]
    fn psi_tilde_averages_psi_over_the_receiver_mark((x, y, m) in probe(), u in prop::sample::select(vec![-1.0, 1.0])) {
        let model = common::builtin("arctan_rademacher");
        let m = EmpiricalMeasure1D::new(m).unwrap();
        let direct = 0.5 * (model.psi(x, y, &m, u, -1.0) + model.psi(x, y, &m, u, 1.0));
        prop_assert!((model.psi_tilde(x, y, &m, u) - direct).abs() <= 1e-12);
    }
}

/// `E[Ψ(u¹,u²)²]`, `E[Ψ(u¹,u²)Ψ(u¹,u³)]` by enumerating the 8 sign triples.
fn triples(psi: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let signs = [-1.0, 1.0];
    let (mut s2, mut x2) = (0.0, 0.0);
    for &u1 in &signs {
        for &u2 in &signs {
            for &u3 in &signs {
                s2 += psi(u1, u2).powi(2) / 8.0;
                x2 += psi(u1, u2) * psi(u1, u3) / 8.0;
            }
        }
    }
    (s2, x2)
}

#[test]
fn sigma_xi_pairs_match_sign_triple_enumeration() {
    let cases: [(&str, fn(f64, f64) -> f64); 3] =
        [("example1", |u, _| u), ("example2", |_, v| v), ("example3", |u, v| u * (1.0 + v))];
    for (name, psi) in cases {
        let (s2, x2) = sigma_xi_pair(&common::builtin(name)).unwrap();
        let (want_s2, want_x2) = triples(psi);
        assert!((s2 - want_s2).abs() <= 1e-12 && (x2 - want_x2).abs() <= 1e-12, "{name}");
    }
    let d = EmpiricalMeasure1D::dirac(0.0);
    assert!((kappa_sq(&common::builtin("example3"), 0.0, 0.0, &d).unwrap() - 1.0).abs() <= 1e-12);
}

#[test]
fn state_dependent_kernel_has_no_constant_pair() {
    let err = sigma_xi_pair(&common::builtin("arctan_rademacher")).unwrap_err();
    assert!(matches!(err, Error::NotConstantKernel(_)));
}

#[test]
fn non_centered_kernels_are_reported() {
    let model = common::custom("0", "1", "1", "1");
    let report = check_centering(&model, &Probe::standard_set(), 100, 1).unwrap();
    assert!(!report.passed);
    assert!((report.max_abs - 1.0).abs() < 1e-12);
    let model = common::custom("0", "1", "1", "u + u*v");
    assert!(check_centering(&model, &Probe::standard_set(), 100, 1).unwrap().passed);
}

#[test]
fn non_centered_kernel_cannot_be_simulated() {
    let model = common::custom("0", "1", "1", "1 + u");
    let err = cmkv::simulate_finite(&cmkv::FiniteSimConfig::new(model, 5, 0.1)).unwrap_err();
    assert!(err.to_string().contains("not centered"), "{err}");
}

#[test]
fn misdeclared_rate_bound_aborts_before_simulating() {
    let err = build_model(&json!({
        "model": "custom", "b": "0", "sigma": "1", "f": "1 + 0.5*tanh(x)", "f_max": 1.2,
        "psi": "u", "nu1": "rademacher"
    }))
    .unwrap_err();
    assert!(err.to_string().contains("exceeds f_max"), "{err}");
}

#[test]
fn non_positive_rate_is_rejected() {
    let err = build_model(&json!({"model": "example1", "params": {"f": "-1"}})).unwrap_err();
    assert!(err.to_string().contains("rate must be strictly positive"), "{err}");
}

#[test]
fn mark_draws_are_centered_and_independent_across_events() {
    let law = common::builtin("example1").mark_law.clone();
    let s = NoiseStream::new(3, 0, 0, Channel::PoissonMarks);
    let n = 100_000u64;
    let senders: Vec<f64> = (0..n).map(|e| draw_marks(&s, e, 0, &law).sender).collect();
    let mean = senders.iter().sum::<f64>() / n as f64;
    assert!(mean.abs() <= 0.013, "mean {mean}");
    let lagged: f64 = senders.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1) as f64;
    assert!(lagged.abs() <= 4.0 / (n as f64).sqrt(), "lag-1 correlation {lagged}");
    assert!(draw_marks(&s, 0, 0, &law).receivers.is_empty());
}
