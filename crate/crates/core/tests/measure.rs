mod common;

use cmkv::EmpiricalMeasure1D;
use proptest::prelude::*;

fn small_sample() -> impl Strategy<Value = Vec<f64>> {
    // Values on a coarse lattice so ties are common.
    prop::collection::vec((-6i32..=6).prop_map(|k| k as f64 * 0.5), 1..=4)
}

fn sample(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..=max)
}

fn measure(xs: &[f64]) -> EmpiricalMeasure1D {
    EmpiricalMeasure1D::from_slice(xs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn w2_matches_exhaustive_coupling(a in small_sample(), b in small_sample()) {
        let got = measure(&a).w2(&measure(&b)).powi(2);
        let want = common::w2_sq_exhaustive(&a, &b);
        prop_assert!((got - want).abs() <= 1e-10, "W2^2 = {got}, exhaustive = {want}");
    }

    #[test]
    fn w2_matches_exhaustive_coupling_continuous_values(
        a in prop::collection::vec(-3.0f64..3.0, 1..=4),
        b in prop::collection::vec(-3.0f64..3.0, 1..=4),
    ) {
        let got = measure(&a).w2(&measure(&b)).powi(2);
        let want = common::w2_sq_exhaustive(&a, &b);
        prop_assert!((got - want).abs() <= 1e-10, "W2^2 = {got}, exhaustive = {want}");
    }

    #[test]
    fn w1_at_most_w2_and_triangle(a in sample(12), b in sample(12), c in sample(12)) {
        let (ma, mb, mc) = (measure(&a), measure(&b), measure(&c));
        let tol = 1e-9;
        prop_assert!(ma.w1(&mb) <= ma.w2(&mb) + tol);
        prop_assert!(ma.w1(&mc) <= ma.w1(&mb) + mb.w1(&mc) + tol);
        prop_assert!(ma.w2(&mc) <= ma.w2(&mb) + mb.w2(&mc) + tol);
    }

    #[test]
    fn distance_is_symmetric_and_zero_on_self(a in sample(20), b in sample(20)) {
        let (ma, mb) = (measure(&a), measure(&b));
        prop_assert!((ma.w2(&mb) - mb.w2(&ma)).abs() <= 1e-12);
        prop_assert_eq!(ma.w2(&ma), 0.0);
        prop_assert_eq!(ma.w1(&ma), 0.0);
    }

    #[test]
    fn replicated_sample_is_the_same_law(a in sample(6), k in 2usize..4) {
        let rep: Vec<f64> = a.iter().flat_map(|&x| std::iter::repeat_n(x, k)).collect();
        prop_assert!(measure(&a).w2(&measure(&rep)) <= 1e-12);
    }

    #[test]
    fn quantile_is_monotone_and_hits_samples(a in sample(15), p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
        let m = measure(&a);
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let (x, y) = (m.quantile(lo).unwrap(), m.quantile(hi).unwrap());
        prop_assert!(x <= y);
        prop_assert!(a.contains(&x));
    }

    #[test]
    fn translation_moves_w1_by_the_shift(a in sample(10), s in -5.0f64..5.0) {
        let shifted: Vec<f64> = a.iter().map(|x| x + s).collect();
        let d = measure(&a).w1(&measure(&shifted));
        prop_assert!((d - s.abs()).abs() <= 1e-9);
    }

    #[test]
    fn integrate_constant_is_the_constant(a in sample(10), c in -3.0f64..3.0) {
        prop_assert!((measure(&a).integrate(|_| c) - c).abs() <= 1e-12);
    }
}

#[test]
fn exhaustive_oracle_sanity() {
    assert!((common::w2_sq_exhaustive(&[0.0], &[1.0]) - 1.0).abs() < 1e-15);
    assert!(common::w2_sq_exhaustive(&[0.0, 1.0], &[0.0, 0.0, 1.0, 1.0]).abs() < 1e-15);
    // Crossing the matching costs more than keeping it sorted.
    assert!((common::w2_sq_exhaustive(&[0.0, 2.0], &[1.0, 3.0]) - 1.0).abs() < 1e-15);
}
