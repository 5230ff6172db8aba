//! Model definition: coefficients `b`, `σ`, `f`, jump kernel `Ψ`, mark law
//! `ν₁`, initial law `ν₀` and the rate bound used for thinning.

mod config;
pub mod expr;
pub mod kernel;
pub mod laws;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure1D;
use crate::noise::CounterRng;

pub use config::{build_model, parse_initial_law, parse_mark_law, ModelConfig};
pub use expr::{Env, Expr, Slot, Var};
pub use kernel::{DerivedCoefficients, KernelMoments, KAPPA_CLAMP};
pub use laws::{Atom, ContinuousLaw, InitialLaw, NuSpec, Quadrature, DEFAULT_MARK_ATOMS};

/// A validated model. Immutable after construction and shared freely.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub drift: Expr,
    pub diffusion: Expr,
    pub rate: Expr,
    pub mark_law: NuSpec,
    pub initial_law: InitialLaw,
    pub rate_bound: f64,
    coefficients: DerivedCoefficients,
    quadrature: Quadrature,
    config: Value,
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        name: String,
        drift: Expr,
        diffusion: Expr,
        rate: Expr,
        kernel: Expr,
        mark_law: NuSpec,
        initial_law: InitialLaw,
        rate_bound: f64,
        config: Value,
    ) -> Self {
        let quadrature = mark_law.quadrature(DEFAULT_MARK_ATOMS);
        let coefficients =
            DerivedCoefficients::new(kernel, quadrature.atoms.clone(), quadrature.atoms.clone());
        Self {
            name,
            drift,
            diffusion,
            rate,
            mark_law,
            initial_law,
            rate_bound,
            coefficients,
            quadrature,
            config,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        build_model(&value)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// A builtin model with default parameters.
    pub fn builtin(name: &str) -> Result<Self> {
        build_model(&serde_json::json!({ "model": name }))
    }

    /// Builtin model with parameter overrides.
    pub fn builtin_with(name: &str, params: Value) -> Result<Self> {
        build_model(&serde_json::json!({ "model": name, "params": params }))
    }

    /// The configuration tree the model was built from.
    pub fn config(&self) -> &Value {
        &self.config
    }

    pub fn kernel(&self) -> &Expr {
        self.coefficients.kernel()
    }

    pub fn coefficients(&self) -> &DerivedCoefficients {
        &self.coefficients
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    /// Derived coefficients with the mark law quantized to `v` atoms
    /// (unchanged when the law is discrete with few atoms).
    pub fn coefficients_with_resolution(&self, v: usize) -> (DerivedCoefficients, Quadrature) {
        let q = self.mark_law.quadrature(v);
        (DerivedCoefficients::new(self.kernel().clone(), q.atoms.clone(), q.atoms.clone()), q)
    }

    #[inline]
    pub fn drift_at(&self, x: f64, m: &EmpiricalMeasure1D) -> f64 {
        self.drift.eval_state(x, m)
    }

    #[inline]
    pub fn diffusion_at(&self, x: f64, m: &EmpiricalMeasure1D) -> f64 {
        self.diffusion.eval_state(x, m)
    }

    #[inline]
    pub fn rate_at(&self, x: f64, m: &EmpiricalMeasure1D) -> f64 {
        self.rate.eval_state(x, m)
    }

    #[inline]
    pub fn psi(&self, x: f64, y: f64, m: &EmpiricalMeasure1D, u: f64, v: f64) -> f64 {
        self.coefficients.psi(x, y, m, m, u, v)
    }

    pub fn psi_tilde(&self, x: f64, y: f64, m: &EmpiricalMeasure1D, v: f64) -> f64 {
        self.coefficients.psi_tilde(x, y, m, m, v)
    }

    /// `∫ f dm`.
    pub fn mean_rate(&self, m: &EmpiricalMeasure1D) -> f64 {
        m.integrate(|x| self.rate_at(x, m))
    }
}

/// A point `(x, y, m)` at which a kernel property is checked.
#[derive(Debug, Clone)]
pub struct Probe {
    pub x: f64,
    pub y: f64,
    pub m: EmpiricalMeasure1D,
}

impl Probe {
    pub fn new(x: f64, y: f64, m: EmpiricalMeasure1D) -> Self {
        Self { x, y, m }
    }

    /// A small fixed probe set used before every simulation.
    pub fn standard_set() -> Vec<Probe> {
        let spread = EmpiricalMeasure1D::from_slice(&[-1.0, 0.5, 2.0]).expect("finite");
        let mut out = Vec::new();
        for &x in &[-2.0, 0.0, 1.5] {
            for &y in &[-1.0, 0.0, 3.0] {
                out.push(Probe::new(x, y, EmpiricalMeasure1D::dirac(0.0)));
                out.push(Probe::new(x, y, spread.clone()));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckMethod {
    Exact,
    Quantized { atoms: usize },
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeFailure {
    pub x: f64,
    pub y: f64,
    pub measure_mean: f64,
    pub value: f64,
    /// Monte-Carlo standard error, zero for quadrature.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub passed: bool,
    pub method: CheckMethod,
    pub max_abs: f64,
    pub failures: Vec<ProbeFailure>,
    pub note: String,
}

/// Centering of the kernel: `∫∫ Ψ(x, y, m, u, v) dν₁(u) dν₁(v) = 0` at each probe.
///
/// Discrete mark laws are enumerated exactly (tolerance 1e-12); continuous
/// laws are estimated by Monte-Carlo and pass when the mean lies within four
/// standard errors of zero.
pub fn check_centering(model: &ModelSpec, probes: &[Probe], n_mc: usize, seed: u64) -> Result<CheckReport> {
    if probes.is_empty() {
        return Err(Error::Invalid("check_centering needs at least one probe".into()));
    }
    let mut failures = Vec::new();
    let mut max_abs = 0.0f64;
    let method = match &model.mark_law {
        NuSpec::Discrete(_) => {
            let coeffs = model.coefficients();
            for p in probes {
                let value = coeffs.centering(p.x, p.y, &p.m, &p.m);
                max_abs = max_abs.max(value.abs());
                if !(value.abs() <= 1e-12) {
                    failures.push(ProbeFailure { x: p.x, y: p.y, measure_mean: p.m.mean(), value, stderr: 0.0 });
                }
            }
            if model.quadrature().exact {
                CheckMethod::Exact
            } else {
                CheckMethod::Quantized { atoms: model.quadrature().atoms.len() }
            }
        }
        NuSpec::Continuous(law) => {
            let n = n_mc.max(2);
            for (k, p) in probes.iter().enumerate() {
                let mut rng = CounterRng::new(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let (mut s, mut s2) = (0.0, 0.0);
                for _ in 0..n {
                    let u = law.sample(&mut rng);
                    let v = law.sample(&mut rng);
                    let val = model.psi(p.x, p.y, &p.m, u, v);
                    s += val;
                    s2 += val * val;
                }
                let mean = s / n as f64;
                let var = ((s2 - n as f64 * mean * mean) / (n as f64 - 1.0)).max(0.0);
                let se = (var / n as f64).sqrt();
                max_abs = max_abs.max(mean.abs());
                let ok = if se > 0.0 { mean.abs() <= 4.0 * se } else { mean.abs() <= 1e-12 };
                if !ok {
                    failures.push(ProbeFailure { x: p.x, y: p.y, measure_mean: p.m.mean(), value: mean, stderr: se });
                }
            }
            CheckMethod::MonteCarlo { samples: n }
        }
    };
    Ok(CheckReport {
        passed: failures.is_empty(),
        method,
        max_abs,
        failures,
        note: model.quadrature().note(),
    })
}

/// `κ²(x, y, m)`, clamped at zero within [`KAPPA_CLAMP`].
pub fn kappa_sq(model: &ModelSpec, x: f64, y: f64, m: &EmpiricalMeasure1D) -> Result<f64> {
    model.coefficients().kappa_sq(x, y, m, m)
}

/// Monte-Carlo estimate of `κ²(x, y, m)` from i.i.d. mark triples
/// `Ψ(u¹, u²)² − Ψ(u¹, u²) Ψ(u¹, u³)`; returns `(mean, stderr)`.
pub fn kappa_sq_monte_carlo(
    model: &ModelSpec,
    x: f64,
    y: f64,
    m: &EmpiricalMeasure1D,
    n: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = CounterRng::new(seed);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let u1 = model.mark_law.sample(&mut rng);
        let u2 = model.mark_law.sample(&mut rng);
        let u3 = model.mark_law.sample(&mut rng);
        let a = model.psi(x, y, m, u1, u2);
        let b = model.psi(x, y, m, u1, u3);
        let val = a * a - a * b;
        s += val;
        s2 += val * val;
    }
    let nf = n as f64;
    let mean = s / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// `(ς², ξ²)` of a kernel that depends on the marks only.
pub fn sigma_xi_pair(model: &ModelSpec) -> Result<(f64, f64)> {
    let coeffs = model.coefficients();
    if let Some(dep) = coeffs.state_dependence() {
        return Err(Error::NotConstantKernel(dep.to_string()));
    }
    let d = EmpiricalMeasure1D::dirac(0.0);
    let mom = coeffs.moments(0.0, 0.0, &d, &d)?;
    Ok((mom.second_moment, mom.common))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::f64::consts::FRAC_PI_2;

    fn custom(psi: &str) -> ModelSpec {
        build_model(&json!({"model": "custom", "b": 0, "sigma": 0, "f": 1, "f_max": 1, "psi": psi,
                            "nu1": "rademacher"}))
        .unwrap()
    }

    /// Brute-force expectation over the 8 Rademacher sign triples.
    fn triples<F: Fn(f64, f64, f64) -> f64>(g: F) -> f64 {
        let s = [-1.0, 1.0];
        let mut acc = 0.0;
        for &a in &s {
            for &b in &s {
                for &c in &s {
                    acc += g(a, b, c) / 8.0;
                }
            }
        }
        acc
    }

    #[test]
    fn arctan_model_has_rademacher_marks() {
        let model = ModelSpec::builtin_with("arctan_rademacher", json!({"eps": 0.5})).unwrap();
        match &model.mark_law {
            NuSpec::Discrete(atoms) => assert_eq!(
                atoms,
                &vec![Atom { value: -1.0, weight: 0.5 }, Atom { value: 1.0, weight: 0.5 }]
            ),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn centering_exact_cases() {
        let d0 = EmpiricalMeasure1D::dirac(0.0);
        let probe = [Probe::new(0.0, 0.0, d0.clone())];
        let arctan = ModelSpec::builtin("arctan_rademacher").unwrap();
        let r = check_centering(&arctan, &probe, 0, 1).unwrap();
        assert!(r.passed);
        assert_eq!(r.method, CheckMethod::Exact);
        assert_eq!(r.max_abs, 0.0);

        let example2 = ModelSpec::builtin("example2").unwrap();
        assert_eq!(example2.coefficients().centering(0.3, -1.0, &d0, &d0), 0.0);

        let r = check_centering(&custom("1"), &probe, 0, 1).unwrap();
        assert!(!r.passed);
        assert_eq!(r.failures[0].value, 1.0);

        let r = check_centering(&custom("u + u*v"), &Probe::standard_set(), 0, 1).unwrap();
        assert!(r.passed);
        assert_eq!(r.max_abs, 0.0);
    }

    #[test]
    fn centering_monte_carlo_for_continuous_marks() {
        let m = build_model(&json!({"model": "custom", "b": 0, "sigma": 0, "f": 1, "f_max": 1,
            "psi": "u*v*(1 + atan(x))", "nu1": {"normal": {"mean": 0, "std": 1}}}))
        .unwrap();
        let r = check_centering(&m, &Probe::standard_set(), 20_000, 3).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.method, CheckMethod::MonteCarlo { samples: 20_000 });
        let biased = build_model(&json!({"model": "custom", "b": 0, "sigma": 0, "f": 1, "f_max": 1,
            "psi": "u*v + 0.2", "nu1": {"normal": {"mean": 0, "std": 1}}}))
        .unwrap();
        assert!(!check_centering(&biased, &Probe::standard_set(), 20_000, 3).unwrap().passed);
    }

    #[test]
    fn kappa_sq_arctan_closed_form() {
        let model = ModelSpec::builtin("arctan_rademacher").unwrap();
        let d0 = EmpiricalMeasure1D::dirac(0.0);
        let k = kappa_sq(&model, 0.0, 0.0, &d0).unwrap();
        let expect = (0.5 + FRAC_PI_2) * (0.5 + FRAC_PI_2);
        assert!((k - expect).abs() < 1e-12);
        assert!((k - 4.288_197_427).abs() < 1e-8);
    }

    #[test]
    fn kappa_sq_oracles() {
        let d0 = EmpiricalMeasure1D::dirac(0.0);
        assert_eq!(kappa_sq(&ModelSpec::builtin("example1").unwrap(), 0.4, -1.0, &d0).unwrap(), 0.0);
        let model = custom("u*(1+v)");
        let s2 = triples(|u1, u2, _| (u1 * (1.0 + u2)).powi(2));
        let x2 = triples(|u1, u2, u3| u1 * (1.0 + u2) * u1 * (1.0 + u3));
        assert_eq!((s2, x2), (2.0, 1.0));
        assert!((kappa_sq(&model, 0.0, 0.0, &d0).unwrap() - (s2 - x2)).abs() < 1e-12);
    }

    #[test]
    fn sigma_xi_pair_examples() {
        let (s, x) = sigma_xi_pair(&ModelSpec::builtin("example1").unwrap()).unwrap();
        assert_eq!((s, x), (1.0, 1.0));
        let (s, x) = sigma_xi_pair(&ModelSpec::builtin("example2").unwrap()).unwrap();
        assert_eq!((s, x), (1.0, 0.0));
        let (s, x) = sigma_xi_pair(&ModelSpec::builtin("example3").unwrap()).unwrap();
        assert_eq!((s, x), (2.0, 1.0));
        let err = sigma_xi_pair(&ModelSpec::builtin("arctan_rademacher").unwrap()).unwrap_err();
        assert!(err.to_string().contains("not a constant-kernel model"));
    }

    #[test]
    fn kappa_sq_monte_carlo_agrees_with_enumeration() {
        let model = ModelSpec::builtin("arctan_rademacher").unwrap();
        let m = EmpiricalMeasure1D::from_slice(&[-0.5, 0.2, 1.1]).unwrap();
        for (k, &(x, y)) in [(0.0, 0.0), (1.0, -2.0), (-3.0, 0.5)].iter().enumerate() {
            let exact = kappa_sq(&model, x, y, &m).unwrap();
            let (mc, se) = kappa_sq_monte_carlo(&model, x, y, &m, 200_000, 17 + k as u64);
            assert!((mc - exact).abs() <= 4.0 * se, "exact {exact} mc {mc} se {se}");
        }
    }
}
