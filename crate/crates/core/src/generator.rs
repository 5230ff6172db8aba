//! The two-particle generator and martingale-problem residuals.
//!
//! For `g ∈ C²_b(ℝ²)`, `y = (y¹, y²)`, a measure `m`, a sender state `x` and a
//! mark `v`:
//!
//! ```text
//! Lg = Σ_i b(yⁱ, m) ∂_i g + ½ Σ_i σ(yⁱ, m)² ∂_ii g + ½ f(x, m) Σ_i κ(x, yⁱ, m)² ∂_ii g
//!    + ½ f(x, m) Σ_{i,j} ψ̃(x, yⁱ, m, v) ψ̃(x, yʲ, m, v) ∂_ij g
//! ```
//!
//! Along a pair of copies `Y = (X̄¹, X̄²)` of the limit system,
//! `g(Y_t) − g(Y_s) − ∫_s^t ∫∫ Lg(Y_r, μ_r, x, v) ν₁(dv) μ_r(dx) dr` has mean zero.

use crate::error::{Error, Result};
use crate::limit::{simulate_limit_observed, LimitSimConfig};
use crate::measure::EmpiricalMeasure1D;
use crate::model::ModelSpec;
use crate::parallel::map_replications;
use crate::stats::mean_stderr;

/// A test function on the plane with first and second derivatives.
///
/// Derivatives default to central finite differences with step
/// `h = 1e-5 · (1 + |y|)` per coordinate.
pub trait TestFunction2D: Sync {
    fn name(&self) -> &str;

    fn value(&self, y: [f64; 2]) -> f64;

    fn gradient(&self, y: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (i, gi) in g.iter_mut().enumerate() {
            let h = fd_step(y[i]);
            let mut p = y;
            let mut m = y;
            p[i] += h;
            m[i] -= h;
            *gi = (self.value(p) - self.value(m)) / (2.0 * h);
        }
        g
    }

    fn hessian(&self, y: [f64; 2]) -> [[f64; 2]; 2] {
        let h = [fd_step(y[0]), fd_step(y[1])];
        let at = |d0: f64, d1: f64| self.value([y[0] + d0, y[1] + d1]);
        let f0 = self.value(y);
        let h00 = (at(h[0], 0.0) - 2.0 * f0 + at(-h[0], 0.0)) / (h[0] * h[0]);
        let h11 = (at(0.0, h[1]) - 2.0 * f0 + at(0.0, -h[1])) / (h[1] * h[1]);
        let h01 = (at(h[0], h[1]) - at(h[0], -h[1]) - at(-h[0], h[1]) + at(-h[0], -h[1])) / (4.0 * h[0] * h[1]);
        [[h00, h01], [h01, h11]]
    }
}

pub fn fd_step(y: f64) -> f64 {
    1e-5 * (1.0 + y.abs())
}

/// `g ≡ c`.
#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl TestFunction2D for Constant {
    fn name(&self) -> &str {
        "const"
    }
    fn value(&self, _: [f64; 2]) -> f64 {
        self.0
    }
    fn gradient(&self, _: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }
    fn hessian(&self, _: [f64; 2]) -> [[f64; 2]; 2] {
        [[0.0; 2]; 2]
    }
}

/// `g(y) = y¹`.
#[derive(Debug, Clone, Copy)]
pub struct FirstCoordinate;

impl TestFunction2D for FirstCoordinate {
    fn name(&self) -> &str {
        "y1"
    }
    fn value(&self, y: [f64; 2]) -> f64 {
        y[0]
    }
    fn gradient(&self, _: [f64; 2]) -> [f64; 2] {
        [1.0, 0.0]
    }
    fn hessian(&self, _: [f64; 2]) -> [[f64; 2]; 2] {
        [[0.0; 2]; 2]
    }
}

/// `g(y) = sin(y¹) + cos(y²)`.
#[derive(Debug, Clone, Copy)]
pub struct SinCos;

impl TestFunction2D for SinCos {
    fn name(&self) -> &str {
        "sin_cos"
    }
    fn value(&self, y: [f64; 2]) -> f64 {
        y[0].sin() + y[1].cos()
    }
    fn gradient(&self, y: [f64; 2]) -> [f64; 2] {
        [y[0].cos(), -y[1].sin()]
    }
    fn hessian(&self, y: [f64; 2]) -> [[f64; 2]; 2] {
        [[-y[0].sin(), 0.0], [0.0, -y[1].cos()]]
    }
}

/// `g(y) = y¹ y²`.
#[derive(Debug, Clone, Copy)]
pub struct Product;

impl TestFunction2D for Product {
    fn name(&self) -> &str {
        "y1y2"
    }
    fn value(&self, y: [f64; 2]) -> f64 {
        y[0] * y[1]
    }
    fn gradient(&self, y: [f64; 2]) -> [f64; 2] {
        [y[1], y[0]]
    }
    fn hessian(&self, _: [f64; 2]) -> [[f64; 2]; 2] {
        [[0.0, 1.0], [1.0, 0.0]]
    }
}

/// A closure with finite-difference derivatives.
pub struct FnTest<F> {
    pub name: String,
    pub f: F,
}

impl<F: Fn([f64; 2]) -> f64 + Sync> TestFunction2D for FnTest<F> {
    fn name(&self) -> &str {
        &self.name
    }
    fn value(&self, y: [f64; 2]) -> f64 {
        (self.f)(y)
    }
}

/// Builtin test function by name: `const`, `y1`, `sin_cos`, `y1y2`.
pub fn builtin_test_function(name: &str) -> Result<Box<dyn TestFunction2D>> {
    Ok(match name {
        "const" => Box::new(Constant(1.0)),
        "y1" => Box::new(FirstCoordinate),
        "sin_cos" => Box::new(SinCos),
        "y1y2" => Box::new(Product),
        other => return Err(Error::Config(format!("unknown test function '{other}'"))),
    })
}

/// `Lg(y, m, x, v)`.
pub fn generator_apply(
    g: &dyn TestFunction2D,
    y: [f64; 2],
    m: &EmpiricalMeasure1D,
    x: f64,
    v: f64,
    model: &ModelSpec,
) -> Result<f64> {
    let grad = g.gradient(y);
    let hess = g.hessian(y);
    let coeffs = model.coefficients();
    let f = model.rate_at(x, m);
    let mut out = 0.0;
    for i in 0..2 {
        let b = model.drift_at(y[i], m);
        let s = model.diffusion_at(y[i], m);
        let k2 = coeffs.kappa_sq(x, y[i], m, m)?;
        out += b * grad[i] + 0.5 * s * s * hess[i][i] + 0.5 * f * k2 * hess[i][i];
    }
    let pt = [coeffs.psi_tilde(x, y[0], m, m, v), coeffs.psi_tilde(x, y[1], m, m, v)];
    for i in 0..2 {
        for j in 0..2 {
            out += 0.5 * f * pt[i] * pt[j] * hess[i][j];
        }
    }
    Ok(out)
}

/// `∫∫ Lg(y, m, x, v) ν₁(dv) m(dx)`, the `x`-integral over the atoms of `m`
/// and the `v`-integral over the mark quadrature.
pub fn integrated_generator(
    g: &dyn TestFunction2D,
    y: [f64; 2],
    m: &EmpiricalMeasure1D,
    model: &ModelSpec,
) -> Result<f64> {
    let grad = g.gradient(y);
    let hess = g.hessian(y);
    let coeffs = model.coefficients();
    let atoms = coeffs.sender_atoms();
    let mut out = 0.0;
    for i in 0..2 {
        let b = model.drift_at(y[i], m);
        let s = model.diffusion_at(y[i], m);
        out += b * grad[i] + 0.5 * s * s * hess[i][i];
    }
    let mut pt = [vec![0.0; atoms.len()], vec![0.0; atoms.len()]];
    let mut jump = 0.0;
    for &x in m.samples() {
        let f = model.rate_at(x, m);
        let mut term = 0.0;
        for i in 0..2 {
            let (second, common) = coeffs.moments_into(x, y[i], m, m, &mut pt[i]);
            let k2 = crate::model::kernel::clamp_kappa_sq(second - common, x, y[i])?;
            term += k2 * hess[i][i];
        }
        for (a, atom) in atoms.iter().enumerate() {
            let mut cross = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    cross += pt[i][a] * pt[j][a] * hess[i][j];
                }
            }
            term += atom.weight * cross;
        }
        jump += 0.5 * f * term;
    }
    Ok(out + jump / m.len() as f64)
}

/// `(mean, stderr)` of `M^g_t − M^g_s` over `reps` limit runs, for each test
/// function, with `Y` the copies 0 and 1. Replication `r` uses
/// `config.replication + r`.
pub fn martingale_residuals(
    model: &ModelSpec,
    gs: &[&dyn TestFunction2D],
    s: f64,
    t: f64,
    config: &LimitSimConfig,
    reps: u64,
) -> Result<Vec<(f64, f64)>> {
    let grid = crate::bundle::TimeGrid::new(config.t_end, config.dt, None)?;
    let (s_step, t_step) = match (grid.step_of(s), grid.step_of(t)) {
        (Some(a), Some(b)) if a < b => (a, b),
        _ => return Err(Error::Config(format!("need grid times s < t <= T, got s = {s}, t = {t}"))),
    };
    if reps < 2 {
        return Err(Error::Config("martingale residual needs at least 2 replications".into()));
    }
    let runs = map_replications(reps, |r| {
        let cfg = LimitSimConfig { model: model.clone(), ..config.clone() }
            .with_replication(config.replication + r)
            .with_output_grid(vec![config.t_end]);
        let mut residual = vec![0.0; gs.len()];
        let mut failure: Option<Error> = None;
        let dt = cfg.dt;
        let mut observer = |step: usize, _t: f64, x: &[f64], mu: &EmpiricalMeasure1D| {
            if failure.is_some() {
                return;
            }
            let y = [x[0], x[1]];
            if step == s_step {
                for (k, g) in gs.iter().enumerate() {
                    residual[k] -= g.value(y);
                }
            }
            if step == t_step {
                for (k, g) in gs.iter().enumerate() {
                    residual[k] += g.value(y);
                }
            }
            if step >= s_step && step < t_step {
                for (k, g) in gs.iter().enumerate() {
                    match integrated_generator(*g, y, mu, model) {
                        Ok(v) => residual[k] -= dt * v,
                        Err(e) => failure = Some(e),
                    }
                }
            }
        };
        simulate_limit_observed(&cfg, &mut observer)?;
        match failure {
            Some(e) => Err(e),
            None => Ok(residual),
        }
    })?;
    Ok((0..gs.len())
        .map(|k| {
            let xs: Vec<f64> = runs.iter().map(|r| r[k]).collect();
            mean_stderr(&xs)
        })
        .collect())
}

pub fn martingale_residual(
    model: &ModelSpec,
    g: &dyn TestFunction2D,
    s: f64,
    t: f64,
    config: &LimitSimConfig,
    reps: u64,
) -> Result<(f64, f64)> {
    Ok(martingale_residuals(model, &[g], s, t, config, reps)?[0])
}
