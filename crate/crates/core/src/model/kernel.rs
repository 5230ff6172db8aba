//! Derived coefficients of a jump kernel: `ψ̃`, `κ²`, `ς²`, `ξ²`.
//!
//! For a kernel `Ψ(x, y, m, u, v)` with sender mark law `ν_s` and receiver
//! mark law `ν_r`:
//!
//! ```text
//! ψ̃(x, y, m, v) = ∫ Ψ(x, y, m, v, w) ν_r(dw)
//! ς²(x, y, m)    = ∫∫ Ψ(x, y, m, u, w)² ν_s(du) ν_r(dw)
//! ξ²(x, y, m)    = ∫ ψ̃(x, y, m, u)² ν_s(du)
//! κ²(x, y, m)    = ς² − ξ²
//! ```
//!
//! `ξ²` is also `∫ Ψ(u¹, u²) Ψ(u¹, u³) dν`: the integrand involves at most three
//! mark coordinates, so for discrete laws all of these are finite sums over
//! atoms.

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure1D;

use super::expr::{Env, Expr, Var};
use super::laws::Atom;

/// Values in `[-KAPPA_CLAMP, 0)` are rounded up to zero.
pub const KAPPA_CLAMP: f64 = 1e-12;

/// Second-order mark integrals at one `(x, y, m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments {
    /// `ς²`.
    pub second_moment: f64,
    /// `ξ²`.
    pub common: f64,
    /// `κ²`, clamped.
    pub kappa_sq: f64,
}

#[derive(Debug, Clone)]
pub struct DerivedCoefficients {
    psi: Expr,
    sender: Vec<Atom>,
    receiver: Vec<Atom>,
}

impl DerivedCoefficients {
    pub fn new(psi: Expr, sender: Vec<Atom>, receiver: Vec<Atom>) -> Self {
        Self { psi, sender, receiver }
    }

    pub fn kernel(&self) -> &Expr {
        &self.psi
    }

    /// Quadrature atoms of the sender mark (the `v` of `ψ̃`).
    pub fn sender_atoms(&self) -> &[Atom] {
        &self.sender
    }

    pub fn receiver_atoms(&self) -> &[Atom] {
        &self.receiver
    }

    /// `Ψ(x, y, m, u, v)` with `m` the sender-side and `mk` the receiver-side measure.
    #[inline]
    pub fn psi(
        &self,
        x: f64,
        y: f64,
        m: &EmpiricalMeasure1D,
        mk: &EmpiricalMeasure1D,
        u: f64,
        v: f64,
    ) -> f64 {
        self.psi.eval(&Env { x, y, u, v, m, mk })
    }

    pub fn psi_tilde(
        &self,
        x: f64,
        y: f64,
        m: &EmpiricalMeasure1D,
        mk: &EmpiricalMeasure1D,
        v: f64,
    ) -> f64 {
        self.receiver.iter().map(|b| b.weight * self.psi(x, y, m, mk, v, b.value)).sum()
    }

    /// Fills `psi_tilde[a] = ψ̃(x, y, m, v_a)` over the sender atoms and
    /// returns the unclamped `(ς², ξ²)`.
    #[inline]
    pub fn moments_into(
        &self,
        x: f64,
        y: f64,
        m: &EmpiricalMeasure1D,
        mk: &EmpiricalMeasure1D,
        psi_tilde: &mut [f64],
    ) -> (f64, f64) {
        let mut second = 0.0;
        let mut common = 0.0;
        let mut env = Env { x, y, u: 0.0, v: 0.0, m, mk };
        for (a, out) in self.sender.iter().zip(psi_tilde.iter_mut()) {
            env.u = a.value;
            let mut pt = 0.0;
            let mut sq = 0.0;
            for b in &self.receiver {
                env.v = b.value;
                let p = self.psi.eval(&env);
                pt += b.weight * p;
                sq += b.weight * p * p;
            }
            *out = pt;
            second += a.weight * sq;
            common += a.weight * pt * pt;
        }
        (second, common)
    }

    pub fn moments(
        &self,
        x: f64,
        y: f64,
        m: &EmpiricalMeasure1D,
        mk: &EmpiricalMeasure1D,
    ) -> Result<KernelMoments> {
        let mut pt = vec![0.0; self.sender.len()];
        let (second, common) = self.moments_into(x, y, m, mk, &mut pt);
        let kappa_sq = clamp_kappa_sq(second - common, x, y)?;
        Ok(KernelMoments { second_moment: second, common, kappa_sq })
    }

    pub fn kappa_sq(
        &self,
        x: f64,
        y: f64,
        m: &EmpiricalMeasure1D,
        mk: &EmpiricalMeasure1D,
    ) -> Result<f64> {
        Ok(self.moments(x, y, m, mk)?.kappa_sq)
    }

    /// `∫∫ Ψ dν_s dν_r`: zero for a centered kernel.
    pub fn centering(
        &self,
        x: f64,
        y: f64,
        m: &EmpiricalMeasure1D,
        mk: &EmpiricalMeasure1D,
    ) -> f64 {
        self.sender.iter().map(|a| a.weight * self.psi_tilde(x, y, m, mk, a.value)).sum()
    }

    /// True when `Ψ` depends only on the marks.
    pub fn is_constant_kernel(&self) -> bool {
        self.state_dependence().is_none()
    }

    /// Name of the first non-mark argument `Ψ` depends on.
    pub fn state_dependence(&self) -> Option<&'static str> {
        if self.psi.uses_var(Var::X) {
            Some("x")
        } else if self.psi.uses_var(Var::Y) {
            Some("y")
        } else if self.psi.uses_measure() {
            Some("m")
        } else {
            None
        }
    }

    /// True when the per-bin coefficients are identical for every receiver.
    pub fn receiver_independent(&self) -> bool {
        !self.psi.uses_var(Var::Y)
    }
}

pub(crate) fn clamp_kappa_sq(value: f64, x: f64, y: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -KAPPA_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::CauchySchwarz { x, y, value })
    }
}
