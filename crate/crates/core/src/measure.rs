//! Empirical probability measures on the real line.
//!
//! An [`EmpiricalMeasure1D`] is a sorted sample with uniform weights. It plays
//! both the particle empirical measure and the M-copy stand-in for the
//! conditional law of the limit system. All queries are read-only after
//! construction: the sample is sorted once and the first two absolute moments
//! are cached, since the coefficient functionals `mean(m)` and `int_abs(m)` are
//! evaluated inside every inner loop.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure1D {
    samples: Vec<f64>,
    mean: f64,
    mean_abs: f64,
}

/// Order of a Wasserstein distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WassersteinOrder {
    One,
    Two,
}

impl EmpiricalMeasure1D {
    /// Builds the measure from an unsorted sample. Rejects empty and NaN input.
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Invalid("empirical measure needs at least one sample".into()));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::Invalid("NaN sample in empirical measure".into()));
        }
        samples.sort_unstable_by(f64::total_cmp);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let mean_abs = samples.iter().map(|x| x.abs()).sum::<f64>() / n;
        Ok(Self { samples, mean, mean_abs })
    }

    pub fn from_slice(samples: &[f64]) -> Result<Self> {
        Self::new(samples.to_vec())
    }

    /// Dirac mass at `x`.
    pub fn dirac(x: f64) -> Self {
        Self { samples: vec![x], mean: x, mean_abs: x.abs() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Sorted samples (the order statistics).
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `∫ z dm(z)`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `∫ |z| dm(z)`.
    pub fn mean_abs(&self) -> f64 {
        self.mean_abs
    }

    /// Generalized inverse of the distribution function:
    /// `samples[ceil(p n) - 1]` for `p ∈ (0, 1]`, `samples[0]` at `p = 0`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Invalid(format!("quantile level {p} outside [0, 1]")));
        }
        Ok(self.samples[self.quantile_index(p)])
    }

    fn quantile_index(&self, p: f64) -> usize {
        if p == 0.0 {
            return 0;
        }
        let n = self.samples.len();
        let k = (p * n as f64).ceil() as usize;
        k.clamp(1, n) - 1
    }

    /// Arithmetic mean of `g` over the sample.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        self.samples.iter().map(|&x| g(x)).sum::<f64>() / self.samples.len() as f64
    }

    /// `W_p` between two empirical measures, computed exactly as the `L^p`
    /// norm of the quantile difference over the common refinement of the two
    /// quantile partitions.
    pub fn wasserstein(&self, other: &Self, order: WassersteinOrder) -> f64 {
        let a = &self.samples;
        let b = &other.samples;
        let (na, nb) = (a.len() as u64, b.len() as u64);
        let total = (na * nb) as f64;
        // Breakpoints live on the lattice 1/(na nb): i/na = i nb/(na nb).
        let (mut i, mut j) = (0usize, 0usize);
        let mut pos = 0u64;
        let mut acc = 0.0;
        while i < a.len() && j < b.len() {
            let end_a = (i as u64 + 1) * nb;
            let end_b = (j as u64 + 1) * na;
            let end = end_a.min(end_b);
            let d = (a[i] - b[j]).abs();
            let w = (end - pos) as f64 / total;
            acc += match order {
                WassersteinOrder::One => d * w,
                WassersteinOrder::Two => d * d * w,
            };
            pos = end;
            if end == end_a {
                i += 1;
            }
            if end == end_b {
                j += 1;
            }
        }
        match order {
            WassersteinOrder::One => acc,
            WassersteinOrder::Two => acc.sqrt(),
        }
    }

    pub fn w1(&self, other: &Self) -> f64 {
        self.wasserstein(other, WassersteinOrder::One)
    }

    pub fn w2(&self, other: &Self) -> f64 {
        self.wasserstein(other, WassersteinOrder::Two)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(xs: &[f64]) -> EmpiricalMeasure1D {
        EmpiricalMeasure1D::from_slice(xs).unwrap()
    }

    #[test]
    fn quantile_matches_cdf_enumeration() {
        let mu = m(&[3.0, 1.0, 2.0]);
        assert_eq!(mu.quantile(0.5).unwrap(), 2.0);
        // Generalized inverse: smallest x with F(x) >= p.
        for &p in &[0.01, 0.2, 1.0 / 3.0, 0.34, 0.5, 0.66, 2.0 / 3.0, 0.9, 1.0] {
            let cdf = |x: f64| mu.samples().iter().filter(|&&s| s <= x).count() as f64 / 3.0;
            let expect = *mu.samples().iter().find(|&&x| cdf(x) >= p - 1e-15).unwrap();
            assert_eq!(mu.quantile(p).unwrap(), expect, "p = {p}");
        }
    }

    #[test]
    fn quantile_single_atom_and_step_boundary() {
        let d = m(&[4.2]);
        for p in [0.0, 0.3, 1.0] {
            assert_eq!(d.quantile(p).unwrap(), 4.2);
        }
        let two = m(&[10.0, 0.0]);
        assert_eq!(two.quantile(0.5).unwrap(), 0.0);
        assert_eq!(two.quantile(0.5 + 1e-9).unwrap(), 10.0);
        assert_eq!(two.quantile(0.0).unwrap(), 0.0);
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        let mu = m(&[1.0]);
        assert!(mu.quantile(-0.1).is_err());
        assert!(mu.quantile(1.0001).is_err());
    }

    #[test]
    fn rejects_nan_and_empty() {
        assert!(EmpiricalMeasure1D::new(vec![]).is_err());
        assert!(EmpiricalMeasure1D::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn quantile_pushforward_reproduces_measure() {
        // Midpoints of the n equal bins map onto the order statistics.
        let mu = m(&[0.3, -1.0, 2.5, 2.5, 7.0]);
        let n = mu.len();
        let pushed: Vec<f64> =
            (0..n).map(|j| mu.quantile((j as f64 + 0.5) / n as f64).unwrap()).collect();
        assert_eq!(pushed, mu.samples());
    }

    #[test]
    fn wasserstein_diracs_and_identity() {
        let a = EmpiricalMeasure1D::dirac(0.0);
        let b = EmpiricalMeasure1D::dirac(1.0);
        assert_eq!(a.w1(&b), 1.0);
        assert_eq!(a.w2(&b), 1.0);
        let c = m(&[0.1, -3.0, 8.0]);
        assert_eq!(c.w1(&c), 0.0);
        assert_eq!(c.w2(&c), 0.0);
    }

    #[test]
    fn wasserstein_unequal_counts_same_law() {
        let a = m(&[0.0, 1.0]);
        let b = m(&[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(a.w1(&b), 0.0);
        assert_eq!(a.w2(&b), 0.0);
    }

    #[test]
    fn integrate_basics() {
        assert_eq!(m(&[1.0, 2.0, 3.0]).integrate(|x| x), 2.0);
        assert_eq!(m(&[-1.0, 1.0]).integrate(|x| x * x), 1.0);
        assert_eq!(m(&[5.0, -2.0, 0.25]).integrate(|_| 1.0), 1.0);
        let mu = m(&[-1.0, 3.0]);
        assert_eq!(mu.mean(), 1.0);
        assert_eq!(mu.mean_abs(), 2.0);
    }
}
