//! Mark laws and initial laws.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Atoms with more than this many points are quantized for quadrature.
pub const MAX_EXACT_ATOMS: usize = 64;

/// Default resolution of the mark quantizer.
pub const DEFAULT_MARK_ATOMS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContinuousLaw {
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl ContinuousLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ContinuousLaw::Normal { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
            ContinuousLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ContinuousLaw::Normal { mean, .. } => mean,
            ContinuousLaw::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    /// Midpoint-quantile quantization into `v` equally weighted atoms.
    pub fn quantize(&self, v: usize) -> Vec<Atom> {
        let v = v.max(1);
        let w = 1.0 / v as f64;
        match *self {
            ContinuousLaw::Normal { mean, std } => {
                let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
                let z: Vec<f64> =
                    (0..v).map(|j| std_normal.inverse_cdf((j as f64 + 0.5) * w)).collect();
                // Antisymmetrized so the atoms average to `mean` exactly.
                (0..v)
                    .map(|j| Atom { value: mean + std * 0.5 * (z[j] - z[v - 1 - j]), weight: w })
                    .collect()
            }
            ContinuousLaw::Uniform { low, high } => (0..v)
                .map(|j| Atom { value: low + (high - low) * (j as f64 + 0.5) * w, weight: w })
                .collect(),
        }
    }
}

/// The one-coordinate mark law `ν₁`; the full mark law is its infinite product,
/// realized lazily by i.i.d. draws.
#[derive(Debug, Clone, PartialEq)]
pub enum NuSpec {
    Discrete(Vec<Atom>),
    Continuous(ContinuousLaw),
}

/// Atoms used for exact or quantized integration against `ν₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub atoms: Vec<Atom>,
    /// False when the atoms are a quantization of the mark law.
    pub exact: bool,
}

impl Quadrature {
    pub fn note(&self) -> String {
        if self.exact {
            format!("exact enumeration over {} atoms", self.atoms.len())
        } else {
            format!("quantized to {} atoms (bias of order 1/V in the v-marginal)", self.atoms.len())
        }
    }
}

impl NuSpec {
    pub fn rademacher() -> Self {
        NuSpec::Discrete(vec![Atom { value: -1.0, weight: 0.5 }, Atom { value: 1.0, weight: 0.5 }])
    }

    pub fn discrete(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let atoms: Vec<Atom> = atoms.into_iter().map(|(value, weight)| Atom { value, weight }).collect();
        validate_atoms(&atoms, "mark law")?;
        Ok(NuSpec::Discrete(atoms))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NuSpec::Discrete(atoms) => sample_atoms(atoms, rng),
            NuSpec::Continuous(law) => law.sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            NuSpec::Discrete(atoms) => atoms.iter().map(|a| a.value * a.weight).sum(),
            NuSpec::Continuous(law) => law.mean(),
        }
    }

    /// Quantizer: a discrete law with `v` atoms close to this one.
    pub fn quantize(&self, v: usize) -> Vec<Atom> {
        match self {
            NuSpec::Discrete(atoms) if atoms.len() <= v => atoms.clone(),
            NuSpec::Discrete(atoms) => quantize_atoms(atoms, v),
            NuSpec::Continuous(law) => law.quantize(v),
        }
    }

    /// Exact atoms when available, otherwise a `v`-atom quantization.
    pub fn quadrature(&self, v: usize) -> Quadrature {
        match self {
            NuSpec::Discrete(atoms) if atoms.len() <= MAX_EXACT_ATOMS => {
                Quadrature { atoms: atoms.clone(), exact: true }
            }
            _ => Quadrature { atoms: self.quantize(v), exact: false },
        }
    }
}

pub(crate) fn validate_atoms(atoms: &[Atom], what: &str) -> Result<()> {
    if atoms.is_empty() {
        return Err(Error::Config(format!("{what}: no atoms")));
    }
    if atoms.iter().any(|a| !(a.weight > 0.0) || !a.value.is_finite()) {
        return Err(Error::Config(format!("{what}: weights must be strictly positive")));
    }
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("{what}: weights sum to {total}, not 1")));
    }
    Ok(())
}

pub(crate) fn sample_atoms<R: Rng + ?Sized>(atoms: &[Atom], rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for a in atoms {
        acc += a.weight;
        if u < acc {
            return a.value;
        }
    }
    atoms[atoms.len() - 1].value
}

/// Groups sorted atoms into `v` cells of roughly equal mass; each cell is
/// replaced by its barycenter, which preserves the mean.
fn quantize_atoms(atoms: &[Atom], v: usize) -> Vec<Atom> {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut cells = vec![(0.0f64, 0.0f64); v];
    let mut cum = 0.0;
    for a in &sorted {
        let mid = cum + 0.5 * a.weight;
        cum += a.weight;
        let cell = ((mid * v as f64) as usize).min(v - 1);
        cells[cell].0 += a.weight * a.value;
        cells[cell].1 += a.weight;
    }
    cells
        .into_iter()
        .filter(|c| c.1 > 0.0)
        .map(|(mass, w)| Atom { value: mass / w, weight: w })
        .collect()
}

/// Initial law `ν₀` of every particle.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Point(f64),
    Continuous(ContinuousLaw),
    Discrete(Vec<Atom>),
}

impl Default for InitialLaw {
    fn default() -> Self {
        InitialLaw::Continuous(ContinuousLaw::Normal { mean: 0.0, std: 1.0 })
    }
}

impl InitialLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InitialLaw::Point(x) => *x,
            InitialLaw::Continuous(law) => law.sample(rng),
            InitialLaw::Discrete(atoms) => sample_atoms(atoms, rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            InitialLaw::Point(x) => *x,
            InitialLaw::Continuous(law) => law.mean(),
            InitialLaw::Discrete(atoms) => atoms.iter().map(|a| a.value * a.weight).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn rademacher_atoms() {
        let NuSpec::Discrete(atoms) = NuSpec::rademacher() else { panic!() };
        assert_eq!(atoms, vec![Atom { value: -1.0, weight: 0.5 }, Atom { value: 1.0, weight: 0.5 }]);
    }

    #[test]
    fn weights_validated() {
        assert!(NuSpec::discrete(vec![(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(NuSpec::discrete(vec![(0.0, 1.0), (1.0, 0.0)]).is_err());
        assert!(NuSpec::discrete(vec![(0.0, 0.25), (1.0, 0.75)]).is_ok());
    }

    #[test]
    fn quantizer_preserves_mean() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for law in [
            ContinuousLaw::Normal { mean: 0.3, std: 2.0 },
            ContinuousLaw::Uniform { low: -1.0, high: 4.0 },
        ] {
            let atoms = law.quantize(64);
            let qmean: f64 = atoms.iter().map(|a| a.value * a.weight).sum();
            assert!((qmean - law.mean()).abs() < 1e-9, "{law:?}: {qmean}");
            let n = 1_000_000;
            let draws: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            let mc = draws.iter().sum::<f64>() / n as f64;
            let sd = (draws.iter().map(|x| (x - mc).powi(2)).sum::<f64>() / n as f64).sqrt();
            assert!((qmean - mc).abs() < 4.0 * sd / (n as f64).sqrt());
        }
    }

    #[test]
    fn discrete_quantization_keeps_mean_and_mass() {
        let n = 200;
        let atoms: Vec<Atom> =
            (0..n).map(|i| Atom { value: (i as f64).sin() * 3.0, weight: 1.0 / n as f64 }).collect();
        let q = quantize_atoms(&atoms, 64);
        assert!(q.len() <= 64);
        let mean: f64 = atoms.iter().map(|a| a.value * a.weight).sum();
        let qmean: f64 = q.iter().map(|a| a.value * a.weight).sum();
        let qmass: f64 = q.iter().map(|a| a.weight).sum();
        assert!((mean - qmean).abs() < 1e-12);
        assert!((qmass - 1.0).abs() < 1e-12);
    }
}
