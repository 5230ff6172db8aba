//! Time grids and simulated trajectories.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure1D;

/// Uniform Euler grid `0, dt, 2dt, …, T` with the steps that are recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
    /// Sorted, deduplicated grid indices in `0..=n_steps`.
    pub output_steps: Vec<usize>,
}

fn grid_index(t: f64, dt: f64) -> Option<usize> {
    let s = (t / dt).round();
    if s < 0.0 || (s * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
        None
    } else {
        Some(s as usize)
    }
}

impl TimeGrid {
    /// Grid on `[0, t_end]`. `output` lists the recorded times; `None`
    /// records every step.
    pub fn new(t_end: f64, dt: f64, output: Option<&[f64]>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if !(t_end >= dt) || !t_end.is_finite() {
            return Err(Error::Config(format!("horizon T = {t_end} must be at least dt = {dt}")));
        }
        let n_steps = grid_index(t_end, dt)
            .ok_or_else(|| Error::Config(format!("T = {t_end} is not a multiple of dt = {dt}")))?;
        let output_steps = match output {
            None => (0..=n_steps).collect(),
            Some(times) => {
                let mut steps = Vec::with_capacity(times.len());
                for &t in times {
                    match grid_index(t, dt) {
                        Some(s) if s <= n_steps => steps.push(s),
                        _ => {
                            return Err(Error::Config(format!(
                                "output time {t} is not a grid point of [0, {t_end}] with dt = {dt}"
                            )))
                        }
                    }
                }
                steps.sort_unstable();
                steps.dedup();
                steps
            }
        };
        Ok(Self { dt, n_steps, output_steps })
    }

    /// Records every `every`-th step plus the final one.
    pub fn every(t_end: f64, dt: f64, every: usize) -> Result<Self> {
        let mut g = Self::new(t_end, dt, None)?;
        let every = every.max(1);
        g.output_steps.retain(|&s| s % every == 0 || s == g.n_steps);
        Ok(g)
    }

    pub fn t_end(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        self.output_steps.iter().map(|&s| self.time(s)).collect()
    }

    /// Grid index of `t`, if `t` is a grid time within the horizon.
    pub fn step_of(&self, t: f64) -> Option<usize> {
        grid_index(t, self.dt).filter(|&s| s <= self.n_steps)
    }
}

/// One accepted jump event and what it did to each particle of one population.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub sender_population: usize,
    pub sender: usize,
    /// Increment received by every particle of the logged population; zero
    /// for the sender itself.
    pub increments: Vec<f64>,
}

/// Per-step noise increments of each copy of a limit run, indexed
/// `[step][copy]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoiseLog {
    pub brownian: Vec<Vec<f64>>,
    pub common: Vec<Vec<f64>>,
    pub idiosyncratic: Vec<Vec<f64>>,
}

impl NoiseLog {
    /// Jump-driven (white-noise) increment of `copy` at `step`.
    pub fn jump_increment(&self, step: usize, copy: usize) -> f64 {
        self.common[step][copy] + self.idiosyncratic[step][copy]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    pub times: Vec<f64>,
    /// Grid index of each recorded time.
    pub steps: Vec<usize>,
    /// `states[t][i]`: particle (or copy) `i` at `times[t]`.
    pub states: Vec<Vec<f64>>,
    /// `∫₀ᵗ ∫ f dμ ds` at each recorded time, along the simulated measure.
    pub rate_integral: Vec<f64>,
    pub jump_log: Option<Vec<JumpEvent>>,
    pub noise_log: Option<NoiseLog>,
    pub metadata: BTreeMap<String, String>,
}

impl TrajectoryBundle {
    pub fn particles(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    /// Path of particle `i` over the recorded times.
    pub fn path(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|row| row[i]).collect()
    }

    fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    /// Empirical measure of the particles at recorded time `t`.
    pub fn empirical_path(&self, t: f64) -> Result<EmpiricalMeasure1D> {
        let k = self
            .index_of(t)
            .ok_or_else(|| Error::Invalid(format!("time {t} is not on the output grid")))?;
        EmpiricalMeasure1D::from_slice(&self.states[k])
    }

    pub fn terminal_measure(&self) -> Result<EmpiricalMeasure1D> {
        EmpiricalMeasure1D::from_slice(self.terminal())
    }
}

/// Free-function form of [`TrajectoryBundle::empirical_path`].
pub fn empirical_path(bundle: &TrajectoryBundle, t: f64) -> Result<EmpiricalMeasure1D> {
    bundle.empirical_path(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        let g = TimeGrid::new(1.0, 0.1, None).unwrap();
        assert_eq!(g.n_steps, 10);
        assert_eq!(g.output_steps.len(), 11);
        assert!(TimeGrid::new(1.0, 0.3, None).is_err());
        assert!(TimeGrid::new(0.05, 0.1, None).is_err());
        assert!(TimeGrid::new(1.0, 0.0, None).is_err());
        assert!(TimeGrid::new(1.0, 0.1, Some(&[0.25])).is_err());
        assert!(TimeGrid::new(1.0, 0.1, Some(&[1.2])).is_err());
        let g = TimeGrid::new(1.0, 0.1, Some(&[1.0, 0.5, 0.5])).unwrap();
        assert_eq!(g.output_steps, vec![5, 10]);
        let g = TimeGrid::every(1.0, 0.1, 3).unwrap();
        assert_eq!(g.output_steps, vec![0, 3, 6, 9, 10]);
    }

    #[test]
    fn empirical_path_lookup() {
        let b = TrajectoryBundle {
            times: vec![0.0, 0.5],
            steps: vec![0, 5],
            states: vec![vec![1.0, 2.0], vec![3.0, -1.0]],
            rate_integral: vec![0.0, 0.5],
            jump_log: None,
            noise_log: None,
            metadata: BTreeMap::new(),
        };
        let m = b.empirical_path(0.5).unwrap();
        assert_eq!(m.samples(), &[-1.0, 3.0]);
        assert_eq!(m.integrate(|_| 1.0), 1.0);
        assert!(b.empirical_path(0.25).is_err());
        assert_eq!(b.path(1), vec![2.0, -1.0]);
    }
}
