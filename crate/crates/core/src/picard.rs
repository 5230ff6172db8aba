//! Picard iteration for the limit system on frozen noise.
//!
//! Iterate `n + 1` integrates the limit update evaluated along iterate `n`:
//! `X^{[n+1]}_{s+1} = X^{[n+1]}_s + Δ(X^{[n]}_s, μ^{[n]}_s)`, where `Δ` is the
//! increment of [`crate::limit::simulate_limit`] with every noise source
//! (Brownian, common panel, idiosyncratic panel) fixed by the seed. The fixed
//! point is therefore exactly the direct Euler run with the same seed.

use std::collections::BTreeMap;

use crate::bundle::TrajectoryBundle;
use crate::engine::StepParts;
use crate::error::{Error, Result};
use crate::limit::{simulate_limit, LimitSimConfig};
use crate::measure::EmpiricalMeasure1D;
use crate::noise::derive_seed;

/// Gaps at or below this level are treated as converged by the divergence check.
const GAP_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct PicardState {
    pub n: usize,
    /// Every grid time `0, dt, …, T`.
    pub times: Vec<f64>,
    /// `trajectories[s][i]`: copy `i` of iterate `n` at grid step `s`.
    pub trajectories: Vec<Vec<f64>>,
    /// `gaps[k][s] = u^{[k]}` at grid step `s`, for `k < n`.
    pub gaps: Vec<Vec<f64>>,
}

impl PicardState {
    /// Iterate 0: every copy constant at its initial draw.
    pub fn initial(config: &LimitSimConfig) -> Result<Self> {
        let sys = config.system()?;
        let grid = crate::bundle::TimeGrid::new(config.t_end, config.dt, None)?;
        let x0 = sys.initial_states(config.seed, config.replication).remove(0);
        Ok(Self {
            n: 0,
            times: grid.times(),
            trajectories: vec![x0; grid.n_steps + 1],
            gaps: Vec::new(),
        })
    }

    /// `u^{[n-1]}(T)` for the latest gap.
    pub fn last_gap_at_horizon(&self) -> Option<f64> {
        self.gaps.last().and_then(|g| g.last().copied())
    }
}

/// Iterate `n + 1` from iterate `n` with the noise fixed by `config`.
pub fn picard_step(state: &PicardState, config: &LimitSimConfig) -> Result<PicardState> {
    let sys = config.system()?;
    let stepper = config.stepper(&sys);
    let n_steps = state.trajectories.len() - 1;
    let mut next = Vec::with_capacity(n_steps + 1);
    next.push(state.trajectories[0].clone());
    let mut parts = StepParts::default();
    for s in 0..n_steps {
        let prev = &state.trajectories[s];
        let mu = EmpiricalMeasure1D::from_slice(prev)
            .map_err(|_| Error::NonFinite { step: s, particle: prev.iter().position(|v| !v.is_finite()).unwrap_or(0) })?;
        stepper.increments(s, std::slice::from_ref(prev), std::slice::from_ref(&mu), &mut parts)?;
        let row: Vec<f64> = next[s].iter().enumerate().map(|(i, x)| x + parts.total(0, i)).collect();
        if let Some(particle) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: s + 1, particle });
        }
        next.push(row);
    }
    let gap: Vec<f64> = next
        .iter()
        .zip(&state.trajectories)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
        .collect();
    if let (Some(prev), Some(&now)) = (state.last_gap_at_horizon(), gap.last()) {
        if prev > GAP_FLOOR && now > 10.0 * prev {
            return Err(Error::Divergence { iterate: state.n + 1, prev, next: now });
        }
    }
    let mut gaps = state.gaps.clone();
    gaps.push(gap);
    Ok(PicardState { n: state.n + 1, times: state.times.clone(), trajectories: next, gaps })
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    /// The last iterate on the configured output grid.
    pub bundle: TrajectoryBundle,
    pub times: Vec<f64>,
    /// `gaps[n][s] = u^{[n]}` on the full grid.
    pub gaps: Vec<Vec<f64>>,
    /// `W₂` at `T` between the last iterate and the direct run with the same seed.
    pub w2_to_direct: f64,
    /// `W₂` at `T` between two direct runs with independent seeds.
    pub w2_independent_direct: f64,
}

impl PicardReport {
    pub fn gaps_at_horizon(&self) -> Vec<f64> {
        self.gaps.iter().map(|g| *g.last().expect("nonempty grid")).collect()
    }
}

pub fn picard_solve(config: &LimitSimConfig, n_iter: usize) -> Result<PicardReport> {
    if n_iter < 1 {
        return Err(Error::Config("picard needs at least one iteration".into()));
    }
    let mut state = PicardState::initial(config)?;
    for _ in 0..n_iter {
        state = picard_step(&state, config)?;
    }
    let grid = config.grid()?;
    let terminal = EmpiricalMeasure1D::from_slice(state.trajectories.last().expect("nonempty"))?;
    let direct = simulate_limit(&config.clone().with_output_grid(vec![config.t_end]))?;
    let other = config.clone().with_seed(derive_seed(config.seed, "picard/independent", 0));
    let independent = simulate_limit(&other.with_output_grid(vec![config.t_end]))?;
    let direct_m = direct.terminal_measure()?;

    let mut metadata = BTreeMap::new();
    metadata.insert("system".to_string(), "picard".to_string());
    metadata.insert("model".to_string(), config.model.name.clone());
    metadata.insert("iterations".to_string(), n_iter.to_string());
    metadata.insert("copies".to_string(), config.m.to_string());
    metadata.insert("dt".to_string(), format!("{}", config.dt));
    metadata.insert("seed".to_string(), config.seed.to_string());
    let mut cumulative = Vec::with_capacity(state.trajectories.len());
    let mut acc = 0.0;
    for row in &state.trajectories {
        cumulative.push(acc);
        acc += config.dt * config.model.mean_rate(&EmpiricalMeasure1D::from_slice(row)?);
    }
    let bundle = TrajectoryBundle {
        times: grid.times(),
        steps: grid.output_steps.clone(),
        states: grid.output_steps.iter().map(|&s| state.trajectories[s].clone()).collect(),
        rate_integral: grid.output_steps.iter().map(|&s| cumulative[s]).collect(),
        jump_log: None,
        noise_log: None,
        metadata,
    };
    Ok(PicardReport {
        bundle,
        times: state.times,
        gaps: state.gaps,
        w2_to_direct: terminal.w2(&direct_m),
        w2_independent_direct: direct_m.w2(&independent.terminal_measure()?),
    })
}
