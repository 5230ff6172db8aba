//! The N-particle system with simultaneous jumps.
//!
//! Each step of length `dt` freezes the states, the empirical measure and the
//! rates at the left endpoint. Particles move by `b dt + σ ΔB`; every sender
//! `k` owns a Poisson clock at rate `f_max` thinned to `f(X^k, μ^N)`, and each
//! accepted event moves every other particle `i` by `N^{-1/2} Ψ(X^k, X^i, μ^N, u^k, u^i)`.

use crate::bundle::{TimeGrid, TrajectoryBundle};
use crate::engine::{run_finite, System};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, DEFAULT_MARK_ATOMS};

#[derive(Debug, Clone)]
pub struct FiniteSimConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub replication: u64,
    pub record_jump_log: bool,
    /// Recorded times; `None` records every step.
    pub output_grid: Option<Vec<f64>>,
}

impl FiniteSimConfig {
    /// `dt` defaults to `T / 1000`.
    pub fn new(model: ModelSpec, n: usize, t_end: f64) -> Self {
        Self {
            model,
            n,
            t_end,
            dt: t_end * 1e-3,
            seed: 0,
            replication: 0,
            record_jump_log: false,
            output_grid: None,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replication(mut self, replication: u64) -> Self {
        self.replication = replication;
        self
    }

    pub fn with_jump_log(mut self, on: bool) -> Self {
        self.record_jump_log = on;
        self
    }

    pub fn with_output_grid(mut self, times: Vec<f64>) -> Self {
        self.output_grid = Some(times);
        self
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_end, self.dt, self.output_grid.as_deref())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("need N >= 2 particles, got {}", self.n)));
        }
        self.grid().map(|_| ())
    }
}

pub fn simulate_finite(config: &FiniteSimConfig) -> Result<TrajectoryBundle> {
    config.validate()?;
    let sys = System::single(&config.model, config.n, DEFAULT_MARK_ATOMS)?;
    let grid = config.grid()?;
    let mut out = run_finite(&sys, &grid, config.seed, config.replication, config.record_jump_log)?;
    let mut bundle = out.pop().expect("one population");
    bundle.metadata.insert("model".into(), config.model.name.clone());
    bundle.metadata.remove("population");
    Ok(bundle)
}
