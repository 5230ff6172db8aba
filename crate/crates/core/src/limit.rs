//! The limit system, approximated by `M` exchangeable copies.
//!
//! The conditional law `μ_t` is replaced by the empirical law `μ̂_t` of the
//! copies. Its quantile function is constant on the bins `[j/M, (j+1)/M)`, so
//! the white noises on `[0, 1]` reduce to Gaussian panels with one row per
//! bin: a common panel `G` (rows × mark atoms) shared by all copies and one
//! idiosyncratic column `H^i` per copy. Copy `i` moves by
//!
//! ```text
//! b dt + σ ΔB^i + Σ_{j,a} √f(q_j) ψ̃(q_j, X^i, v_a) G[j][a] + Σ_j √f(q_j) κ(q_j, X^i) H^i[j]
//! ```
//!
//! with `q_j` the `(j+½)/M` quantile of `μ̂_t`, that is the `j`-th order statistic.

use crate::bundle::{TimeGrid, TrajectoryBundle};
use crate::diagnostics::CovariationEstimate;
use crate::engine::{run_limit, LimitStepper, System};
use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure1D;
use crate::model::{sigma_xi_pair, ModelSpec, DEFAULT_MARK_ATOMS};

pub use crate::engine::{IdioMode, StepView};

#[derive(Debug, Clone)]
pub struct LimitSimConfig {
    pub model: ModelSpec,
    pub m: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub replication: u64,
    /// Quantization of a continuous mark law; ignored for small discrete laws.
    pub v_atoms: usize,
    pub idio_mode: IdioMode,
    pub record_noise_log: bool,
    pub output_grid: Option<Vec<f64>>,
}

impl LimitSimConfig {
    pub fn new(model: ModelSpec, m: usize, t_end: f64) -> Self {
        Self {
            model,
            m,
            t_end,
            dt: t_end * 1e-3,
            seed: 0,
            replication: 0,
            v_atoms: DEFAULT_MARK_ATOMS,
            idio_mode: IdioMode::Auto,
            record_noise_log: false,
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

    pub fn with_noise_log(mut self, on: bool) -> Self {
        self.record_noise_log = on;
        self
    }

    pub fn with_idio_mode(mut self, mode: IdioMode) -> Self {
        self.idio_mode = mode;
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
        if self.m < 2 {
            return Err(Error::Config(format!("need M >= 2 copies, got {}", self.m)));
        }
        if self.v_atoms < 1 {
            return Err(Error::Config("v_atoms must be at least 1".into()));
        }
        self.grid().map(|_| ())
    }

    pub(crate) fn system(&self) -> Result<System> {
        self.validate()?;
        System::single(&self.model, self.m, self.v_atoms)
    }

    pub(crate) fn stepper<'a>(&self, sys: &'a System) -> LimitStepper<'a> {
        LimitStepper { sys, dt: self.dt, seed: self.seed, replication: self.replication, idio: self.idio_mode }
    }
}

fn finish(config: &LimitSimConfig, mut out: Vec<TrajectoryBundle>) -> TrajectoryBundle {
    let mut bundle = out.pop().expect("one population");
    bundle.metadata.insert("model".into(), config.model.name.clone());
    bundle.metadata.remove("population");
    bundle
}

pub fn simulate_limit(config: &LimitSimConfig) -> Result<TrajectoryBundle> {
    let sys = config.system()?;
    let out = run_limit(&config.stepper(&sys), &config.grid()?, config.record_noise_log, None)?;
    Ok(finish(config, out))
}

/// [`simulate_limit`] with a hook called at the start of every step and at
/// the horizon, with the copies' states and empirical measure.
pub fn simulate_limit_observed(
    config: &LimitSimConfig,
    observer: &mut dyn FnMut(usize, f64, &[f64], &EmpiricalMeasure1D),
) -> Result<TrajectoryBundle> {
    let sys = config.system()?;
    let mut hook = |v: &StepView<'_>| observer(v.step, v.time, &v.states[0], &v.measures[0]);
    let out = run_limit(&config.stepper(&sys), &config.grid()?, config.record_noise_log, Some(&mut hook))?;
    Ok(finish(config, out))
}

/// Conditional variances `(common, idiosyncratic)` of one step's white-noise
/// increments of `copy`, given the copies' states.
pub fn step_noise_variance(config: &LimitSimConfig, states: &[f64], copy: usize) -> Result<(f64, f64)> {
    let sys = config.system()?;
    let x = vec![states.to_vec()];
    let mu = vec![EmpiricalMeasure1D::from_slice(states)?];
    config.stepper(&sys).noise_variance(0, copy, &x, &mu)
}

/// Realized covariation of the white-noise increments of copies `pair` over
/// one run, against `ς²` (same copy) or `ξ²` (distinct copies) times
/// `∫₀ᵗ ∫ f dμ̂ ds`.
pub fn limit_covariance_check(config: &LimitSimConfig, pair: (usize, usize)) -> Result<CovariationEstimate> {
    let (s2, x2) = sigma_xi_pair(&config.model)?;
    let (i, j) = pair;
    if i >= config.m || j >= config.m {
        return Err(Error::Invalid(format!("copy pair ({i}, {j}) out of range for M = {}", config.m)));
    }
    let cfg = config.clone().with_noise_log(true);
    let bundle = simulate_limit(&cfg)?;
    let log = bundle.noise_log.as_ref().expect("noise log requested");
    let factor = if i == j { s2 } else { x2 };
    let mut realized = Vec::with_capacity(bundle.steps.len());
    let mut acc = 0.0;
    let mut next = 0;
    for (k, &step) in bundle.steps.iter().enumerate() {
        while next < step {
            acc += log.jump_increment(next, i) * log.jump_increment(next, j);
            next += 1;
        }
        debug_assert_eq!(realized.len(), k);
        realized.push(acc);
    }
    let theoretical = bundle.rate_integral.iter().map(|r| factor * r).collect();
    Ok(CovariationEstimate {
        times: bundle.times.clone(),
        pair,
        realized,
        theoretical,
        replications: 1,
        stderr: vec![0.0; bundle.times.len()],
    })
}
