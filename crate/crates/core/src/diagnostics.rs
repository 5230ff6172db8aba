//! Cross-checks between simulated systems and closed-form predictions.

use crate::bundle::TrajectoryBundle;
use crate::error::{Error, Result};
use crate::finite::{simulate_finite, FiniteSimConfig};
use crate::limit::{simulate_limit, LimitSimConfig};
use crate::model::{sigma_xi_pair, ModelSpec};
use crate::noise::derive_seed;
use crate::parallel::map_replications;
use crate::stats::{iqr, ks_two_sample, mean_stderr, median, spearman_increasing_p, KsTest};

/// Realized against predicted covariation of the jump noise of two particles.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariationEstimate {
    pub times: Vec<f64>,
    pub pair: (usize, usize),
    /// Sum of products of the two particles' jump increments up to each time.
    pub realized: Vec<f64>,
    /// `ς²` (same particle) or `ξ²` (distinct particles) times `∫₀ᵗ ∫ f dμ ds`.
    pub theoretical: Vec<f64>,
    pub replications: usize,
    /// Standard error of `realized` across replications (zero for one run).
    pub stderr: Vec<f64>,
}

impl CovariationEstimate {
    pub fn endpoint(&self) -> (f64, f64, f64) {
        let k = self.times.len() - 1;
        (self.realized[k], self.theoretical[k], self.stderr[k])
    }

    pub fn endpoint_ratio(&self) -> f64 {
        let (r, t, _) = self.endpoint();
        r / t
    }
}

/// Covariation of particles `pair` from a finite run's jump log.
pub fn estimate_covariation(
    bundle: &TrajectoryBundle,
    model: &ModelSpec,
    pair: (usize, usize),
) -> Result<CovariationEstimate> {
    let log = bundle
        .jump_log
        .as_ref()
        .ok_or_else(|| Error::Invalid("covariation needs a run with the jump log recorded".into()))?;
    let (s2, x2) = sigma_xi_pair(model)?;
    let (i, j) = pair;
    if i >= bundle.particles() || j >= bundle.particles() {
        return Err(Error::Invalid(format!("pair ({i}, {j}) out of range")));
    }
    let factor = if i == j { s2 } else { x2 };
    let mut realized = Vec::with_capacity(bundle.times.len());
    let mut acc = 0.0;
    let mut e = 0;
    for &t in &bundle.times {
        while e < log.len() && log[e].time <= t {
            acc += log[e].increments[i] * log[e].increments[j];
            e += 1;
        }
        realized.push(acc);
    }
    Ok(CovariationEstimate {
        times: bundle.times.clone(),
        pair,
        realized,
        theoretical: bundle.rate_integral.iter().map(|r| factor * r).collect(),
        replications: 1,
        stderr: vec![0.0; bundle.times.len()],
    })
}

/// Mean of single-run estimates on a common grid, with standard errors.
pub fn aggregate_covariation(runs: &[CovariationEstimate]) -> Result<CovariationEstimate> {
    let first = runs.first().ok_or_else(|| Error::Invalid("no covariation runs".into()))?;
    let n_t = first.times.len();
    if runs.iter().any(|r| r.times.len() != n_t) {
        return Err(Error::Invalid("covariation runs have different grids".into()));
    }
    let mut realized = Vec::with_capacity(n_t);
    let mut theoretical = Vec::with_capacity(n_t);
    let mut stderr = Vec::with_capacity(n_t);
    for k in 0..n_t {
        let r: Vec<f64> = runs.iter().map(|e| e.realized[k]).collect();
        let t: Vec<f64> = runs.iter().map(|e| e.theoretical[k]).collect();
        let (m, se) = mean_stderr(&r);
        realized.push(m);
        stderr.push(if runs.len() > 1 { se } else { 0.0 });
        theoretical.push(t.iter().sum::<f64>() / t.len() as f64);
    }
    Ok(CovariationEstimate {
        times: first.times.clone(),
        pair: first.pair,
        realized,
        theoretical,
        replications: runs.iter().map(|r| r.replications).sum(),
        stderr,
    })
}

/// How the finite and limit runs of a convergence study are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedPairing {
    /// Independent sub-seeds: the two systems share no randomness.
    #[default]
    Independent,
    /// Both systems use the root seed, so particle `i` and copy `i` share
    /// their initial draw and Brownian motion.
    Shared,
}

#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub model: ModelSpec,
    pub n_list: Vec<usize>,
    pub m_limit: usize,
    pub t_end: f64,
    pub dt: f64,
    pub reps: u64,
    pub seed: u64,
    pub pairing: SeedPairing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub median_w2: f64,
    pub iqr: f64,
    pub reps: u64,
    /// The individual distances, in replication order.
    pub samples: Vec<f64>,
}

/// `W₂(μ^N_T, μ̂_T)` for each `N`, against one limit run per replication.
pub fn convergence_study(cfg: &ConvergenceConfig) -> Result<Vec<ConvergenceRow>> {
    if cfg.n_list.is_empty() || cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("N list must be nonempty and strictly ascending".into()));
    }
    if cfg.m_limit < *cfg.n_list.last().unwrap() {
        return Err(Error::Config("M_limit must be at least max(N)".into()));
    }
    let (finite_seed, limit_seed) = match cfg.pairing {
        SeedPairing::Independent => {
            (derive_seed(cfg.seed, "convergence/finite", 0), derive_seed(cfg.seed, "convergence/limit", 0))
        }
        SeedPairing::Shared => (cfg.seed, cfg.seed),
    };
    let per_rep = map_replications(cfg.reps, |r| {
        let limit = LimitSimConfig::new(cfg.model.clone(), cfg.m_limit, cfg.t_end)
            .with_dt(cfg.dt)
            .with_seed(limit_seed)
            .with_replication(r)
            .with_output_grid(vec![cfg.t_end]);
        let reference = simulate_limit(&limit)?.terminal_measure()?;
        cfg.n_list
            .iter()
            .map(|&n| {
                let finite = FiniteSimConfig::new(cfg.model.clone(), n, cfg.t_end)
                    .with_dt(cfg.dt)
                    .with_seed(finite_seed)
                    .with_replication(r)
                    .with_output_grid(vec![cfg.t_end]);
                Ok(simulate_finite(&finite)?.terminal_measure()?.w2(&reference))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(cfg
        .n_list
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let samples: Vec<f64> = per_rep.iter().map(|row| row[k]).collect();
            ConvergenceRow { n, median_w2: median(&samples), iqr: iqr(&samples), reps: cfg.reps, samples }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub n: usize,
    /// Estimate of `E[sup_t |X^{N,1}_t|²]`.
    pub estimate: f64,
    pub stderr: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentAudit {
    pub rows: Vec<MomentRow>,
    pub spearman_rho: f64,
    /// One-sided p-value for an increasing trend in `N`.
    pub p_value: f64,
    /// False when the trend is significant at 5%.
    pub passed: bool,
}

/// `E[sup_{t ≤ T} |X^{N,1}_t|²]` per `N` from the recorded paths of particle 0.
pub fn moment_audit(groups: &[(usize, Vec<TrajectoryBundle>)]) -> Result<MomentAudit> {
    if groups.len() < 2 {
        return Err(Error::Invalid("moment audit needs at least two population sizes".into()));
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (n, bundles) in groups {
        if bundles.is_empty() {
            return Err(Error::Invalid(format!("no runs for N = {n}")));
        }
        let sups: Vec<f64> = bundles
            .iter()
            .map(|b| b.states.iter().map(|row| row[0] * row[0]).fold(0.0, f64::max))
            .collect();
        let (estimate, stderr) = mean_stderr(&sups);
        rows.push(MomentRow { n: *n, estimate, stderr, reps: bundles.len() });
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let est: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
    let (spearman_rho, p_value) = spearman_increasing_p(&ns, &est);
    Ok(MomentAudit { rows, spearman_rho, p_value, passed: p_value >= 0.05 })
}

/// KS test of the terminal marginals of particles `i` and `j` across runs.
pub fn exchangeability_ks(bundles: &[TrajectoryBundle], i: usize, j: usize, alpha: f64) -> KsTest {
    let a: Vec<f64> = bundles.iter().map(|b| b.terminal()[i]).collect();
    let b: Vec<f64> = bundles.iter().map(|b| b.terminal()[j]).collect();
    ks_two_sample(&a, &b, alpha)
}
