//! Time stepping shared by the single- and multi-population simulators.
//!
//! A [`System`] is a list of populations and directed edges `l -> k` carrying
//! the jump kernel `Ψ^{lk}`. A single population is the system with one
//! population and the edge `0 -> 0`, so the single-population simulators and
//! the multi-population ones run the same arithmetic in the same order.

use std::collections::BTreeMap;

use crate::bundle::{JumpEvent, NoiseLog, TimeGrid, TrajectoryBundle};
use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure1D;
use crate::model::kernel::clamp_kappa_sq;
use crate::model::{check_centering, Atom, DerivedCoefficients, ModelSpec, NuSpec, Probe, Slot, Var};
use crate::noise::{
    entity, gaussian_increment, idio_entity, poisson_events, sample_panel, Channel, NoiseStream,
    WhiteNoisePanel,
};

/// How the idiosyncratic white-noise term of the limit system is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IdioMode {
    /// One Gaussian per bin and copy.
    Panel,
    /// One Gaussian per copy with the summed variance of the bins; equal in law.
    Collapsed,
    /// Collapse when the bin coefficients are shared by every copy.
    #[default]
    Auto,
}

#[derive(Debug, Clone)]
pub(crate) struct Population {
    pub model: ModelSpec,
    pub size: usize,
    /// Quadrature atoms of this population's mark law.
    pub atoms: Vec<Atom>,
    pub exact_quadrature: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Edge {
    pub from: usize,
    pub to: usize,
    pub coeffs: DerivedCoefficients,
    /// Ψ ignores the receiver state.
    pub receiver_independent: bool,
    /// Ψ ignores the sender state and the sender measure.
    pub bin_independent: bool,
}

impl Edge {
    pub fn new(from: usize, to: usize, coeffs: DerivedCoefficients) -> Self {
        let psi = coeffs.kernel();
        let receiver_independent = !psi.uses_var(Var::Y);
        let bin_independent = !psi.uses_var(Var::X) && !psi.uses_slot(Slot::Sender);
        Self { from, to, coeffs, receiver_independent, bin_independent }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct System {
    pub pops: Vec<Population>,
    /// Sorted by `(to, from)`.
    pub edges: Vec<Edge>,
}

impl System {
    pub fn single(model: &ModelSpec, size: usize, v_atoms: usize) -> Result<Self> {
        let q = model.mark_law.quadrature(v_atoms);
        let coeffs = DerivedCoefficients::new(model.kernel().clone(), q.atoms.clone(), q.atoms.clone());
        let pop = Population { model: model.clone(), size, atoms: q.atoms, exact_quadrature: q.exact };
        let sys = Self { pops: vec![pop], edges: vec![Edge::new(0, 0, coeffs)] };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, p) in self.pops.iter().enumerate() {
            if p.size < 2 {
                return Err(Error::Config(format!("population {} needs at least 2 particles", k + 1)));
            }
        }
        for e in &self.edges {
            let (from, to) = (&self.pops[e.from], &self.pops[e.to]);
            let exact = from.exact_quadrature && to.exact_quadrature;
            let own_kernel = e.from == e.to && e.coeffs.kernel().source() == from.model.kernel().source();
            if !exact && own_kernel {
                // Continuous marks: the model-level Monte-Carlo check.
                let report = check_centering(&from.model, &Probe::standard_set(), 4000, 0xC3E7)?;
                if !report.passed {
                    return Err(Error::Config(format!(
                        "jump kernel '{}' is not centered (max |∫∫Ψ| = {:e})",
                        from.model.kernel().source(),
                        report.max_abs
                    )));
                }
                continue;
            }
            let tol = if exact { 1e-12 } else { 1e-9 };
            for p in Probe::standard_set() {
                let c = e.coeffs.centering(p.x, p.y, &p.m, &p.m);
                if !(c.abs() <= tol) {
                    return Err(Error::Config(format!(
                        "jump kernel {}->{} '{}' is not centered (∫∫Ψ = {c:e} at x = {}, y = {})",
                        e.from + 1,
                        e.to + 1,
                        e.coeffs.kernel().source(),
                        p.x,
                        p.y
                    )));
                }
            }
        }
        Ok(())
    }

    fn incoming(&self, k: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.to == k)
    }

    fn outgoing(&self, l: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == l)
    }

    fn has_outgoing(&self, l: usize) -> bool {
        self.edges.iter().any(|e| e.from == l)
    }

    pub fn initial_states(&self, seed: u64, replication: u64) -> Vec<Vec<f64>> {
        self.pops
            .iter()
            .enumerate()
            .map(|(k, p)| {
                (0..p.size)
                    .map(|i| {
                        let s = NoiseStream::new(seed, replication, entity(k, i), Channel::Initial);
                        p.model.initial_law.sample(&mut s.rng(0))
                    })
                    .collect()
            })
            .collect()
    }
}

fn measures(states: &[Vec<f64>], step: usize) -> Result<Vec<EmpiricalMeasure1D>> {
    states
        .iter()
        .map(|x| {
            EmpiricalMeasure1D::from_slice(x).map_err(|_| {
                let particle = x.iter().position(|v| !v.is_finite()).unwrap_or(0);
                Error::NonFinite { step, particle }
            })
        })
        .collect()
}

fn check_rate(value: f64, x: f64, bound: f64, step: usize) -> Result<()> {
    if !(value > 0.0) {
        return Err(Error::NonPositiveRate { x, value });
    }
    if value > bound * (1.0 + 1e-12) {
        return Err(Error::RateBoundViolated { step, value, bound });
    }
    Ok(())
}

fn check_finite(states: &[f64], step: usize) -> Result<()> {
    match states.iter().position(|v| !v.is_finite()) {
        Some(particle) => Err(Error::NonFinite { step, particle }),
        None => Ok(()),
    }
}

struct Recorder {
    times: Vec<f64>,
    steps: Vec<usize>,
    states: Vec<Vec<f64>>,
    rate_integral: Vec<f64>,
}

impl Recorder {
    fn new() -> Self {
        Self { times: Vec::new(), steps: Vec::new(), states: Vec::new(), rate_integral: Vec::new() }
    }

    fn push(&mut self, grid: &TimeGrid, step: usize, states: &[f64], rate_integral: f64) {
        self.times.push(grid.time(step));
        self.steps.push(step);
        self.states.push(states.to_vec());
        self.rate_integral.push(rate_integral);
    }

    fn finish(self, jump_log: Option<Vec<JumpEvent>>, noise_log: Option<NoiseLog>, metadata: BTreeMap<String, String>) -> TrajectoryBundle {
        TrajectoryBundle {
            times: self.times,
            steps: self.steps,
            states: self.states,
            rate_integral: self.rate_integral,
            jump_log,
            noise_log,
            metadata,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    step: usize,
    time: f64,
    pop: usize,
    sender: usize,
    index: u64,
    thin_u: f64,
}

/// One replication of the finite particle system.
pub(crate) fn run_finite(
    sys: &System,
    grid: &TimeGrid,
    seed: u64,
    replication: u64,
    record_jump_log: bool,
) -> Result<Vec<TrajectoryBundle>> {
    let n_pop = sys.pops.len();
    let dt = grid.dt;
    let t_end = grid.t_end();
    let mut x = sys.initial_states(seed, replication);

    let mut events = Vec::new();
    for (l, p) in sys.pops.iter().enumerate() {
        if !sys.has_outgoing(l) {
            continue;
        }
        for j in 0..p.size {
            let s = NoiseStream::new(seed, replication, entity(l, j), Channel::PoissonEvents);
            for (index, ev) in poisson_events(&s, p.model.rate_bound, 0.0, t_end).into_iter().enumerate() {
                let step = ((ev.time / dt).floor() as usize).min(grid.n_steps - 1);
                events.push(Candidate { step, time: ev.time, pop: l, sender: j, index: index as u64, thin_u: ev.thin_u });
            }
        }
    }
    events.sort_by(|a, b| {
        a.time.total_cmp(&b.time).then(a.pop.cmp(&b.pop)).then(a.sender.cmp(&b.sender))
    });

    let mut recorders: Vec<Recorder> = (0..n_pop).map(|_| Recorder::new()).collect();
    let mut logs: Vec<Vec<JumpEvent>> = vec![Vec::new(); n_pop];
    let mut rate_int = vec![0.0; n_pop];
    let mut rates: Vec<Vec<f64>> = sys.pops.iter().map(|p| vec![0.0; p.size]).collect();
    let mut out_ptr = 0;
    let mut ev_ptr = 0;
    let mut accepted = 0usize;

    for step in 0..=grid.n_steps {
        if grid.output_steps.get(out_ptr) == Some(&step) {
            for k in 0..n_pop {
                recorders[k].push(grid, step, &x[k], rate_int[k]);
            }
            out_ptr += 1;
        }
        if step == grid.n_steps {
            break;
        }
        let mu = measures(&x, step)?;
        for (k, p) in sys.pops.iter().enumerate() {
            for (i, r) in rates[k].iter_mut().enumerate() {
                *r = p.model.rate_at(x[k][i], &mu[k]);
                check_rate(*r, x[k][i], p.model.rate_bound, step)?;
            }
            rate_int[k] += dt * rates[k].iter().sum::<f64>() / p.size as f64;
        }

        let mut next = x.clone();
        for (k, p) in sys.pops.iter().enumerate() {
            for (i, xi) in next[k].iter_mut().enumerate() {
                let s = NoiseStream::new(seed, replication, entity(k, i), Channel::Brownian);
                let db = gaussian_increment(&s, step as u64, dt);
                *xi += p.model.drift_at(x[k][i], &mu[k]) * dt + p.model.diffusion_at(x[k][i], &mu[k]) * db;
            }
        }

        while ev_ptr < events.len() && events[ev_ptr].step == step {
            let ev = events[ev_ptr];
            ev_ptr += 1;
            let (l, j) = (ev.pop, ev.sender);
            let bound = sys.pops[l].model.rate_bound;
            let candidate = crate::noise::PoissonEvent { time: ev.time, thin_u: ev.thin_u };
            if !candidate.accepted(rates[l][j], bound) {
                continue;
            }
            accepted += 1;
            let mut rng = NoiseStream::new(seed, replication, entity(l, j), Channel::PoissonMarks).rng(ev.index);
            let u_sender = sys.pops[l].model.mark_law.sample(&mut rng);
            let scale = 1.0 / (sys.pops[l].size as f64).sqrt();
            let xs = x[l][j];
            for e in sys.outgoing(l) {
                let k = e.to;
                let law: &NuSpec = &sys.pops[k].model.mark_law;
                let mut incs = if record_jump_log { vec![0.0; sys.pops[k].size] } else { Vec::new() };
                for i in 0..sys.pops[k].size {
                    if k == l && i == j {
                        continue;
                    }
                    let u_i = law.sample(&mut rng);
                    let d = e.coeffs.psi(xs, x[k][i], &mu[l], &mu[k], u_sender, u_i) * scale;
                    next[k][i] += d;
                    if record_jump_log {
                        incs[i] = d;
                    }
                }
                if record_jump_log {
                    logs[k].push(JumpEvent { time: ev.time, sender_population: l, sender: j, increments: incs });
                }
            }
        }

        for k in 0..n_pop {
            check_finite(&next[k], step + 1)?;
        }
        x = next;
    }

    Ok(recorders
        .into_iter()
        .zip(logs)
        .enumerate()
        .map(|(k, (rec, log))| {
            let mut meta = BTreeMap::new();
            meta.insert("system".to_string(), "finite".to_string());
            meta.insert("population".to_string(), (k + 1).to_string());
            meta.insert("particles".to_string(), sys.pops[k].size.to_string());
            meta.insert("dt".to_string(), format!("{}", grid.dt));
            meta.insert("seed".to_string(), seed.to_string());
            meta.insert("replication".to_string(), replication.to_string());
            meta.insert("accepted_events".to_string(), accepted.to_string());
            rec.finish(record_jump_log.then_some(log), None, meta)
        })
        .collect())
}

/// Increments of every copy of every population over one step, by source.
#[derive(Debug, Clone, Default)]
pub(crate) struct StepParts {
    pub drift: Vec<Vec<f64>>,
    pub brownian: Vec<Vec<f64>>,
    pub common: Vec<Vec<f64>>,
    pub idio: Vec<Vec<f64>>,
    /// `∫ f^k dμ̂^k` at the start of the step.
    pub mean_rate: Vec<f64>,
}

impl StepParts {
    pub fn total(&self, k: usize, i: usize) -> f64 {
        self.drift[k][i] + self.brownian[k][i] + self.common[k][i] + self.idio[k][i]
    }
}

/// Per-bin coefficients of one edge: `ψ̃(q_j, y, v_a)` and `κ(q_j, y)`.
struct BinTable {
    rows: usize,
    v: usize,
    psi_tilde: Vec<f64>,
    kappa: Vec<f64>,
}

impl BinTable {
    fn new(v: usize) -> Self {
        Self { rows: 0, v, psi_tilde: Vec::new(), kappa: Vec::new() }
    }

    fn fill(
        &mut self,
        e: &Edge,
        q: &[f64],
        y: f64,
        mu_l: &EmpiricalMeasure1D,
        mu_k: &EmpiricalMeasure1D,
    ) -> Result<()> {
        self.rows = if e.bin_independent { 1 } else { q.len() };
        self.psi_tilde.resize(self.rows * self.v, 0.0);
        self.kappa.resize(self.rows, 0.0);
        for r in 0..self.rows {
            let pt = &mut self.psi_tilde[r * self.v..(r + 1) * self.v];
            let (second, common) = e.coeffs.moments_into(q[r], y, mu_l, mu_k, pt);
            self.kappa[r] = clamp_kappa_sq(second - common, q[r], y)?.sqrt();
        }
        Ok(())
    }

    #[inline]
    fn row(&self, j: usize) -> usize {
        if self.rows == 1 {
            0
        } else {
            j
        }
    }

    /// `Σ_j √f_j Σ_a ψ̃_{ja} G[j][a]`.
    fn common(&self, sqrt_rates: &[f64], panel: &WhiteNoisePanel) -> f64 {
        let mut acc = 0.0;
        for (j, sf) in sqrt_rates.iter().enumerate() {
            let r = self.row(j);
            let pt = &self.psi_tilde[r * self.v..(r + 1) * self.v];
            let g = panel.row(j);
            let mut s = 0.0;
            for a in 0..self.v {
                s += pt[a] * g[a];
            }
            acc += sf * s;
        }
        acc
    }

    /// `Σ_j f_j κ_j²`.
    fn idio_weight(&self, rates: &[f64]) -> f64 {
        rates.iter().enumerate().map(|(j, f)| f * self.kappa[self.row(j)].powi(2)).sum()
    }

    /// `Σ_j √f_j κ_j H[j]` with `H[j] ~ N(0, dt / M)` drawn from `stream`.
    fn idio_panel(&self, sqrt_rates: &[f64], stream: &NoiseStream, step: u64, dt: f64) -> f64 {
        let mut rng = stream.rng(step);
        let scale = (dt / sqrt_rates.len() as f64).sqrt();
        let mut acc = 0.0;
        for (j, sf) in sqrt_rates.iter().enumerate() {
            acc += sf * self.kappa[self.row(j)] * scale * rng.standard_normal();
        }
        acc
    }
}

/// A view of the limit system at the start of a step (or at the horizon).
pub struct StepView<'a> {
    pub step: usize,
    pub time: f64,
    pub states: &'a [Vec<f64>],
    pub measures: &'a [EmpiricalMeasure1D],
}

/// The limit-system update rule with its noise fixed by `(seed, replication)`.
pub(crate) struct LimitStepper<'a> {
    pub sys: &'a System,
    pub dt: f64,
    pub seed: u64,
    pub replication: u64,
    pub idio: IdioMode,
}

impl LimitStepper<'_> {
    fn collapse(&self, e: &Edge) -> bool {
        match self.idio {
            IdioMode::Panel => false,
            IdioMode::Collapsed => true,
            IdioMode::Auto => e.receiver_independent,
        }
    }

    pub fn path_metadata(&self) -> BTreeMap<String, String> {
        let mut meta = BTreeMap::new();
        let describe = |flags: Vec<bool>, yes: &str, no: &str| -> String {
            if flags.iter().all(|&f| f) {
                yes.to_string()
            } else if flags.iter().all(|&f| !f) {
                no.to_string()
            } else {
                "mixed".to_string()
            }
        };
        let edges = &self.sys.edges;
        meta.insert(
            "idiosyncratic_path".into(),
            describe(edges.iter().map(|e| self.collapse(e)).collect(), "collapsed", "panel"),
        );
        meta.insert(
            "common_coefficients".into(),
            describe(edges.iter().map(|e| e.receiver_independent).collect(), "shared", "per-copy"),
        );
        meta
    }

    /// Increments of every copy for step `step` from the states `x` (whose
    /// empirical measures are `mu`).
    pub fn increments(&self, step: usize, x: &[Vec<f64>], mu: &[EmpiricalMeasure1D], out: &mut StepParts) -> Result<()> {
        let sys = self.sys;
        let dt = self.dt;
        let n_pop = sys.pops.len();
        let resize = |v: &mut Vec<Vec<f64>>| {
            v.resize(n_pop, Vec::new());
            for (k, p) in sys.pops.iter().enumerate() {
                v[k].clear();
                v[k].resize(p.size, 0.0);
            }
        };
        resize(&mut out.drift);
        resize(&mut out.brownian);
        resize(&mut out.common);
        resize(&mut out.idio);
        out.mean_rate.resize(n_pop, 0.0);

        let mut rates: Vec<Vec<f64>> = Vec::with_capacity(n_pop);
        let mut sqrt_rates: Vec<Vec<f64>> = Vec::with_capacity(n_pop);
        let mut panels: Vec<Option<WhiteNoisePanel>> = Vec::with_capacity(n_pop);
        for (l, p) in sys.pops.iter().enumerate() {
            let q = mu[l].samples();
            let f: Vec<f64> = q.iter().map(|&qj| p.model.rate_at(qj, &mu[l])).collect();
            for (j, &fj) in f.iter().enumerate() {
                check_rate(fj, q[j], p.model.rate_bound, step)?;
            }
            out.mean_rate[l] = f.iter().sum::<f64>() / p.size as f64;
            sqrt_rates.push(f.iter().map(|v| v.sqrt()).collect());
            rates.push(f);
            panels.push(sys.has_outgoing(l).then(|| {
                let s = NoiseStream::new(self.seed, self.replication, l as u64, Channel::CommonW);
                sample_panel(&s, step as u64, p.size, &p.atoms, dt)
            }));
        }

        for (k, p) in sys.pops.iter().enumerate() {
            for i in 0..p.size {
                let xi = x[k][i];
                let s = NoiseStream::new(self.seed, self.replication, entity(k, i), Channel::Brownian);
                out.drift[k][i] = p.model.drift_at(xi, &mu[k]) * dt;
                out.brownian[k][i] = p.model.diffusion_at(xi, &mu[k]) * gaussian_increment(&s, step as u64, dt);
            }
            for e in sys.incoming(k) {
                let l = e.from;
                let q = mu[l].samples();
                let panel = panels[l].as_ref().expect("sender panel");
                let mut table = BinTable::new(sys.pops[l].atoms.len());
                let collapse = self.collapse(e);
                let idio_stream = |i: usize| {
                    NoiseStream::new(self.seed, self.replication, idio_entity(l, k, i), Channel::IdioW)
                };
                let bin_var = dt / sys.pops[l].size as f64;
                if e.receiver_independent {
                    table.fill(e, q, 0.0, &mu[l], &mu[k])?;
                    let c = table.common(&sqrt_rates[l], panel);
                    let w = table.idio_weight(&rates[l]);
                    for i in 0..p.size {
                        out.common[k][i] += c;
                        out.idio[k][i] += if collapse {
                            (bin_var * w).sqrt() * idio_stream(i).rng(step as u64).standard_normal()
                        } else {
                            table.idio_panel(&sqrt_rates[l], &idio_stream(i), step as u64, dt)
                        };
                    }
                } else {
                    for i in 0..p.size {
                        table.fill(e, q, x[k][i], &mu[l], &mu[k])?;
                        out.common[k][i] += table.common(&sqrt_rates[l], panel);
                        out.idio[k][i] += if collapse {
                            let w = table.idio_weight(&rates[l]);
                            (bin_var * w).sqrt() * idio_stream(i).rng(step as u64).standard_normal()
                        } else {
                            table.idio_panel(&sqrt_rates[l], &idio_stream(i), step as u64, dt)
                        };
                    }
                }
            }
        }
        Ok(())
    }

    /// Conditional variance of the common and idiosyncratic increments of
    /// copy `i` of population `k` over one step, given the states.
    pub fn noise_variance(&self, k: usize, i: usize, x: &[Vec<f64>], mu: &[EmpiricalMeasure1D]) -> Result<(f64, f64)> {
        let (mut common, mut idio) = (0.0, 0.0);
        for e in self.sys.incoming(k) {
            let l = e.from;
            let pop = &self.sys.pops[l];
            let q = mu[l].samples();
            let mut table = BinTable::new(pop.atoms.len());
            table.fill(e, q, x[k][i], &mu[l], &mu[k])?;
            let bin_var = self.dt / pop.size as f64;
            for (j, &qj) in q.iter().enumerate() {
                let f = pop.model.rate_at(qj, &mu[l]);
                let r = table.row(j);
                for (a, atom) in pop.atoms.iter().enumerate() {
                    common += f * table.psi_tilde[r * table.v + a].powi(2) * atom.weight * bin_var;
                }
                idio += f * table.kappa[r].powi(2) * bin_var;
            }
        }
        Ok((common, idio))
    }
}

/// One replication of the limit system. `observer` sees the state at the
/// start of every step and once more at the horizon.
pub(crate) fn run_limit(
    stepper: &LimitStepper<'_>,
    grid: &TimeGrid,
    record_noise_log: bool,
    mut observer: Option<&mut dyn FnMut(&StepView<'_>)>,
) -> Result<Vec<TrajectoryBundle>> {
    let sys = stepper.sys;
    let n_pop = sys.pops.len();
    let mut x = sys.initial_states(stepper.seed, stepper.replication);
    let mut recorders: Vec<Recorder> = (0..n_pop).map(|_| Recorder::new()).collect();
    let mut logs: Vec<NoiseLog> = vec![NoiseLog::default(); n_pop];
    let mut rate_int = vec![0.0; n_pop];
    let mut parts = StepParts::default();
    let mut out_ptr = 0;

    for step in 0..=grid.n_steps {
        if grid.output_steps.get(out_ptr) == Some(&step) {
            for k in 0..n_pop {
                recorders[k].push(grid, step, &x[k], rate_int[k]);
            }
            out_ptr += 1;
        }
        let mu = measures(&x, step)?;
        if let Some(obs) = observer.as_deref_mut() {
            obs(&StepView { step, time: grid.time(step), states: &x, measures: &mu });
        }
        if step == grid.n_steps {
            break;
        }
        stepper.increments(step, &x, &mu, &mut parts)?;
        for k in 0..n_pop {
            rate_int[k] += grid.dt * parts.mean_rate[k];
            for i in 0..x[k].len() {
                x[k][i] += parts.total(k, i);
            }
            check_finite(&x[k], step + 1)?;
            if record_noise_log {
                logs[k].brownian.push(parts.brownian[k].clone());
                logs[k].common.push(parts.common[k].clone());
                logs[k].idiosyncratic.push(parts.idio[k].clone());
            }
        }
    }

    let path_meta = stepper.path_metadata();
    Ok(recorders
        .into_iter()
        .zip(logs)
        .enumerate()
        .map(|(k, (rec, log))| {
            let mut meta = path_meta.clone();
            meta.insert("system".to_string(), "limit".to_string());
            meta.insert("population".to_string(), (k + 1).to_string());
            meta.insert("copies".to_string(), sys.pops[k].size.to_string());
            meta.insert("dt".to_string(), format!("{}", grid.dt));
            meta.insert("seed".to_string(), stepper.seed.to_string());
            meta.insert("replication".to_string(), stepper.replication.to_string());
            meta.insert("mark_atoms".to_string(), sys.pops[k].atoms.len().to_string());
            meta.insert(
                "quadrature".to_string(),
                if sys.pops[k].exact_quadrature { "exact" } else { "quantized" }.to_string(),
            );
            rec.finish(None, record_noise_log.then_some(log), meta)
        })
        .collect())
}
