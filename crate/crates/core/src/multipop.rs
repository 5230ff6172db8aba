//! Several interacting populations.
//!
//! Population `k` reads from the populations in its input set `I(k)`. A
//! sender event of particle `j` in population `l` moves every particle `i` of
//! every population `k` with `l ∈ I(k)` by
//! `N_l^{-1/2} Ψ^{lk}(X^{l,j}, X^{k,i}, μ^l, μ^k, u^{l,j}, u^{k,i})`, the sender
//! itself excluded. In the limit system the common panel of population `l` is
//! one object shared by every population it feeds.
//!
//! Kernel expressions use `x`/`u` and `mean(m)` for the sender side and
//! `y`/`v` and `mean(mk)` for the receiver side. Populations are numbered
//! from 1 in configuration files and from 0 in the API.
//!
//! Seed mapping: particle `i` of population `k` draws its initial value,
//! Brownian motion and Poisson clock from entity `k << 32 | i`, population
//! `l`'s common panel from entity `l`, and the idiosyncratic panel of edge
//! `l -> k` for copy `i` from entity `l << 48 | k << 32 | i`. For a single
//! population these are exactly the streams of the single-population
//! simulators.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::bundle::{TimeGrid, TrajectoryBundle};
use crate::engine::{run_finite, run_limit, Edge, IdioMode, LimitStepper, Population, System};
use crate::error::{Error, Result};
use crate::model::{build_model, DerivedCoefficients, Expr, ModelSpec, Var, DEFAULT_MARK_ATOMS};

#[derive(Debug, Clone)]
pub struct MultiPopSpec {
    pub populations: Vec<ModelSpec>,
    pub sizes: Vec<usize>,
    /// `inputs[k]`: zero-based, sorted, deduplicated.
    pub inputs: Vec<Vec<usize>>,
    /// Kernels `Ψ^{lk}` keyed by `(l, k)`; missing pairs use population `l`'s own kernel.
    pub cross_kernels: BTreeMap<(usize, usize), Expr>,
    pub v_atoms: usize,
}

impl MultiPopSpec {
    pub fn new(populations: Vec<ModelSpec>, sizes: Vec<usize>, inputs: Vec<Vec<usize>>) -> Result<Self> {
        let spec = Self {
            populations,
            sizes,
            inputs: inputs
                .into_iter()
                .map(|mut v| {
                    v.sort_unstable();
                    v.dedup();
                    v
                })
                .collect(),
            cross_kernels: BTreeMap::new(),
            v_atoms: DEFAULT_MARK_ATOMS,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// One population reading from itself.
    pub fn single(model: ModelSpec, size: usize) -> Result<Self> {
        Self::new(vec![model], vec![size], vec![vec![0]])
    }

    /// Seven populations: 1 reads from 2 and 3, 2 from 4 and 5, 3 from 6 and 7.
    pub fn binary_tree(model: ModelSpec, size: usize) -> Result<Self> {
        let inputs = vec![vec![1, 2], vec![3, 4], vec![5, 6], vec![], vec![], vec![], vec![]];
        Self::new(vec![model; 7], vec![size; 7], inputs)
    }

    /// Eight populations on a cycle, each feeding the next: `I(k) = {k − 1}`, `I(1) = {8}`.
    pub fn ring(model: ModelSpec, size: usize) -> Result<Self> {
        let n = 8;
        let inputs = (0..n).map(|k| vec![(k + n - 1) % n]).collect();
        Self::new(vec![model; n], vec![size; n], inputs)
    }

    pub fn with_cross_kernel(mut self, from: usize, to: usize, psi: &str) -> Result<Self> {
        let e = Expr::parse(psi)?;
        e.check_vars(&[Var::X, Var::Y, Var::U, Var::V], "cross kernel")?;
        self.cross_kernels.insert((from, to), e);
        self.validate()?;
        Ok(self)
    }

    pub fn n_pop(&self) -> usize {
        self.populations.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.populations.len();
        if n == 0 {
            return Err(Error::Config("need at least one population".into()));
        }
        if self.sizes.len() != n || self.inputs.len() != n {
            return Err(Error::Config("sizes and inputs must list every population".into()));
        }
        for (k, inp) in self.inputs.iter().enumerate() {
            if let Some(&l) = inp.iter().find(|&&l| l >= n) {
                return Err(Error::Config(format!("population {} reads from unknown population {}", k + 1, l + 1)));
            }
        }
        for &(l, k) in self.cross_kernels.keys() {
            if l >= n || k >= n || !self.inputs[k].contains(&l) {
                return Err(Error::Config(format!("cross kernel {}->{} is not an edge of the graph", l + 1, k + 1)));
            }
        }
        Ok(())
    }

    /// Parses `{"populations": [...], "inputs": {"k": [l, ...]}, "cross_kernels": {"l->k": expr}}`.
    /// Each population is a model tree with an optional `"size"`; `default_size`
    /// applies when it is absent.
    pub fn from_json(value: &Value, default_size: Option<usize>) -> Result<Self> {
        let obj = value.as_object().ok_or_else(|| Error::Config("multipop config must be an object".into()))?;
        let pops = obj
            .get("populations")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Config("multipop config needs a 'populations' array".into()))?;
        let mut populations = Vec::with_capacity(pops.len());
        let mut sizes = Vec::with_capacity(pops.len());
        for (k, p) in pops.iter().enumerate() {
            let mut tree = p.clone();
            let size = tree.as_object_mut().and_then(|o| o.remove("size"));
            let size = match size {
                Some(v) => v
                    .as_u64()
                    .map(|s| s as usize)
                    .ok_or_else(|| Error::Config(format!("population {}: size must be an integer", k + 1)))?,
                None => default_size
                    .ok_or_else(|| Error::Config(format!("population {}: no size given", k + 1)))?,
            };
            populations.push(build_model(&tree)?);
            sizes.push(size);
        }
        let n = populations.len();
        let index = |s: &str, what: &str| -> Result<usize> {
            match s.trim().parse::<usize>() {
                Ok(i) if (1..=n).contains(&i) => Ok(i - 1),
                _ => Err(Error::Config(format!("{what}: '{s}' is not a population number in 1..={n}"))),
            }
        };
        let mut inputs = vec![Vec::new(); n];
        if let Some(map) = obj.get("inputs") {
            let map = map.as_object().ok_or_else(|| Error::Config("'inputs' must be an object".into()))?;
            for (key, list) in map {
                let k = index(key, "inputs")?;
                let list = list.as_array().ok_or_else(|| Error::Config("'inputs' values must be arrays".into()))?;
                for l in list {
                    let l = l.as_u64().ok_or_else(|| Error::Config("input populations must be integers".into()))?;
                    inputs[k].push(index(&l.to_string(), "inputs")?);
                }
            }
        }
        let mut spec = Self::new(populations, sizes, inputs)?;
        if let Some(map) = obj.get("cross_kernels") {
            let map = map.as_object().ok_or_else(|| Error::Config("'cross_kernels' must be an object".into()))?;
            for (key, expr) in map {
                let (l, k) = key
                    .split_once("->")
                    .ok_or_else(|| Error::Config(format!("cross kernel key '{key}' must look like 'l->k'")))?;
                let src = match expr {
                    Value::String(s) => s.clone(),
                    Value::Number(x) => x.to_string(),
                    _ => return Err(Error::Config(format!("cross kernel '{key}' must be an expression"))),
                };
                spec = spec.with_cross_kernel(index(l, "cross_kernels")?, index(k, "cross_kernels")?, &src)?;
            }
        }
        if let Some(v) = obj.get("v_atoms").and_then(Value::as_u64) {
            spec.v_atoms = v as usize;
        }
        Ok(spec)
    }

    pub(crate) fn system(&self) -> Result<System> {
        self.validate()?;
        let pops: Vec<Population> = self
            .populations
            .iter()
            .zip(&self.sizes)
            .map(|(m, &size)| {
                let q = m.mark_law.quadrature(self.v_atoms);
                Population { model: m.clone(), size, atoms: q.atoms, exact_quadrature: q.exact }
            })
            .collect();
        let mut edges = Vec::new();
        for (k, inp) in self.inputs.iter().enumerate() {
            for &l in inp {
                let kernel = self
                    .cross_kernels
                    .get(&(l, k))
                    .cloned()
                    .unwrap_or_else(|| self.populations[l].kernel().clone());
                let coeffs = DerivedCoefficients::new(kernel, pops[l].atoms.clone(), pops[k].atoms.clone());
                edges.push(Edge::new(l, k, coeffs));
            }
        }
        let sys = System { pops, edges };
        sys.validate()?;
        Ok(sys)
    }
}

/// Horizon, step and noise coordinates of a multi-population run.
#[derive(Debug, Clone)]
pub struct MultiPopRun {
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub replication: u64,
    pub output_grid: Option<Vec<f64>>,
    /// Jump log (finite) or noise log (limit).
    pub record_log: bool,
    pub idio_mode: IdioMode,
}

impl MultiPopRun {
    pub fn new(t_end: f64, dt: f64, seed: u64) -> Self {
        Self { t_end, dt, seed, replication: 0, output_grid: None, record_log: false, idio_mode: IdioMode::Auto }
    }

    pub fn with_replication(mut self, replication: u64) -> Self {
        self.replication = replication;
        self
    }

    pub fn with_output_grid(mut self, times: Vec<f64>) -> Self {
        self.output_grid = Some(times);
        self
    }

    pub fn with_log(mut self, on: bool) -> Self {
        self.record_log = on;
        self
    }

    fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_end, self.dt, self.output_grid.as_deref())
    }
}

fn label(spec: &MultiPopSpec, mut bundles: Vec<TrajectoryBundle>) -> Vec<TrajectoryBundle> {
    for (k, b) in bundles.iter_mut().enumerate() {
        b.metadata.insert("model".into(), spec.populations[k].name.clone());
        let inputs: Vec<String> = spec.inputs[k].iter().map(|l| (l + 1).to_string()).collect();
        b.metadata.insert("inputs".into(), inputs.join(" "));
    }
    bundles
}

/// One bundle per population.
pub fn simulate_multipop_finite(spec: &MultiPopSpec, run: &MultiPopRun) -> Result<Vec<TrajectoryBundle>> {
    let sys = spec.system()?;
    let out = run_finite(&sys, &run.grid()?, run.seed, run.replication, run.record_log)?;
    Ok(label(spec, out))
}

pub fn simulate_multipop_limit(spec: &MultiPopSpec, run: &MultiPopRun) -> Result<Vec<TrajectoryBundle>> {
    let sys = spec.system()?;
    let stepper = LimitStepper { sys: &sys, dt: run.dt, seed: run.seed, replication: run.replication, idio: run.idio_mode };
    let out = run_limit(&stepper, &run.grid()?, run.record_log, None)?;
    Ok(label(spec, out))
}
