//! Command-line runner.
//!
//! Exit codes: 0 on success, 2 on a configuration or usage error, 3 when a
//! simulation aborts on a numerical condition (non-finite state, rate bound
//! violated, divergence), 1 on I/O failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bundle::TrajectoryBundle;
use crate::diagnostics::{
    aggregate_covariation, convergence_study, estimate_covariation, moment_audit, ConvergenceConfig, SeedPairing,
};
use crate::error::{Error, Result};
use crate::finite::{simulate_finite, FiniteSimConfig};
use crate::generator::{builtin_test_function, martingale_residual};
use crate::limit::{simulate_limit, IdioMode, LimitSimConfig};
use crate::model::{build_model, ModelSpec};
use crate::multipop::{simulate_multipop_finite, simulate_multipop_limit, MultiPopRun, MultiPopSpec};
use crate::noise::derive_seed;
use crate::parallel::map_replications;
use crate::picard::picard_solve;

/// Replications computed between two rounds of file writing.
const WRITE_CHUNK: u64 = 16;

#[derive(Debug, Parser)]
#[command(name = "cmkv", version, about = "Mean-field jump systems and their conditional limit")]
struct Cli {
    /// Worker threads for replications (default: all logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate trajectories.
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// Picard iteration for the limit system on frozen noise.
    Picard(PicardArgs),
    /// Martingale-problem residual of a test function.
    Mgtest(MgtestArgs),
    /// Diagnostic studies.
    #[command(subcommand)]
    Study(StudyCmd),
}

#[derive(Debug, Subcommand)]
enum SimulateCmd {
    /// The N-particle system.
    Finite(FiniteArgs),
    /// The limit system with M copies.
    Limit(LimitArgs),
    /// Several interacting populations.
    Multipop(MultipopArgs),
}

#[derive(Debug, Subcommand)]
enum StudyCmd {
    /// Median W2 between finite and limit empirical laws at T, per N.
    Convergence(ConvergenceArgs),
    /// Realized against predicted jump covariation of two particles.
    Covariation(CovariationArgs),
    /// E[sup_t |X^{N,1}_t|^2] per N and a trend test.
    Moments(MomentsArgs),
}

#[derive(Debug, Args, Clone)]
struct Common {
    /// Model JSON file, or the name of a builtin model.
    #[arg(long)]
    model: String,
    /// Horizon T.
    #[arg(long = "t")]
    t_end: f64,
    /// Time step (default T/1000).
    #[arg(long)]
    dt: Option<f64>,
    /// Root seed, decimal or 0x-prefixed hexadecimal.
    #[arg(long, value_parser = parse_seed, default_value = "0")]
    seed: u64,
}

impl Common {
    fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.t_end * 1e-3)
    }
}

#[derive(Debug, Args)]
struct Output {
    #[arg(long, default_value_t = 1)]
    reps: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Record every k-th step (the horizon is always recorded).
    #[arg(long, default_value_t = 1)]
    every: usize,
}

#[derive(Debug, Args)]
struct FiniteArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    output: Output,
    /// Also write the jump log of each replication.
    #[arg(long)]
    jump_log: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IdioArg {
    Auto,
    Panel,
    Collapsed,
}

impl From<IdioArg> for IdioMode {
    fn from(a: IdioArg) -> Self {
        match a {
            IdioArg::Auto => IdioMode::Auto,
            IdioArg::Panel => IdioMode::Panel,
            IdioArg::Collapsed => IdioMode::Collapsed,
        }
    }
}

#[derive(Debug, Args)]
struct LimitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    m: usize,
    #[command(flatten)]
    output: Output,
    /// Atoms used to quantize a continuous mark law.
    #[arg(long, default_value_t = crate::model::DEFAULT_MARK_ATOMS)]
    v_atoms: usize,
    #[arg(long, value_enum, default_value = "auto")]
    idio: IdioArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SystemKind {
    Finite,
    Limit,
}

#[derive(Debug, Args)]
struct MultipopArgs {
    #[command(flatten)]
    common: Common,
    /// Which system to simulate.
    #[arg(long, value_enum, default_value = "finite")]
    system: SystemKind,
    /// Population size for populations without a "size" entry.
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    output: Output,
    /// Also write the jump log (finite system only).
    #[arg(long)]
    jump_log: bool,
}

#[derive(Debug, Args)]
struct PicardArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    iters: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    every: usize,
}

#[derive(Debug, Args)]
struct MgtestArgs {
    #[arg(long)]
    model: String,
    /// Test function: const, y1, sin_cos or y1y2.
    #[arg(long)]
    g: String,
    #[arg(long)]
    s: f64,
    /// End of the interval, also the simulated horizon.
    #[arg(long = "t")]
    t_end: f64,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 40)]
    m: usize,
    #[arg(long)]
    reps: u64,
    #[arg(long, value_parser = parse_seed, default_value = "0")]
    seed: u64,
    /// Optional CSV with the result.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated ascending particle counts.
    #[arg(long, value_delimiter = ',')]
    n_list: Vec<usize>,
    #[arg(long)]
    m_limit: usize,
    #[arg(long)]
    reps: u64,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CovariationArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    reps: u64,
    /// Particle pair "i,j" (zero-based).
    #[arg(long, value_parser = parse_pair, default_value = "0,1")]
    pair: (usize, usize),
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MomentsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    n_list: Vec<usize>,
    #[arg(long)]
    reps: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("invalid pair '{s}': {e}"));
    match s.split_once(',') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => Err(format!("pair '{s}' must look like 'i,j'")),
    }
}

fn parse_seed(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim();
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse::<u64>(),
    };
    parsed.map_err(|e| format!("invalid seed '{s}': {e}"))
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.jobs {
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(Error::Config(format!("cannot start {j} workers: {e}"))),
        },
        None => dispatch(&cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else if matches!(e, Error::Io(_)) {
        1
    } else {
        2
    }
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Simulate(SimulateCmd::Finite(a)) => cmd_finite(a),
        Command::Simulate(SimulateCmd::Limit(a)) => cmd_limit(a),
        Command::Simulate(SimulateCmd::Multipop(a)) => cmd_multipop(a),
        Command::Picard(a) => cmd_picard(a),
        Command::Mgtest(a) => cmd_mgtest(a),
        Command::Study(StudyCmd::Convergence(a)) => cmd_convergence(a),
        Command::Study(StudyCmd::Covariation(a)) => cmd_covariation(a),
        Command::Study(StudyCmd::Moments(a)) => cmd_moments(a),
    }
}

/// The model tree from a file, or a builtin referenced by name.
fn load_tree(model: &str) -> Result<Value> {
    let path = Path::new(model);
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else if model.ends_with(".json") {
        Err(Error::Config(format!("model file {model} not found")))
    } else {
        Ok(json!({ "model": model }))
    }
}

fn load_model(model: &str) -> Result<(ModelSpec, Value)> {
    let tree = load_tree(model)?;
    Ok((build_model(&tree)?, tree))
}

/// SHA-256 of the canonical (key-sorted, compact) JSON of the configuration
/// tree and the run parameters.
pub fn config_hash(config: &Value, params: &Value) -> String {
    let canonical = serde_json::to_string(&json!({ "config": config, "params": params })).expect("serializable");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Grid time with nine significant digits.
pub fn format_time(t: f64) -> String {
    format!("{t:.8e}")
}

struct Header<'a> {
    command: &'a str,
    hash: &'a str,
    seed: u64,
    extra: Vec<(String, String)>,
}

impl Header<'_> {
    fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# cmkv {}", self.command);
        let _ = writeln!(s, "# config_hash: {}", self.hash);
        let _ = writeln!(s, "# seed: {}", self.seed);
        for (k, v) in &self.extra {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s
    }

    fn with(&self, key: &str, value: impl ToString) -> Self {
        let mut extra = self.extra.clone();
        extra.push((key.to_string(), value.to_string()));
        Header { command: self.command, hash: self.hash, seed: self.seed, extra }
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn trajectory_csv(header: &Header<'_>, bundle: &TrajectoryBundle, column: &str) -> String {
    let mut s = header.render();
    for (k, v) in &bundle.metadata {
        if k != "seed" {
            let _ = writeln!(s, "# meta.{k}: {v}");
        }
    }
    s.push_str("time");
    for i in 0..bundle.particles() {
        let _ = write!(s, ",{column}_{i}");
    }
    s.push('\n');
    for (t, row) in bundle.times.iter().zip(&bundle.states) {
        s.push_str(&format_time(*t));
        for x in row {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
    }
    s
}

fn jump_csv(header: &Header<'_>, bundle: &TrajectoryBundle, with_population: bool) -> String {
    let mut s = header.render();
    s.push_str(if with_population {
        "time,sender_population,sender,receiver,increment\n"
    } else {
        "time,sender,receiver,increment\n"
    });
    let own_pop = bundle.metadata.get("population").and_then(|p| p.parse::<usize>().ok()).map(|p| p - 1);
    for ev in bundle.jump_log.iter().flatten() {
        for (i, inc) in ev.increments.iter().enumerate() {
            let same_pop = own_pop.is_none_or(|p| p == ev.sender_population);
            if same_pop && i == ev.sender {
                continue;
            }
            if with_population {
                let _ = writeln!(
                    s,
                    "{},{},{},{i},{inc}",
                    format_time(ev.time),
                    ev.sender_population + 1,
                    ev.sender
                );
            } else {
                let _ = writeln!(s, "{},{},{i},{inc}", format_time(ev.time), ev.sender);
            }
        }
    }
    s
}

struct Manifest {
    command: String,
    hash: String,
    seed: u64,
    started: Instant,
    started_unix: u64,
    outputs: Vec<String>,
    summary: Value,
}

impl Manifest {
    fn new(command: &str, hash: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            hash: hash.to_string(),
            seed,
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    fn write(&self, path: &Path, config: &Value, params: &Value) -> Result<()> {
        let doc = json!({
            "command": self.command,
            "config_hash": self.hash,
            "seed": self.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "started_unix": self.started_unix,
            "wall_clock_seconds": self.started.elapsed().as_secs_f64(),
            "config": config,
            "params": params,
            "outputs": self.outputs,
            "summary": self.summary,
        });
        write_atomic(path, &(serde_json::to_string_pretty(&doc)? + "\n"))
    }
}

/// Runs `reps` replications in chunks and hands each result to `write`, in
/// replication order, from the calling thread.
fn collect_replications<T, F, W>(reps: u64, simulate: F, mut write: W) -> Result<()>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
    W: FnMut(u64, T) -> Result<()>,
{
    let mut start = 0;
    while start < reps {
        let len = WRITE_CHUNK.min(reps - start);
        let chunk = map_replications(len, |r| simulate(start + r))?;
        for (r, item) in chunk.into_iter().enumerate() {
            write(start + r as u64, item)?;
        }
        start += len;
    }
    Ok(())
}

fn every_grid(t_end: f64, dt: f64, every: usize) -> Result<Vec<f64>> {
    Ok(crate::bundle::TimeGrid::every(t_end, dt, every)?.times())
}

fn rep_name(r: u64, suffix: &str) -> String {
    format!("rep_{r:04}{suffix}.csv")
}

fn cmd_finite(a: &FiniteArgs) -> Result<()> {
    let (model, tree) = load_model(&a.common.model)?;
    let dt = a.common.dt();
    let params = json!({"command": "simulate finite", "n": a.n, "t": a.common.t_end, "dt": dt,
                        "reps": a.output.reps, "every": a.output.every, "jump_log": a.jump_log});
    let hash = config_hash(&tree, &params);
    let grid = every_grid(a.common.t_end, dt, a.output.every)?;
    let base = FiniteSimConfig::new(model, a.n, a.common.t_end)
        .with_dt(dt)
        .with_seed(a.common.seed)
        .with_jump_log(a.jump_log)
        .with_output_grid(grid);
    base.validate()?;
    fs::create_dir_all(&a.output.out)?;
    let mut manifest = Manifest::new("simulate finite", &hash, a.common.seed);
    let header = Header { command: "simulate finite", hash: &hash, seed: a.common.seed, extra: Vec::new() };
    collect_replications(
        a.output.reps,
        |r| simulate_finite(&base.clone().with_replication(r)),
        |r, bundle| {
            let h = header.with("replication", r);
            let name = rep_name(r, "");
            write_atomic(&a.output.out.join(&name), &trajectory_csv(&h, &bundle, "particle"))?;
            manifest.outputs.push(name);
            if a.jump_log {
                let name = rep_name(r, "_jumps");
                write_atomic(&a.output.out.join(&name), &jump_csv(&h, &bundle, false))?;
                manifest.outputs.push(name);
            }
            Ok(())
        },
    )?;
    manifest.write(&a.output.out.join("manifest.json"), &tree, &params)
}

fn cmd_limit(a: &LimitArgs) -> Result<()> {
    let (model, tree) = load_model(&a.common.model)?;
    let dt = a.common.dt();
    let params = json!({"command": "simulate limit", "m": a.m, "t": a.common.t_end, "dt": dt,
                        "reps": a.output.reps, "every": a.output.every, "v_atoms": a.v_atoms,
                        "idio": format!("{:?}", a.idio).to_lowercase()});
    let hash = config_hash(&tree, &params);
    let mut base = LimitSimConfig::new(model, a.m, a.common.t_end)
        .with_dt(dt)
        .with_seed(a.common.seed)
        .with_idio_mode(a.idio.into())
        .with_output_grid(every_grid(a.common.t_end, dt, a.output.every)?);
    base.v_atoms = a.v_atoms;
    base.validate()?;
    fs::create_dir_all(&a.output.out)?;
    let mut manifest = Manifest::new("simulate limit", &hash, a.common.seed);
    let header = Header { command: "simulate limit", hash: &hash, seed: a.common.seed, extra: Vec::new() };
    collect_replications(
        a.output.reps,
        |r| simulate_limit(&base.clone().with_replication(r)),
        |r, bundle| {
            let name = rep_name(r, "");
            write_atomic(&a.output.out.join(&name), &trajectory_csv(&header.with("replication", r), &bundle, "copy"))?;
            manifest.outputs.push(name);
            Ok(())
        },
    )?;
    manifest.write(&a.output.out.join("manifest.json"), &tree, &params)
}

fn cmd_multipop(a: &MultipopArgs) -> Result<()> {
    let tree = load_tree(&a.common.model)?;
    let spec = MultiPopSpec::from_json(&tree, a.n)?;
    let dt = a.common.dt();
    let kind = match a.system {
        SystemKind::Finite => "finite",
        SystemKind::Limit => "limit",
    };
    let params = json!({"command": "simulate multipop", "system": kind, "n": a.n, "t": a.common.t_end,
                        "dt": dt, "reps": a.output.reps, "every": a.output.every, "jump_log": a.jump_log});
    let hash = config_hash(&tree, &params);
    let run = MultiPopRun::new(a.common.t_end, dt, a.common.seed)
        .with_output_grid(every_grid(a.common.t_end, dt, a.output.every)?)
        .with_log(a.jump_log && matches!(a.system, SystemKind::Finite));
    fs::create_dir_all(&a.output.out)?;
    let mut manifest = Manifest::new("simulate multipop", &hash, a.common.seed);
    let header = Header { command: "simulate multipop", hash: &hash, seed: a.common.seed, extra: Vec::new() };
    collect_replications(
        a.output.reps,
        |r| {
            let run = run.clone().with_replication(r);
            match a.system {
                SystemKind::Finite => simulate_multipop_finite(&spec, &run),
                SystemKind::Limit => simulate_multipop_limit(&spec, &run),
            }
        },
        |r, bundles| {
            for (k, bundle) in bundles.iter().enumerate() {
                let h = header.with("replication", r).with("population", k + 1);
                let column = if matches!(a.system, SystemKind::Finite) { "particle" } else { "copy" };
                let name = rep_name(r, &format!("_pop{}", k + 1));
                write_atomic(&a.output.out.join(&name), &trajectory_csv(&h, bundle, column))?;
                manifest.outputs.push(name);
                if run.record_log {
                    let name = rep_name(r, &format!("_pop{}_jumps", k + 1));
                    write_atomic(&a.output.out.join(&name), &jump_csv(&h, bundle, true))?;
                    manifest.outputs.push(name);
                }
            }
            Ok(())
        },
    )?;
    manifest.write(&a.output.out.join("manifest.json"), &tree, &params)
}

fn cmd_picard(a: &PicardArgs) -> Result<()> {
    let (model, tree) = load_model(&a.common.model)?;
    let dt = a.common.dt();
    let params = json!({"command": "picard", "m": a.m, "t": a.common.t_end, "dt": dt, "iters": a.iters,
                        "every": a.every});
    let hash = config_hash(&tree, &params);
    let config = LimitSimConfig::new(model, a.m, a.common.t_end)
        .with_dt(dt)
        .with_seed(a.common.seed)
        .with_output_grid(every_grid(a.common.t_end, dt, a.every)?);
    let report = picard_solve(&config, a.iters)?;
    fs::create_dir_all(&a.out)?;
    let mut manifest = Manifest::new("picard", &hash, a.common.seed);
    let header = Header { command: "picard", hash: &hash, seed: a.common.seed, extra: Vec::new() };
    write_atomic(&a.out.join("picard_states.csv"), &trajectory_csv(&header, &report.bundle, "copy"))?;
    let mut gaps = header.render();
    gaps.push_str("n,t,u\n");
    let keep: std::collections::BTreeSet<usize> = report.bundle.steps.iter().copied().collect();
    for (n, g) in report.gaps.iter().enumerate() {
        for (s, (t, u)) in report.times.iter().zip(g).enumerate() {
            if keep.contains(&s) {
                let _ = writeln!(gaps, "{n},{},{u}", format_time(*t));
            }
        }
    }
    write_atomic(&a.out.join("picard_gaps.csv"), &gaps)?;
    manifest.outputs = vec!["picard_states.csv".into(), "picard_gaps.csv".into()];
    manifest.summary = json!({
        "gaps_at_horizon": report.gaps_at_horizon(),
        "w2_to_direct": report.w2_to_direct,
        "w2_independent_direct": report.w2_independent_direct,
    });
    manifest.write(&a.out.join("manifest.json"), &tree, &params)
}

fn cmd_mgtest(a: &MgtestArgs) -> Result<()> {
    let (model, tree) = load_model(&a.model)?;
    let g = builtin_test_function(&a.g)?;
    let dt = a.dt.unwrap_or(a.t_end * 1e-3);
    let config = LimitSimConfig::new(model.clone(), a.m, a.t_end).with_dt(dt).with_seed(a.seed);
    let (mean, stderr) = martingale_residual(&model, g.as_ref(), a.s, a.t_end, &config, a.reps)?;
    let pass = mean.abs() <= 4.0 * stderr || mean == 0.0;
    println!("g={} mean={mean:e} stderr={stderr:e} {}", a.g, if pass { "pass" } else { "fail" });
    if let Some(out) = &a.out {
        let params = json!({"command": "mgtest", "g": a.g, "s": a.s, "t": a.t_end, "dt": dt, "m": a.m,
                            "reps": a.reps});
        let hash = config_hash(&tree, &params);
        let header = Header { command: "mgtest", hash: &hash, seed: a.seed, extra: Vec::new() };
        let mut s = header.render();
        s.push_str("g,s,t,mean,stderr,reps,pass\n");
        let _ = writeln!(s, "{},{},{},{mean},{stderr},{},{pass}", a.g, format_time(a.s), format_time(a.t_end), a.reps);
        write_atomic(out, &s)?;
    }
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn cmd_convergence(a: &ConvergenceArgs) -> Result<()> {
    let (model, tree) = load_model(&a.common.model)?;
    let dt = a.common.dt();
    let params = json!({"command": "study convergence", "n_list": a.n_list, "m_limit": a.m_limit,
                        "t": a.common.t_end, "dt": dt, "reps": a.reps});
    let hash = config_hash(&tree, &params);
    let rows = convergence_study(&ConvergenceConfig {
        model,
        n_list: a.n_list.clone(),
        m_limit: a.m_limit,
        t_end: a.common.t_end,
        dt,
        reps: a.reps,
        seed: a.common.seed,
        pairing: SeedPairing::Independent,
    })?;
    let header = Header { command: "study convergence", hash: &hash, seed: a.common.seed, extra: Vec::new() };
    let mut s = header.render();
    s.push_str("N,median_w2,iqr,reps,seed\n");
    for r in &rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.n, r.median_w2, r.iqr, r.reps, a.common.seed);
    }
    write_atomic(&a.out, &s)?;
    let mut manifest = Manifest::new("study convergence", &hash, a.common.seed);
    manifest.outputs.push(a.out.display().to_string());
    manifest.write(&manifest_path(&a.out), &tree, &params)
}

fn cmd_covariation(a: &CovariationArgs) -> Result<()> {
    let (model, tree) = load_model(&a.common.model)?;
    let dt = a.common.dt();
    let pair = a.pair;
    let params = json!({"command": "study covariation", "n": a.n, "t": a.common.t_end, "dt": dt,
                        "reps": a.reps, "pair": [pair.0, pair.1]});
    let hash = config_hash(&tree, &params);
    crate::model::sigma_xi_pair(&model)?;
    let base = FiniteSimConfig::new(model.clone(), a.n, a.common.t_end)
        .with_dt(dt)
        .with_seed(a.common.seed)
        .with_jump_log(true);
    let runs = map_replications(a.reps, |r| {
        let bundle = simulate_finite(&base.clone().with_replication(r))?;
        estimate_covariation(&bundle, &model, pair)
    })?;
    let agg = aggregate_covariation(&runs)?;
    let header = Header { command: "study covariation", hash: &hash, seed: a.common.seed, extra: Vec::new() }
        .with("pair", format!("{},{}", pair.0, pair.1));
    let mut s = header.render();
    s.push_str("time,realized,theoretical,stderr,reps\n");
    for k in 0..agg.times.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            format_time(agg.times[k]),
            agg.realized[k],
            agg.theoretical[k],
            agg.stderr[k],
            agg.replications
        );
    }
    write_atomic(&a.out, &s)?;
    let mut manifest = Manifest::new("study covariation", &hash, a.common.seed);
    manifest.outputs.push(a.out.display().to_string());
    manifest.summary = json!({"endpoint_ratio": agg.endpoint_ratio()});
    manifest.write(&manifest_path(&a.out), &tree, &params)
}

fn cmd_moments(a: &MomentsArgs) -> Result<()> {
    let (model, tree) = load_model(&a.common.model)?;
    let dt = a.common.dt();
    let params = json!({"command": "study moments", "n_list": a.n_list, "t": a.common.t_end, "dt": dt,
                        "reps": a.reps});
    let hash = config_hash(&tree, &params);
    let mut groups = Vec::with_capacity(a.n_list.len());
    for &n in &a.n_list {
        let seed = derive_seed(a.common.seed, "moments", n as u64);
        let base = FiniteSimConfig::new(model.clone(), n, a.common.t_end).with_dt(dt).with_seed(seed);
        let bundles = map_replications(a.reps, |r| simulate_finite(&base.clone().with_replication(r)))?;
        groups.push((n, bundles));
    }
    let audit = moment_audit(&groups)?;
    let header = Header { command: "study moments", hash: &hash, seed: a.common.seed, extra: Vec::new() }
        .with("spearman_rho", audit.spearman_rho)
        .with("p_value", audit.p_value)
        .with("passed", audit.passed);
    let mut s = header.render();
    s.push_str("N,estimate,stderr,reps\n");
    for r in &audit.rows {
        let _ = writeln!(s, "{},{},{},{}", r.n, r.estimate, r.stderr, r.reps);
    }
    write_atomic(&a.out, &s)?;
    let mut manifest = Manifest::new("study moments", &hash, a.common.seed);
    manifest.outputs.push(a.out.display().to_string());
    manifest.summary = json!({"spearman_rho": audit.spearman_rho, "p_value": audit.p_value, "passed": audit.passed});
    manifest.write(&manifest_path(&a.out), &tree, &params)
}
