//! Command-line front end: configuration, orchestration and output files.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{run_observed, FlowConfig, FlowObserver, FlowTrace, TraceRow};
use crate::functionals::SliceProfile;
use crate::graphgeom::{closeness, GraphState};
use crate::grid::{GridSpec, SphereGrid};
use crate::initial::{build_initial, random_graph, InitialSpec, RandomSpec};
use crate::monitors::{check_inequalities, run_verdicts, Floors, Status, Verdict};
use crate::warp::{SpaceSpec, StaticityReport, WarpedSpace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "warpflow", version, about = "Curvature flow of radial graphs in warped products")]
pub struct Cli {
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the flow and check it.
    Simulate { config: PathBuf },
    /// Staticity and admissibility of the ambient space.
    VerifySpace { config: PathBuf },
    /// Tabulate slice profiles.
    Profiles { config: PathBuf },
    /// Inequality gaps over a seeded random ensemble.
    Inequalities { config: PathBuf },
    /// Several simulations from merge patches of one config.
    Sweep { config: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSpec {
    /// Exponents of the monitored `V_φ^α`.
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub floors: Floors,
}

fn default_alphas() -> Vec<f64> {
    vec![0.0, 2.0]
}

impl Default for MonitorSpec {
    fn default() -> Self {
        MonitorSpec {
            alphas: default_alphas(),
            floors: Floors::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default = "default_profile_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_profile_alphas() -> Vec<f64> {
    vec![0.0]
}

fn default_samples() -> usize {
    201
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec {
            alphas: default_profile_alphas(),
            samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalitySpec {
    pub count: usize,
    #[serde(default = "default_inequality_alphas")]
    pub alphas: Vec<f64>,
    pub random: RandomSpec,
    /// Slice-ness threshold for equality detection.
    #[serde(default = "default_equality_tol")]
    pub equality_tol: f64,
}

fn default_inequality_alphas() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}

fn default_equality_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// JSON merge patches applied to the rest of the config.
    pub runs: Vec<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub space: SpaceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    #[serde(default)]
    pub monitors: MonitorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<ProfileSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inequalities: Option<InequalitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn grid_spec(&self) -> Result<&GridSpec> {
        self.grid
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a grid section".into()))
    }

    fn flow_config(&self) -> Result<&FlowConfig> {
        self.flow
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a flow section".into()))
    }

    /// Relative paths inside the config resolve against `base`.
    fn rebase(&mut self, base: &Path) {
        if let Some(p) = &self.initial.snapshot {
            if p.is_relative() {
                self.initial.snapshot = Some(base.join(p));
            }
        }
        if let crate::warp::Family::Custom { path } = &mut self.space.family {
            let p = PathBuf::from(&*path);
            if p.is_relative() {
                *path = base.join(p).display().to_string();
            }
        }
    }
}

/// A failure carrying its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

impl Failure {
    fn config(error: Error) -> Self {
        Failure { code: EXIT_CONFIG, error }
    }

    fn abort(error: Error) -> Self {
        Failure { code: EXIT_ABORT, error }
    }
}

struct Context {
    out: PathBuf,
    seed: u64,
    quiet: bool,
}

impl Context {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

/// Parses arguments, runs the command and returns the exit status.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}

fn load_config(path: &Path) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(Failure::config)?;
    cfg.rebase(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

fn context(cli: &Cli, cfg: &RunConfig) -> Context {
    Context {
        out: cli
            .out
            .clone()
            .or_else(|| cfg.output.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        seed: cli.seed.unwrap_or(cfg.seed),
        quiet: cli.quiet,
    }
}

fn dispatch(cli: &Cli) -> std::result::Result<i32, Failure> {
    let path = match &cli.command {
        Command::Simulate { config }
        | Command::VerifySpace { config }
        | Command::Profiles { config }
        | Command::Inequalities { config }
        | Command::Sweep { config } => config,
    };
    let cfg = load_config(path)?;
    let ctx = context(cli, &cfg);
    match &cli.command {
        Command::Simulate { .. } => simulate(&cfg, &ctx),
        Command::VerifySpace { .. } => verify_space(&cfg, &ctx),
        Command::Profiles { .. } => profiles(&cfg, &ctx),
        Command::Inequalities { .. } => inequalities(&cfg, &ctx),
        Command::Sweep { .. } => sweep(&cfg, &ctx),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Fixed 17-significant-digit float text.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::State(format!("writing {}: {other:?}", path.display())),
    }
}

pub fn trace_header(alphas: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = ["t", "dt", "max_grad_sq", "V_phi"].iter().map(|s| s.to_string()).collect();
    h.extend(alphas.iter().map(|a| format!("V_phi_alpha_{a}")));
    h.extend(
        ["A0_phi", "A1_phi", "min_smin", "max_speed", "r_min_node", "r_max_node"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

fn trace_record(row: &TraceRow) -> Vec<String> {
    let mut v = vec![row.t, row.dt, row.max_grad_sq, row.v_phi];
    v.extend(&row.v_alpha);
    v.extend([row.a0, row.a1, row.min_smin, row.max_speed, row.r_min_node, row.r_max_node]);
    v.into_iter().map(fmt_float).collect()
}

/// Streams rows to `trace.csv` and snapshots to `gamma_<step>.csv`.
struct FileObserver<'a> {
    dir: PathBuf,
    grid: &'a SphereGrid,
    trace: csv::Writer<BufWriter<File>>,
}

impl<'a> FileObserver<'a> {
    fn new(dir: &Path, grid: &'a SphereGrid, alphas: &[f64]) -> Result<Self> {
        let path = dir.join("trace.csv");
        let mut trace = csv_writer(&path)?;
        trace.write_record(trace_header(alphas)).map_err(|e| csv_err(&path, e))?;
        Ok(FileObserver {
            dir: dir.to_path_buf(),
            grid,
            trace,
        })
    }

    fn finish(mut self) -> Result<()> {
        let path = self.dir.join("trace.csv");
        self.trace.flush().map_err(|e| Error::io(&path, e))
    }
}

impl FlowObserver for FileObserver<'_> {
    fn on_row(&mut self, row: &TraceRow) -> Result<()> {
        let path = self.dir.join("trace.csv");
        self.trace.write_record(trace_record(row)).map_err(|e| csv_err(&path, e))
    }

    fn on_snapshot(&mut self, step: usize, state: &GraphState) -> Result<()> {
        write_snapshot(&self.dir.join(format!("gamma_{step}.csv")), self.grid, state)
    }
}

pub fn write_snapshot(path: &Path, grid: &SphereGrid, state: &GraphState) -> Result<()> {
    let mut w = csv_writer(path)?;
    let names = grid.coordinate_names();
    let mut header: Vec<&str> = names.to_vec();
    header.push("gamma");
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (c, g) in grid.coords().iter().zip(&state.gamma) {
        let mut rec: Vec<String> = c[..names.len()].iter().map(|x| fmt_float(*x)).collect();
        rec.push(fmt_float(*g));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub r_infinity: Option<f64>,
    pub r_star: Option<f64>,
    pub measured_decay_rate: Option<f64>,
    pub beta_hat: f64,
    pub converged: bool,
}

impl Summary {
    pub fn of(trace: &FlowTrace) -> Self {
        Summary {
            r_infinity: trace.r_infinity,
            r_star: trace.r_star,
            measured_decay_rate: trace.measured_decay_rate,
            beta_hat: trace.beta_hat,
            converged: trace.converged,
        }
    }
}

/// Builds the space, grid and initial state, failing with configuration errors.
pub fn prepare(cfg: &RunConfig, seed: u64) -> Result<(WarpedSpace, SphereGrid, GraphState)> {
    let space = WarpedSpace::from_spec(&cfg.space)?;
    let grid = SphereGrid::from_spec(cfg.grid_spec()?, space.n())?;
    let state = build_initial(&space, &grid, &cfg.initial, seed).map_err(|e| match e {
        e @ (Error::Config(_) | Error::Parse { .. } | Error::Io { .. }) => e,
        other => Error::Config(other.to_string()),
    })?;
    Ok((space, grid, state))
}

fn simulate(cfg: &RunConfig, ctx: &Context) -> std::result::Result<i32, Failure> {
    let flow = cfg.flow_config().map_err(Failure::config)?;
    flow.validate().map_err(Failure::config)?;
    if cfg.monitors.alphas.iter().any(|a| !a.is_finite()) {
        return Err(Failure::config(Error::Config("alphas must be finite".into())));
    }
    let (space, grid, state) = prepare(cfg, ctx.seed).map_err(Failure::config)?;
    let eps = closeness(&grid, &state).map_err(Failure::config)?;
    if !eps.is_finite() {
        return Err(Failure::config(Error::Config("initial closeness is not finite".into())));
    }
    create_dir(&ctx.out).map_err(Failure::abort)?;
    write_json(&ctx.out.join("config.json"), cfg).map_err(Failure::abort)?;
    let mut obs = FileObserver::new(&ctx.out, &grid, &cfg.monitors.alphas).map_err(Failure::abort)?;
    let trace = run_observed(&space, &grid, &state, flow, &cfg.monitors.alphas, &mut obs).map_err(Failure::abort)?;
    obs.finish().map_err(Failure::abort)?;
    let verdicts = run_verdicts(&trace, &space, &grid, &cfg.monitors.floors).map_err(Failure::abort)?;
    write_json(&ctx.out.join("verdicts.json"), &verdicts).map_err(Failure::abort)?;
    write_json(&ctx.out.join("summary.json"), &Summary::of(&trace)).map_err(Failure::abort)?;
    report(ctx, &verdicts);
    Ok(exit_for(&verdicts))
}

fn exit_for(verdicts: &[Verdict]) -> i32 {
    if verdicts.iter().any(Verdict::is_failure) {
        EXIT_VERDICT
    } else {
        EXIT_OK
    }
}

fn report(ctx: &Context, verdicts: &[Verdict]) {
    for v in verdicts {
        let status = match v.status {
            Status::Passed => "pass",
            Status::Failed => "FAIL",
            Status::NotApplicable => "n/a",
            Status::Inconclusive => "inconclusive",
        };
        let worst = v.worst_violation.map_or("-".to_string(), |w| format!("{w:.3e}"));
        ctx.say(format!("{status:>12}  {:<32} worst {worst} tol {:.3e}", v.name, v.tolerance));
    }
}

#[derive(Debug, Clone, Serialize)]
struct SpaceReport {
    n: usize,
    r_min: f64,
    r_max: f64,
    #[serde(flatten)]
    staticity: StaticityReport,
}

fn verify_space(cfg: &RunConfig, ctx: &Context) -> std::result::Result<i32, Failure> {
    let space = WarpedSpace::from_spec(&cfg.space).map_err(Failure::config)?;
    let rep = space.staticity_report();
    create_dir(&ctx.out).map_err(Failure::abort)?;
    let doc = SpaceReport {
        n: space.n(),
        r_min: space.r_min(),
        r_max: space.r_max(),
        staticity: rep.clone(),
    };
    write_json(&ctx.out.join("space_report.json"), &doc).map_err(Failure::abort)?;
    let verdicts = vec![
        Verdict::judge("static", rep.max_residual, rep.tolerance, None),
        Verdict::judge("admissible", if rep.admissible { 0.0 } else { 1.0 }, 0.0, None),
    ];
    ctx.say(format!(
        "static = {}, substatic = {}, admissible = {}, C0 = {:.12e}",
        rep.is_static, rep.is_substatic, rep.admissible, rep.c0
    ));
    report(ctx, &verdicts);
    Ok(exit_for(&verdicts))
}

/// Rows `r, V_phi, V_phi_alpha, A0_phi, A1_phi` on a uniform radius grid.
pub fn profile_rows(space: &WarpedSpace, alpha: f64, samples: usize) -> Result<Vec<[f64; 5]>> {
    if samples < 2 {
        return Err(Error::Config("profiles need at least two samples".into()));
    }
    let prof = SliceProfile::new(space, alpha)?;
    let (lo, hi) = (space.r_min(), space.r_max());
    (0..samples)
        .map(|k| {
            let r = if k + 1 == samples {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (samples - 1) as f64
            };
            Ok([r, prof.volume_at(r)?, prof.volume_alpha_at(r)?, prof.a0_at(r)?, prof.a1_at(r)?])
        })
        .collect()
}

fn profiles(cfg: &RunConfig, ctx: &Context) -> std::result::Result<i32, Failure> {
    let space = WarpedSpace::from_spec(&cfg.space).map_err(Failure::config)?;
    let spec = cfg.profiles.clone().unwrap_or_default();
    create_dir(&ctx.out).map_err(Failure::abort)?;
    for &alpha in &spec.alphas {
        let rows = profile_rows(&space, alpha, spec.samples).map_err(|e| match e {
            e @ Error::Config(_) => Failure::config(e),
            other => Failure::abort(other),
        })?;
        let path = ctx.out.join(format!("profiles_alpha_{alpha}.csv"));
        let mut w = csv_writer(&path).map_err(Failure::abort)?;
        w.write_record(["r", "V_phi", "V_phi_alpha", "A0_phi", "A1_phi"])
            .map_err(|e| Failure::abort(csv_err(&path, e)))?;
        for row in &rows {
            w.write_record(row.iter().map(|x| fmt_float(*x)))
                .map_err(|e| Failure::abort(csv_err(&path, e)))?;
        }
        w.flush().map_err(|e| Failure::abort(Error::io(&path, e)))?;
        ctx.say(format!("wrote {}", path.display()));
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityRecord {
    pub index: usize,
    pub draws: usize,
    pub closeness: f64,
    pub verdicts: Vec<Verdict>,
}

/// Checks every member of the seeded ensemble.
pub fn inequality_batch(cfg: &RunConfig, seed: u64) -> Result<Vec<InequalityRecord>> {
    let spec = cfg
        .inequalities
        .as_ref()
        .ok_or_else(|| Error::Config("inequalities command needs an inequalities section".into()))?;
    let space = WarpedSpace::from_spec(&cfg.space)?;
    let grid = SphereGrid::from_spec(cfg.grid_spec()?, space.n())?;
    let profiles: Vec<SliceProfile> = spec
        .alphas
        .iter()
        .map(|&a| SliceProfile::new(&space, a))
        .collect::<Result<_>>()?;
    (0..spec.count)
        .into_par_iter()
        .map(|k| {
            let (state, draws) = random_graph(&space, &grid, cfg.initial.r_base, &spec.random, seed, k as u64)?;
            let verdicts = check_inequalities(&space, &grid, &state, &profiles, spec.equality_tol, &cfg.monitors.floors)?;
            Ok(InequalityRecord {
                index: k,
                draws,
                closeness: closeness(&grid, &state)?,
                verdicts,
            })
        })
        .collect()
}

fn inequalities(cfg: &RunConfig, ctx: &Context) -> std::result::Result<i32, Failure> {
    let records = inequality_batch(cfg, ctx.seed).map_err(|e| match e {
        e @ (Error::Config(_) | Error::Range { .. } | Error::Domain { .. }) => Failure::config(e),
        other => Failure::abort(other),
    })?;
    create_dir(&ctx.out).map_err(Failure::abort)?;
    write_json(&ctx.out.join("inequalities.json"), &records).map_err(Failure::abort)?;
    let all: Vec<Verdict> = records.iter().flat_map(|r| r.verdicts.clone()).collect();
    let failed = all.iter().filter(|v| v.is_failure()).count();
    let checked = all.iter().filter(|v| v.status != Status::NotApplicable).count();
    ctx.say(format!("{} graphs, {checked} applicable checks, {failed} failed", records.len()));
    Ok(exit_for(&all))
}

/// JSON merge patch: objects merge recursively, `null` deletes, anything else replaces.
pub fn merge_patch(doc: &mut serde_json::Value, patch: &serde_json::Value) {
    use serde_json::Value;
    let Value::Object(entries) = patch else {
        *doc = patch.clone();
        return;
    };
    if !doc.is_object() {
        *doc = Value::Object(Default::default());
    }
    let target = doc.as_object_mut().expect("object");
    for (k, v) in entries {
        if v.is_null() {
            target.remove(k);
        } else {
            merge_patch(target.entry(k.clone()).or_insert(Value::Null), v);
        }
    }
}

/// Base config with each patch applied, as independent run configs.
pub fn sweep_configs(cfg: &RunConfig) -> Result<Vec<RunConfig>> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep command needs a sweep section".into()))?;
    let mut base = cfg.clone();
    base.sweep = None;
    let base = serde_json::to_value(&base)?;
    spec.runs
        .iter()
        .map(|patch| {
            let mut doc = base.clone();
            merge_patch(&mut doc, patch);
            serde_json::from_value(doc).map_err(|e| Error::Config(format!("sweep patch {patch}: {e}")))
        })
        .collect()
}

fn sweep(cfg: &RunConfig, ctx: &Context) -> std::result::Result<i32, Failure> {
    let runs = sweep_configs(cfg).map_err(Failure::config)?;
    let workers = cfg.sweep.as_ref().and_then(|s| s.workers);
    create_dir(&ctx.out).map_err(Failure::abort)?;
    let job = |(k, run): (usize, &RunConfig)| {
        let sub = Context {
            out: ctx.out.join(format!("run_{k}")),
            seed: ctx.seed,
            quiet: true,
        };
        match simulate(run, &sub) {
            Ok(code) => (k, code, None),
            Err(f) => (k, f.code, Some(f.error.to_string())),
        }
    };
    let results: Vec<(usize, i32, Option<String>)> = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Failure::config(Error::Config(e.to_string())))?
            .install(|| runs.par_iter().enumerate().map(job).collect()),
        None => runs.par_iter().enumerate().map(job).collect(),
    };
    #[derive(Serialize)]
    struct Entry {
        run: usize,
        exit_code: i32,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    }
    let entries: Vec<Entry> = results
        .iter()
        .map(|(k, c, e)| Entry {
            run: *k,
            exit_code: *c,
            error: e.clone(),
        })
        .collect();
    write_json(&ctx.out.join("sweep.json"), &entries).map_err(Failure::abort)?;
    for e in &entries {
        ctx.say(format!("run_{}: exit {}", e.run, e.exit_code));
    }
    Ok(entries.iter().map(|e| e.exit_code).max().unwrap_or(EXIT_OK))
}
