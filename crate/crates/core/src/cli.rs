//! Config-file driven commands behind the `rd-optctl` binary.
//!
//! A config is a flat text file of `key = value` lines; `#` starts a comment.
//! Relative paths are resolved against the directory holding the config.
//!
//! | key | default |
//! |-----|---------|
//! | `dim` | `1` |
//! | `mesh.n_elements`, `mesh.a`, `mesh.b` | `160`, `0`, `1` (1D only) |
//! | `mesh.image`, `mesh.threshold`, `mesh.spacing` | required for 2D, `0`, `1` |
//! | `model.rho`, `model.diffusion` | `0.5`, `0.1` |
//! | `time.T`, `time.n_steps` | `10`, `1000` |
//! | `objective.alpha` | `100`; a comma list runs a sweep |
//! | `opt.method` | `linear_combination` or `gradient_descent` |
//! | `opt.beta`, `opt.gamma`, `opt.tol`, `opt.max_iter` | `0.5`, `0.2/α`, `1e-8`, `500` |
//! | `opt.c0` | `2.512566e-2`, or a `t,C` CSV path |
//! | `init.kind` | `cosine` (1D), `image` (2D), or `constant:<v>` |
//! | `ingest.normalize` | `max` or `fixed:<scale>` |
//! | `sim.control` | `0`, or a `t,C` CSV path |
//! | `export.out_dir`, `export.snapshot_times`, `export.formats` | `out`, `0,T/4,T/2,T`, `csv,vtk` |
//!
//! The 1D defaults for `model.*` and `time.*` are choices of this crate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use crate::dynamics::{solve_state, ControlTrajectory, ModelParams, Problem, TimeGrid};
use crate::error::{Error, Result};
use crate::export::{
    export_burden_timeseries, export_control_csv, export_field_vtk, export_mesh_vtk, export_snapshots,
    format_f64, read_control_csv, write_control_csv, write_residual_csv, ExportSpec,
};
use crate::fem::{DiffusionField, FeField};
use crate::ingest::{build_initial_condition, IngestConfig, IngestSummary, Normalize};
use crate::mesh::{build_interval_mesh, GridImage, Mesh};
use crate::optimize::{self, evaluate, Evaluation, Method, OptimizeConfig, OptimizeReport, BENCHMARK_C0};
use crate::presets;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_DOMINANCE: i32 = 5;

/// Exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::SolverFailure { .. } | Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Optimize,
    Compare,
    Ingest,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Interval { n_elements: usize, a: f64, b: f64 },
    Image { path: PathBuf, threshold: f64, spacing: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitKind {
    Cosine,
    Image,
    Constant(f64),
}

/// A constant control or a `t,C` file.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSource {
    Constant(f64),
    File(PathBuf),
}

impl ControlSource {
    pub fn load(&self, grid: &TimeGrid) -> Result<ControlTrajectory> {
        match self {
            ControlSource::Constant(v) => ControlTrajectory::constant(grid, *v),
            ControlSource::File(path) => {
                let (times, control) = read_control_csv(path)?;
                if control.len() != grid.n_nodes() {
                    return Err(Error::Config(format!(
                        "{} holds {} control values, the time grid has {} nodes",
                        path.display(),
                        control.len(),
                        grid.n_nodes()
                    )));
                }
                let scale = grid.final_time().max(1.0);
                if let Some(k) = (0..times.len()).find(|&k| (times[k] - grid.time(k)).abs() > 1e-9 * scale) {
                    return Err(Error::Config(format!(
                        "{} row {} has t = {}, expected {}",
                        path.display(),
                        k + 1,
                        times[k],
                        grid.time(k)
                    )));
                }
                Ok(control)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub mesh: MeshSource,
    pub rho: f64,
    pub diffusion: f64,
    pub final_time: f64,
    pub n_steps: usize,
    pub alphas: Vec<f64>,
    pub method: Method,
    pub beta: f64,
    /// `None` selects `0.2/α`.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub c0: ControlSource,
    pub init: InitKind,
    pub normalize: Normalize,
    pub sim_control: ControlSource,
    pub export: ExportSpec,
}

/// Key-value pairs that remember which keys were read.
struct Entries {
    map: BTreeMap<String, String>,
    base: PathBuf,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("`{key}` must be a number, got {v:?}"))),
        }
    }

    fn path(&self, value: &str) -> PathBuf {
        let p = Path::new(value);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn existing_file(&self, key: &str, value: &str) -> Result<PathBuf> {
        let p = self.path(value);
        if !p.is_file() {
            return Err(Error::Config(format!("`{key}`: file not found: {}", p.display())));
        }
        Ok(p)
    }

    fn control(&mut self, key: &str, default: f64) -> Result<ControlSource> {
        match self.take(key) {
            None => Ok(ControlSource::Constant(default)),
            Some(v) => match v.parse::<f64>() {
                Ok(c) if c.is_finite() && c >= 0.0 => Ok(ControlSource::Constant(c)),
                Ok(c) => Err(Error::Config(format!("`{key}` must be >= 0, got {c}"))),
                Err(_) => Ok(ControlSource::File(self.existing_file(key, &v)?)),
            },
        }
    }
}

fn number_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("`{key}` entry {s:?} is not a number")))
        })
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Self::parse(&text, &base)
    }

    /// Parses config text; relative paths are taken from `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.is_empty() || v.is_empty() {
                return Err(Error::Config(format!("line {}: empty key or value", i + 1)));
            }
            if map.insert(k.clone(), v).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        let mut e = Entries {
            map,
            base: base.to_path_buf(),
        };

        let dim: usize = e.number("dim", 1)?;
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("`dim` must be 1 or 2, got {dim}")));
        }
        let image = e.take("mesh.image");
        let interval_keys = ["mesh.n_elements", "mesh.a", "mesh.b"];
        let image_keys = ["mesh.threshold", "mesh.spacing"];
        let mesh = match image {
            Some(img) => {
                if let Some(k) = interval_keys.iter().find(|k| e.map.contains_key(**k)) {
                    return Err(Error::Config(format!("`{k}` conflicts with `mesh.image`")));
                }
                if dim != 2 {
                    return Err(Error::Config("`mesh.image` needs `dim = 2`".into()));
                }
                MeshSource::Image {
                    path: e.existing_file("mesh.image", &img)?,
                    threshold: e.number("mesh.threshold", 0.0)?,
                    spacing: e.number("mesh.spacing", 1.0)?,
                }
            }
            None => {
                if dim == 2 {
                    return Err(Error::Config("`dim = 2` needs `mesh.image`".into()));
                }
                if let Some(k) = image_keys.iter().find(|k| e.map.contains_key(**k)) {
                    return Err(Error::Config(format!("`{k}` only applies with `mesh.image`")));
                }
                MeshSource::Interval {
                    n_elements: e.number("mesh.n_elements", presets::N_ELEMENTS)?,
                    a: e.number("mesh.a", 0.0)?,
                    b: e.number("mesh.b", 1.0)?,
                }
            }
        };

        let rho = e.number("model.rho", presets::RHO)?;
        let diffusion = e.number("model.diffusion", presets::DIFFUSION)?;
        let final_time = e.number("time.T", presets::FINAL_TIME)?;
        let n_steps = e.number("time.n_steps", presets::N_STEPS)?;
        let alphas = match e.take("objective.alpha") {
            None => vec![100.0],
            Some(v) => number_list("objective.alpha", &v)?,
        };
        let method = match e.take("opt.method") {
            None => Method::LinearCombination,
            Some(v) => v.parse().map_err(|_| {
                Error::Config(format!(
                    "`opt.method` must be linear_combination or gradient_descent, got {v:?}"
                ))
            })?,
        };
        let beta = e.number("opt.beta", optimize::DEFAULT_BETA)?;
        let gamma = match e.take("opt.gamma") {
            None => None,
            Some(v) => Some(
                v.parse()
                    .map_err(|_| Error::Config(format!("`opt.gamma` must be a number, got {v:?}")))?,
            ),
        };
        let tol = e.number("opt.tol", optimize::DEFAULT_TOL)?;
        let max_iter = e.number("opt.max_iter", optimize::DEFAULT_MAX_ITER)?;
        let c0 = e.control("opt.c0", BENCHMARK_C0)?;
        let sim_control = e.control("sim.control", 0.0)?;

        let init = match e.take("init.kind") {
            None if dim == 1 => InitKind::Cosine,
            None => InitKind::Image,
            Some(v) => match v.as_str() {
                "cosine" => InitKind::Cosine,
                "image" => InitKind::Image,
                other => match other.strip_prefix("constant:").map(|s| s.trim().parse::<f64>()) {
                    Some(Ok(c)) => InitKind::Constant(c),
                    _ => {
                        return Err(Error::Config(format!(
                            "`init.kind` must be cosine, image or constant:<v>, got {v:?}"
                        )))
                    }
                },
            },
        };
        match (&init, &mesh) {
            (InitKind::Cosine, MeshSource::Image { .. }) => {
                return Err(Error::Config("`init.kind = cosine` needs a 1D interval mesh".into()))
            }
            (InitKind::Image, MeshSource::Interval { .. }) => {
                return Err(Error::Config("`init.kind = image` needs `mesh.image`".into()))
            }
            _ => {}
        }
        let normalize = match e.take("ingest.normalize") {
            None => Normalize::Max,
            Some(v) => v.parse()?,
        };

        let out_dir = e.take("export.out_dir").unwrap_or_else(|| "out".into());
        let mut export = ExportSpec::new(e.path(&out_dir));
        if let Some(v) = e.take("export.snapshot_times") {
            export.snapshot_times = Some(number_list("export.snapshot_times", &v)?);
        }
        if let Some(v) = e.take("export.formats") {
            export.formats = v.split(',').map(str::parse).collect::<Result<_>>()?;
        }

        if let Some(k) = e.map.keys().next() {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        Ok(RunConfig {
            dim,
            mesh,
            rho,
            diffusion,
            final_time,
            n_steps,
            alphas,
            method,
            beta,
            gamma,
            tol,
            max_iter,
            c0,
            init,
            normalize,
            sim_control,
            export,
        })
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        if self.n_steps == 0 {
            return Err(Error::Config("`time.n_steps` must be positive".into()));
        }
        TimeGrid::new(self.final_time, self.n_steps)
    }

    fn ingest_config(&self, threshold: f64) -> IngestConfig {
        IngestConfig {
            threshold,
            normalize: self.normalize,
        }
    }

    /// Builds the mesh and initial state.
    pub fn initial_condition(&self) -> Result<(Mesh, FeField)> {
        match &self.mesh {
            MeshSource::Interval { n_elements, a, b } => {
                let mesh = build_interval_mesh(*n_elements, *a, *b)?;
                let u0 = match self.init {
                    InitKind::Cosine => FeField::interpolate(&mesh, |p| {
                        presets::cosine_profile((p[0] - a) / (b - a)).clamp(0.0, 1.0)
                    })?,
                    InitKind::Constant(c) => FeField::constant(mesh.n_nodes(), c),
                    InitKind::Image => unreachable!("rejected when parsing"),
                };
                Ok((mesh, u0))
            }
            MeshSource::Image {
                path,
                threshold,
                spacing,
            } => {
                let image = GridImage::read(path)?.respaced(*spacing)?;
                let (mesh, u0) = build_initial_condition(&image, &self.ingest_config(*threshold))?;
                let u0 = match self.init {
                    InitKind::Constant(c) => FeField::constant(mesh.n_nodes(), c),
                    _ => u0,
                };
                Ok((mesh, u0))
            }
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let (mesh, u0) = self.initial_condition()?;
        let params = ModelParams::new(self.rho, DiffusionField::uniform(self.diffusion)?)?;
        Problem::new(mesh, params, self.time_grid()?, u0)
    }

    pub fn optimize_config(&self, problem: &Problem, alpha: f64) -> Result<OptimizeConfig> {
        let mut cfg = OptimizeConfig::new(alpha, self.method, self.c0.load(problem.grid())?);
        cfg.beta = self.beta;
        if let Some(g) = self.gamma {
            cfg.gamma = g;
        }
        cfg.tol = self.tol;
        cfg.max_iter = self.max_iter;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    /// Worker threads for α sweeps; `None` lets the pool decide.
    pub jobs: Option<usize>,
}

/// Loads `config_path` and runs `command`, returning the exit code.
pub fn run(command: Command, config_path: &Path, overrides: &Overrides) -> i32 {
    let result = RunConfig::load(config_path).and_then(|mut cfg| {
        if let Some(out) = &overrides.out_dir {
            cfg.export.out_dir = out.clone();
        }
        dispatch(command, &cfg, overrides.jobs)
    });
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn dispatch(command: Command, cfg: &RunConfig, jobs: Option<usize>) -> Result<i32> {
    fs::create_dir_all(&cfg.export.out_dir).map_err(|e| Error::io(&cfg.export.out_dir, e))?;
    match command {
        Command::Simulate => cmd_simulate(cfg),
        Command::Ingest => cmd_ingest(cfg),
        Command::Optimize | Command::Compare => {
            let compare = command == Command::Compare;
            if cfg.alphas.len() == 1 {
                return if compare {
                    cmd_compare(cfg, cfg.alphas[0], &cfg.export)
                } else {
                    cmd_optimize(cfg, cfg.alphas[0], &cfg.export)
                };
            }
            sweep(cfg, compare, jobs)
        }
    }
}

/// Runs one optimization per α, each writing into `alpha_<α>/`.
fn sweep(cfg: &RunConfig, compare: bool, jobs: Option<usize>) -> Result<i32> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<i32>> = pool.install(|| {
        cfg.alphas
            .par_iter()
            .map(|&alpha| {
                let mut spec = cfg.export.clone();
                spec.out_dir = cfg.export.out_dir.join(format!("alpha_{}", format_f64(alpha)));
                fs::create_dir_all(&spec.out_dir).map_err(|e| Error::io(&spec.out_dir, e))?;
                if compare {
                    cmd_compare(cfg, alpha, &spec)
                } else {
                    cmd_optimize(cfg, alpha, &spec)
                }
            })
            .collect()
    });
    let mut worst = EXIT_OK;
    for (alpha, r) in cfg.alphas.iter().zip(results) {
        let code = match r {
            Ok(code) => code,
            Err(err) => {
                eprintln!("error (alpha = {alpha}): {err}");
                exit_code(&err)
            }
        };
        worst = worst.max(code);
    }
    Ok(worst)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(spec: &ExportSpec, summary: &str) -> Result<()> {
    print!("{summary}");
    write_text(&spec.path("summary.txt"), summary)
}

/// Forward solve under `sim.control`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<i32> {
    let problem = cfg.problem()?;
    let control = cfg.sim_control.load(problem.grid())?;
    let state = solve_state(&problem, &control)?;
    let spec = &cfg.export;
    write_control_csv(problem.grid(), &control, &spec.path("control.csv"))?;
    export_burden_timeseries(problem.discretization(), &state, &spec.path("burden.csv"))?;
    export_snapshots(problem.mesh(), &state, spec, "u")?;
    let burden = problem.discretization().integral(state.last().values());
    let (lo, hi) = state.bounds();
    let mut s = String::new();
    let _ = writeln!(s, "burden(T) = {}", format_f64(burden));
    let _ = writeln!(s, "u.min = {}", format_f64(lo));
    let _ = writeln!(s, "u.max = {}", format_f64(hi));
    emit(spec, &s)?;
    Ok(EXIT_OK)
}

struct OptimizeOutcome {
    problem: Problem,
    report: OptimizeReport,
    eval: Evaluation,
}

fn optimize_and_export(cfg: &RunConfig, alpha: f64, spec: &ExportSpec) -> Result<OptimizeOutcome> {
    let problem = cfg.problem()?;
    let ocfg = cfg.optimize_config(&problem, alpha)?;
    info!("optimizing with {} at alpha = {alpha}", ocfg.method);
    let report = optimize::run(&problem, &ocfg)?;
    let eval = evaluate(&problem, &report.final_control, alpha)?;
    let grid = problem.grid();
    export_control_csv(grid, &report, &spec.path("control.csv"))?;
    export_burden_timeseries(problem.discretization(), &eval.state, &spec.path("burden.csv"))?;
    write_residual_csv(grid, &eval.residual, &spec.path("residual.csv"))?;
    export_snapshots(problem.mesh(), &eval.state, spec, "u")?;
    Ok(OptimizeOutcome { problem, report, eval })
}

fn optimize_summary(alpha: f64, out: &OptimizeOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "alpha = {}", format_f64(alpha));
    let _ = writeln!(s, "method = {}", out.report.method);
    let _ = writeln!(s, "converged = {}", out.report.converged);
    let _ = writeln!(s, "iterations = {}", out.report.iterations);
    let _ = writeln!(s, "J = {}", format_f64(out.eval.objective));
    let _ = writeln!(s, "residual_norm = {}", format_f64(out.eval.residual.norm));
    s
}

/// Runs the configured optimizer at `alpha`.
pub fn cmd_optimize(cfg: &RunConfig, alpha: f64, spec: &ExportSpec) -> Result<i32> {
    let out = optimize_and_export(cfg, alpha, spec)?;
    emit(spec, &optimize_summary(alpha, &out))?;
    Ok(if out.report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

/// Optimizes, then compares against the constant dose with the same time
/// average.
pub fn cmd_compare(cfg: &RunConfig, alpha: f64, spec: &ExportSpec) -> Result<i32> {
    let out = optimize_and_export(cfg, alpha, spec)?;
    let grid = *out.problem.grid();
    let mean = grid.integrate(out.report.final_control.values()) / grid.final_time();
    let constant = ControlTrajectory::constant(&grid, mean)?;
    let base = evaluate(&out.problem, &constant, alpha)?;
    write_control_csv(&grid, &constant, &spec.path("control_constant.csv"))?;
    export_burden_timeseries(out.problem.discretization(), &base.state, &spec.path("burden_constant.csv"))?;
    write_residual_csv(&grid, &base.residual, &spec.path("residual_constant.csv"))?;

    let mut s = optimize_summary(alpha, &out);
    let _ = writeln!(s, "C_const = {}", format_f64(mean));
    let _ = writeln!(s, "J(C*) = {}", format_f64(out.eval.objective));
    let _ = writeln!(s, "J(C_const) = {}", format_f64(base.objective));
    let _ = writeln!(s, "residual_norm(C_const) = {}", format_f64(base.residual.norm));
    emit(spec, &s)?;
    if !out.report.converged {
        return Ok(EXIT_NOT_CONVERGED);
    }
    if out.eval.objective > base.objective {
        eprintln!(
            "error: optimized objective {} exceeds constant-dose objective {}",
            out.eval.objective, base.objective
        );
        return Ok(EXIT_DOMINANCE);
    }
    Ok(EXIT_OK)
}

/// Writes the generated mesh, the initial state and a summary.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<i32> {
    if !matches!(cfg.mesh, MeshSource::Image { .. }) {
        return Err(Error::Config("`ingest` needs `mesh.image`".into()));
    }
    let (mesh, u0) = cfg.initial_condition()?;
    let spec = &cfg.export;
    export_mesh_vtk(&mesh, &spec.path("mesh.vtk"))?;
    export_field_vtk(&mesh, &u0, &spec.path("u0.vtk"))?;
    let summary = IngestSummary::new(&mesh, &u0)?;
    emit(spec, &summary.to_string())?;
    Ok(EXIT_OK)
}
