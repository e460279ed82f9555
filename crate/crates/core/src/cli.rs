//! Batch front end: run manifests, solver dispatch and CSV/JSON reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::adapt::{adaptive_loop, AdaptReport};
use crate::config::{parse_config, BenchMethod, ConfigError, RunConfig};
use crate::driver::{
    baseline_multilevel, linear_reference, multigrid_gpe, solve, SolveReport, SolverConfig,
};

/// Exit code for configuration and manifest problems.
pub const EXIT_CONFIG: i32 = 1;
/// Exit code for solver failures.
pub const EXIT_SOLVER: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Bench,
    Adapt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub command: Command,
    pub config: PathBuf,
    pub out: PathBuf,
    pub reps: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("{0}")]
    Manifest(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("solver: {0}")]
    Solver(#[from] crate::error::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Solver(_) => EXIT_SOLVER,
            Self::Config { .. } | Self::Manifest(_) => EXIT_CONFIG,
            Self::Io(_) | Self::Csv(_) | Self::Json(_) => EXIT_SOLVER,
        }
    }
}

#[derive(Debug, Serialize)]
struct LevelRow {
    level: usize,
    n_dofs: usize,
    lambda: f64,
    scf_iters: usize,
    mg_cycles: usize,
    t_linear_s: f64,
    t_nonlinear_s: f64,
    t_total_s: f64,
    err_lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub zeta: f64,
    pub level: usize,
    pub n_dofs: usize,
    pub t_total_s: f64,
}

#[derive(Debug, Serialize)]
struct AdaptCsvRow {
    iter: usize,
    n_dofs: usize,
    lambda: f64,
    total_eta: f64,
    t_total_s: f64,
}

fn load(manifest: &RunManifest) -> Result<RunConfig, CliError> {
    if manifest.reps == 0 {
        return Err(CliError::Manifest("--reps must be at least 1".into()));
    }
    let text = fs::read_to_string(&manifest.config).map_err(|e| {
        CliError::Manifest(format!(
            "cannot read config {}: {e}",
            manifest.config.display()
        ))
    })?;
    let cfg = parse_config(&text).map_err(|source| CliError::Config {
        path: manifest.config.display().to_string(),
        source,
    })?;
    fs::create_dir_all(&manifest.out).map_err(|e| {
        CliError::Manifest(format!(
            "cannot create output directory {}: {e}",
            manifest.out.display()
        ))
    })?;
    Ok(cfg)
}

fn validated(cfg: &SolverConfig) -> Result<(), CliError> {
    cfg.validate()
        .map_err(|e| CliError::Manifest(format!("invalid configuration: {e}")))
}

pub fn write_levels_csv(path: &Path, report: &SolveReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for l in &report.levels {
        w.serialize(LevelRow {
            level: l.level,
            n_dofs: l.n_dofs,
            lambda: l.lambda,
            scf_iters: l.scf_iters,
            mg_cycles: l.mg_cycles,
            t_linear_s: l.t_linear,
            t_nonlinear_s: l.t_nonlinear,
            t_total_s: l.t_total,
            err_lambda: l.err_lambda,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_adapt_csv(path: &Path, report: &AdaptReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &report.rows {
        w.serialize(AdaptCsvRow {
            iter: r.iter,
            n_dofs: r.n_dofs,
            lambda: r.lambda,
            total_eta: r.total_eta,
            t_total_s: r.t_total,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn run_once(method: BenchMethod, cfg: &SolverConfig) -> crate::error::Result<SolveReport> {
    match method {
        BenchMethod::Tensor => multigrid_gpe(cfg),
        BenchMethod::Baseline => baseline_multilevel(cfg),
        BenchMethod::DirectLinear => linear_reference(cfg),
    }
}

/// Runs the sweep and returns the rows (median `t_total` over `reps` runs,
/// after one untimed warm-up run per method).
pub fn bench_rows(cfg: &RunConfig, reps: usize) -> Result<Vec<BenchRow>, CliError> {
    let mut rows = Vec::new();
    for &method in &cfg.bench.methods {
        let cfgs = cfg
            .bench
            .zeta_values
            .iter()
            .map(|&zeta| {
                let c = SolverConfig {
                    zeta,
                    ..cfg.solver.clone()
                };
                validated(&c).map(|_| c)
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = cfgs.first() {
            run_once(method, first)?;
        }
        // repetitions cycle over the sweep so slow drift hits every value alike
        let mut times: Vec<Vec<Vec<f64>>> = vec![Vec::new(); cfgs.len()];
        let mut dofs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); cfgs.len()];
        for _ in 0..reps {
            for (i, run_cfg) in cfgs.iter().enumerate() {
                let rep = run_once(method, run_cfg)?;
                if times[i].is_empty() {
                    times[i] = vec![Vec::with_capacity(reps); rep.levels.len()];
                    dofs[i] = rep.levels.iter().map(|l| (l.level, l.n_dofs)).collect();
                }
                for (t, l) in times[i].iter_mut().zip(&rep.levels) {
                    t.push(l.t_total);
                }
            }
        }
        for ((run_cfg, d), t) in cfgs.iter().zip(dofs).zip(times) {
            for ((level, n_dofs), mut t) in d.into_iter().zip(t) {
                rows.push(BenchRow {
                    method: method.name().to_string(),
                    zeta: run_cfg.zeta,
                    level,
                    n_dofs,
                    t_total_s: median(&mut t),
                });
            }
        }
    }
    Ok(rows)
}

fn do_solve(manifest: &RunManifest) -> Result<(), CliError> {
    let cfg = load(manifest)?;
    validated(&cfg.solver)?;
    let report = solve(&cfg.solver)?;
    fs::write(
        manifest.out.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    write_levels_csv(&manifest.out.join("levels.csv"), &report)?;
    Ok(())
}

fn do_bench(manifest: &RunManifest) -> Result<(), CliError> {
    let cfg = load(manifest)?;
    validated(&cfg.solver)?;
    if cfg.bench.methods.is_empty() || cfg.bench.zeta_values.is_empty() {
        return Err(CliError::Manifest(
            "bench needs at least one method and one zeta value".into(),
        ));
    }
    let rows = bench_rows(&cfg, manifest.reps)?;
    let mut w = csv::Writer::from_path(manifest.out.join("bench.csv"))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn do_adapt(manifest: &RunManifest) -> Result<(), CliError> {
    let cfg = load(manifest)?;
    cfg.adapt
        .validate()
        .map_err(|e| CliError::Manifest(format!("invalid configuration: {e}")))?;
    let report = adaptive_loop(&cfg.solver, &cfg.adapt)?;
    write_adapt_csv(&manifest.out.join("adapt.csv"), &report)?;
    fs::write(
        manifest.out.join("adapt.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok(())
}

/// Executes the manifest; returns the process exit code. Diagnostics go to
/// standard error.
pub fn run(manifest: &RunManifest) -> i32 {
    let res = match manifest.command {
        Command::Solve => do_solve(manifest),
        Command::Bench => do_bench(manifest),
        Command::Adapt => do_adapt(manifest),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gpemg: {e}");
            e.exit_code()
        }
    }
}

pub fn run_solve(manifest: &RunManifest) -> i32 {
    run(&RunManifest {
        command: Command::Solve,
        ..manifest.clone()
    })
}

pub fn run_bench(manifest: &RunManifest) -> i32 {
    run(&RunManifest {
        command: Command::Bench,
        ..manifest.clone()
    })
}

pub fn run_adapt(manifest: &RunManifest) -> i32 {
    run(&RunManifest {
        command: Command::Adapt,
        ..manifest.clone()
    })
}
