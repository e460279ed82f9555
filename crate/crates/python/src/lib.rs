//! Python bindings for the `gpemg` solver.

use gpemg::adapt::{adaptive_loop, AdaptReport, AdaptRow};
use gpemg::cli::bench_rows;
use gpemg::config::{parse_config, render_config, RunConfig};
use gpemg::driver::{self, LevelRecord, Method};
use gpemg::mesh::DomainKind;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn solver_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Run configuration: solver, benchmark and adaptive settings.
#[pyclass(name = "Config", module = "pygpemg", from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (domain = "unit_square", initial_subdivision = 8, n_levels = 4, zeta = 0.0, gammas = None, method = "tensor"))]
    fn new(
        domain: &str,
        initial_subdivision: usize,
        n_levels: usize,
        zeta: f64,
        gammas: Option<Vec<f64>>,
        method: &str,
    ) -> PyResult<Self> {
        let mut inner = RunConfig::default();
        let s = &mut inner.solver;
        s.domain.kind = DomainKind::parse(domain)
            .ok_or_else(|| value_err(format!("unknown domain {domain:?}")))?;
        s.domain.initial_subdivision = initial_subdivision;
        s.n_levels = n_levels;
        s.zeta = zeta;
        if let Some(g) = gammas {
            s.gammas = g;
        }
        s.method =
            Method::parse(method).ok_or_else(|| value_err(format!("unknown method {method:?}")))?;
        Ok(Self { inner })
    }

    /// Parse the `key = value` configuration format.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        parse_config(text)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    fn to_text(&self) -> String {
        render_config(&self.inner)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.solver.validate().map_err(value_err)
    }

    #[getter]
    fn domain(&self) -> &'static str {
        self.inner.solver.domain.kind.name()
    }

    #[getter]
    fn initial_subdivision(&self) -> usize {
        self.inner.solver.domain.initial_subdivision
    }

    #[getter]
    fn n_levels(&self) -> usize {
        self.inner.solver.n_levels
    }

    #[setter]
    fn set_n_levels(&mut self, v: usize) {
        self.inner.solver.n_levels = v;
    }

    #[getter]
    fn zeta(&self) -> f64 {
        self.inner.solver.zeta
    }

    #[setter]
    fn set_zeta(&mut self, v: f64) {
        self.inner.solver.zeta = v;
    }

    #[getter]
    fn gammas(&self) -> Vec<f64> {
        self.inner.solver.gammas.clone()
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.solver.method.name()
    }

    #[setter]
    fn set_method(&mut self, v: &str) -> PyResult<()> {
        self.inner.solver.method =
            Method::parse(v).ok_or_else(|| value_err(format!("unknown method {v:?}")))?;
        Ok(())
    }

    #[getter]
    fn corrections_per_level(&self) -> usize {
        self.inner.solver.corrections_per_level
    }

    #[setter]
    fn set_corrections_per_level(&mut self, v: usize) {
        self.inner.solver.corrections_per_level = v;
    }

    #[getter]
    fn theta_mark(&self) -> f64 {
        self.inner.adapt.theta_mark
    }

    #[setter]
    fn set_theta_mark(&mut self, v: f64) {
        self.inner.adapt.theta_mark = v;
    }

    #[getter]
    fn max_dofs(&self) -> usize {
        self.inner.adapt.max_dofs
    }

    #[setter]
    fn set_max_dofs(&mut self, v: usize) {
        self.inner.adapt.max_dofs = v;
    }

    fn __repr__(&self) -> String {
        let s = &self.inner.solver;
        format!(
            "Config(domain={:?}, initial_subdivision={}, n_levels={}, zeta={}, method={:?})",
            s.domain.kind.name(),
            s.domain.initial_subdivision,
            s.n_levels,
            s.zeta,
            s.method.name()
        )
    }
}

/// Per-level record of a solve.
#[pyclass(name = "LevelRecord", module = "pygpemg", get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyLevelRecord {
    level: usize,
    n_dofs: usize,
    lambda_: f64,
    scf_iters: usize,
    mg_cycles: usize,
    t_linear: f64,
    t_nonlinear: f64,
    t_total: f64,
    err_lambda: Option<f64>,
}

impl From<&LevelRecord> for PyLevelRecord {
    fn from(l: &LevelRecord) -> Self {
        Self {
            level: l.level,
            n_dofs: l.n_dofs,
            lambda_: l.lambda,
            scf_iters: l.scf_iters,
            mg_cycles: l.mg_cycles,
            t_linear: l.t_linear,
            t_nonlinear: l.t_nonlinear,
            t_total: l.t_total,
            err_lambda: l.err_lambda,
        }
    }
}

#[pymethods]
impl PyLevelRecord {
    fn __repr__(&self) -> String {
        format!(
            "LevelRecord(level={}, n_dofs={}, lambda_={})",
            self.level, self.n_dofs, self.lambda_
        )
    }
}

/// Result of `solve`.
#[pyclass(name = "SolveReport", module = "pygpemg", skip_from_py_object)]
pub struct PySolveReport {
    inner: driver::SolveReport,
}

#[pymethods]
impl PySolveReport {
    #[getter]
    fn levels(&self) -> Vec<PyLevelRecord> {
        self.inner.levels.iter().map(PyLevelRecord::from).collect()
    }

    #[getter]
    fn final_lambda(&self) -> f64 {
        self.inner.final_lambda
    }

    /// Nodal values of the eigenfunction on the finest space (free DOFs).
    #[getter]
    fn final_coeffs(&self) -> Vec<f64> {
        self.inner.final_coeffs.clone()
    }

    #[getter]
    fn wall_clock(&self) -> f64 {
        self.inner.wall_clock
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(solver_err)
    }
}

/// One row of the adaptive loop.
#[pyclass(name = "AdaptRow", module = "pygpemg", get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyAdaptRow {
    iter: usize,
    n_dofs: usize,
    lambda_: f64,
    total_eta: f64,
    scf_iters: usize,
    n_marked: usize,
    t_total: f64,
}

impl From<&AdaptRow> for PyAdaptRow {
    fn from(r: &AdaptRow) -> Self {
        Self {
            iter: r.iter,
            n_dofs: r.n_dofs,
            lambda_: r.lambda,
            total_eta: r.total_eta,
            scf_iters: r.scf_iters,
            n_marked: r.n_marked,
            t_total: r.t_total,
        }
    }
}

/// Result of `adapt`.
#[pyclass(name = "AdaptReport", module = "pygpemg", skip_from_py_object)]
pub struct PyAdaptReport {
    inner: AdaptReport,
}

#[pymethods]
impl PyAdaptReport {
    #[getter]
    fn rows(&self) -> Vec<PyAdaptRow> {
        self.inner.rows.iter().map(PyAdaptRow::from).collect()
    }

    #[getter]
    fn final_lambda(&self) -> f64 {
        self.inner.final_lambda
    }

    #[getter]
    fn wall_clock(&self) -> f64 {
        self.inner.wall_clock
    }
}

/// Multilevel solve with the method named in the configuration.
#[pyfunction]
fn solve(py: Python<'_>, config: &PyConfig) -> PyResult<PySolveReport> {
    let cfg = config.inner.solver.clone();
    cfg.validate().map_err(value_err)?;
    let inner = py.detach(|| driver::solve(&cfg)).map_err(solver_err)?;
    Ok(PySolveReport { inner })
}

/// Adaptive loop on a fixed coarse space.
#[pyfunction]
fn adapt(py: Python<'_>, config: &PyConfig) -> PyResult<PyAdaptReport> {
    let cfg = config.inner.clone();
    let inner = py
        .detach(|| adaptive_loop(&cfg.solver, &cfg.adapt))
        .map_err(solver_err)?;
    Ok(PyAdaptReport { inner })
}

type BenchTuple = (String, f64, usize, usize, f64);

/// Benchmark sweep; returns `(method, zeta, level, n_dofs, t_total_s)` tuples.
#[pyfunction]
#[pyo3(name = "bench", signature = (config, reps = 3))]
fn run_bench(py: Python<'_>, config: &PyConfig, reps: usize) -> PyResult<Vec<BenchTuple>> {
    if reps == 0 {
        return Err(value_err("reps must be at least 1"));
    }
    let cfg = config.inner.clone();
    let rows = py.detach(|| bench_rows(&cfg, reps)).map_err(solver_err)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.method, r.zeta, r.level, r.n_dofs, r.t_total_s))
        .collect())
}

#[pymodule]
fn pygpemg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyLevelRecord>()?;
    m.add_class::<PySolveReport>()?;
    m.add_class::<PyAdaptRow>()?;
    m.add_class::<PyAdaptReport>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(adapt, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
