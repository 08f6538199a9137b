//! Python bindings for the damped Kačanov solver.
//!
//! Finite element functions cross the boundary as lists of free nodal values
//! (boundary vertices excluded, in mesh order).

use std::path::PathBuf;

use kacanov::experiment::{self, ExperimentConfig, StrategyKind};
use kacanov::kacanov::{default_zarantonello_damping, zarantonello_reference, TRAILING_WINDOW};
use kacanov::{
    DampingStrategy, DiffusionModel, FeFunction, FeSpace, IterationTrace, KacanovError, ManufacturedSolution,
    SolveConfig, SolveMethod, TriangleMesh,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: KacanovError) -> PyErr {
    match e {
        KacanovError::Config(_) | KacanovError::Argument(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_strategy(name: &str) -> PyResult<StrategyKind> {
    name.parse().map_err(to_py)
}

#[pyclass(name = "DiffusionModel", module = "kacanov_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDiffusionModel {
    pub inner: DiffusionModel,
}

#[pymethods]
impl PyDiffusionModel {
    /// `mu1`, `mu2`, `mu3` or `constant`.
    #[new]
    pub fn new(id: &str) -> PyResult<Self> {
        DiffusionModel::from_id(id).map(|inner| PyDiffusionModel { inner }).map_err(to_py)
    }

    #[staticmethod]
    pub fn constant(c: f64) -> PyResult<Self> {
        DiffusionModel::constant(c).map(|inner| PyDiffusionModel { inner }).map_err(to_py)
    }

    #[getter]
    pub fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    pub fn m_mu(&self) -> f64 {
        self.inner.m_mu()
    }

    #[getter]
    #[allow(non_snake_case)]
    pub fn M_mu(&self) -> f64 {
        self.inner.M_mu()
    }

    pub fn mu(&self, t: f64) -> f64 {
        self.inner.mu(t)
    }

    pub fn psi(&self, s: f64) -> f64 {
        self.inner.psi(s)
    }

    /// `(nu, L_H, alpha, beta, delta_min)`.
    pub fn constants(&self) -> (f64, f64, f64, f64, f64) {
        let c = self.inner.constants();
        (c.nu, c.lipschitz, c.alpha, c.beta, c.delta_min)
    }

    fn __repr__(&self) -> String {
        format!("DiffusionModel('{}')", self.inner.name())
    }
}

#[pyclass(name = "Mesh", module = "kacanov_py", frozen)]
pub struct PyMesh {
    pub inner: TriangleMesh,
}

#[pymethods]
impl PyMesh {
    /// Uniformly refined L-shape with `6 * 4**level` triangles.
    #[new]
    pub fn new(level: u32) -> PyResult<Self> {
        TriangleMesh::build_lshape(level).map(|inner| PyMesh { inner }).map_err(to_py)
    }

    #[getter]
    pub fn level(&self) -> u32 {
        self.inner.level()
    }

    #[getter]
    pub fn n_vertices(&self) -> usize {
        self.inner.n_vertices()
    }

    #[getter]
    pub fn n_triangles(&self) -> usize {
        self.inner.n_triangles()
    }

    #[getter]
    pub fn n_free(&self) -> usize {
        self.inner.n_free()
    }

    pub fn vertices(&self) -> Vec<(f64, f64)> {
        self.inner.vertices().iter().map(|p| (p[0], p[1])).collect()
    }

    pub fn triangles(&self) -> Vec<(usize, usize, usize)> {
        self.inner.triangles().iter().map(|t| (t[0], t[1], t[2])).collect()
    }

    pub fn boundary_flags(&self) -> Vec<bool> {
        self.inner.boundary_flags().to_vec()
    }
}

/// One step of an iteration history.
#[pyclass(name = "StepRecord", module = "kacanov_py", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyStepRecord {
    pub n: usize,
    pub delta: f64,
    pub energy: f64,
    pub error: f64,
    pub decrement: f64,
    pub decay_ok: bool,
    pub retries: usize,
    pub step_norm: f64,
}

#[pymethods]
impl PyStepRecord {
    fn __repr__(&self) -> String {
        format!("StepRecord(n={}, delta={}, error={:e})", self.n, self.delta, self.error)
    }
}

#[pyclass(name = "Trace", module = "kacanov_py", frozen)]
pub struct PyTrace {
    pub inner: IterationTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    pub fn strategy(&self) -> String {
        self.inner.strategy.clone()
    }

    #[getter]
    pub fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    pub fn final_error(&self) -> f64 {
        self.inner.final_error()
    }

    #[getter]
    pub fn reached_tolerance(&self) -> bool {
        self.inner.reached_tolerance
    }

    #[getter]
    pub fn non_convergent(&self) -> bool {
        self.inner.non_convergent
    }

    pub fn records(&self) -> Vec<PyStepRecord> {
        self.inner
            .records
            .iter()
            .map(|r| PyStepRecord {
                n: r.n,
                delta: r.delta,
                energy: r.energy,
                error: r.error,
                decrement: r.decrement,
                decay_ok: r.decay_ok,
                retries: r.retries,
                step_norm: r.step_norm,
            })
            .collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.error).collect()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.delta).collect()
    }

    #[pyo3(signature = (window = TRAILING_WINDOW))]
    pub fn trailing_ratio(&self, window: usize) -> Option<f64> {
        self.inner.trailing_ratio(window)
    }

    pub fn final_iterate(&self) -> Vec<f64> {
        self.inner.final_iterate.values().to_vec()
    }

    pub fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(|e| to_py(e.into()))?;
        Ok(String::from_utf8(buf).expect("csv is ascii"))
    }
}

/// Discrete problem on the L-shape with the manufactured sine load.
#[pyclass(name = "Problem", module = "kacanov_py", frozen)]
pub struct PyProblem {
    pub inner: kacanov::Problem,
}

impl PyProblem {
    fn function(&self, values: Vec<f64>) -> PyResult<FeFunction> {
        FeFunction::from_values(self.inner.space.tag(), values).map_err(to_py)
    }
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (model, level, solver = "cg", solver_tol = 1e-12))]
    pub fn new(model: &PyDiffusionModel, level: u32, solver: &str, solver_tol: f64) -> PyResult<Self> {
        let method: SolveMethod = solver.parse().map_err(to_py)?;
        let mesh = TriangleMesh::build_lshape(level).map_err(to_py)?;
        let config = SolveConfig { method, rel_tolerance: solver_tol, ..Default::default() };
        let inner =
            kacanov::Problem::new(FeSpace::new(mesh), model.inner.clone(), &ManufacturedSolution::sine(), config);
        Ok(PyProblem { inner })
    }

    #[getter]
    pub fn n_free(&self) -> usize {
        self.inner.space.n_free()
    }

    pub fn zero(&self) -> Vec<f64> {
        vec![0.0; self.inner.space.n_free()]
    }

    /// Nodal interpolant of the exact solution `sin(pi x) sin(pi y)`.
    pub fn exact_interpolant(&self) -> Vec<f64> {
        let pi = std::f64::consts::PI;
        self.inner.space.interpolate(|x, y| (pi * x).sin() * (pi * y).sin()).into_values()
    }

    pub fn load(&self) -> Vec<f64> {
        self.inner.load.values().to_vec()
    }

    pub fn energy(&self, u: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.energy(&self.function(u)?))
    }

    /// Coefficients of `F(u)` against the nodal basis.
    pub fn residual(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.residual(&self.function(u)?).values().to_vec())
    }

    pub fn h1_seminorm(&self, u: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.space.h1_seminorm(&self.function(u)?))
    }

    pub fn h1_distance(&self, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.space.h1_distance(&self.function(u)?, &self.function(v)?))
    }

    /// `(u - delta * rho, rho)` for the frozen-coefficient correction `rho`.
    pub fn kacanov_update(&self, u: Vec<f64>, delta: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (next, rho) = self.inner.kacanov_update(&self.function(u)?, delta).map_err(to_py)?;
        Ok((next.into_values(), rho.into_values()))
    }

    /// Zarantonello reference solution; `damping` defaults to `1 / M_mu`.
    #[pyo3(signature = (steps = 1000, damping = None))]
    pub fn reference(&self, steps: usize, damping: Option<f64>) -> PyResult<(Vec<f64>, usize, f64)> {
        let p = &self.inner;
        let delta = damping.unwrap_or_else(|| default_zarantonello_damping(&p.model));
        let z = zarantonello_reference(&p.space, &p.model, &p.load, steps, delta).map_err(to_py)?;
        Ok((z.solution.into_values(), z.steps, z.dual_residual))
    }

    /// Runs one strategy (`undamped`, `taylor`, `prediction_correction` or a
    /// fixed step via `delta`) from zero, measuring errors against `reference`.
    #[pyo3(signature = (strategy, reference, max_iters = 50, tol = 1e-10, sigma = 0.9, theta = 0.1, delta = None))]
    #[allow(clippy::too_many_arguments)]
    pub fn run(
        &self,
        strategy: &str,
        reference: Vec<f64>,
        max_iters: usize,
        tol: f64,
        sigma: f64,
        theta: f64,
        delta: Option<f64>,
    ) -> PyResult<PyTrace> {
        let c = &self.inner.constants;
        let base = match delta {
            Some(d) => DampingStrategy::fixed(d, c),
            None => match parse_strategy(strategy)? {
                StrategyKind::Undamped => DampingStrategy::undamped(c),
                StrategyKind::Taylor => DampingStrategy::taylor(c),
                StrategyKind::PredictionCorrection => DampingStrategy::prediction_correction(c),
            },
        };
        let strategy = base.with_sigma(sigma).with_theta(theta);
        strategy.validate().map_err(to_py)?;
        let reference = self.function(reference)?;
        let stop = kacanov::StopCriteria { max_iters, tol_error: tol, reference: &reference };
        self.inner.run_iteration(strategy, &stop).map(|inner| PyTrace { inner }).map_err(to_py)
    }
}

/// Full experiment: reference, all requested strategies, CSV traces and plots
/// under `output_dir`. Returns `(strategy, trace)` pairs and the written files.
#[pyfunction]
#[pyo3(signature = (model = "mu1", level = 5, strategies = None, max_iters = 50, output_dir = "out", cache = true, plots = true))]
pub fn run_experiment(
    model: &str,
    level: u32,
    strategies: Option<Vec<String>>,
    max_iters: usize,
    output_dir: &str,
    cache: bool,
    plots: bool,
) -> PyResult<(Vec<(String, PyTrace)>, Vec<String>)> {
    let mut cfg = ExperimentConfig {
        model_id: model.into(),
        level,
        max_iters,
        output_dir: PathBuf::from(output_dir),
        cache_reference: cache,
        write_plots: plots,
        ..Default::default()
    };
    if let Some(names) = strategies {
        cfg.strategies = names.iter().map(|s| parse_strategy(s)).collect::<PyResult<_>>()?;
    }
    let report = experiment::run_experiment(&cfg).map_err(to_py)?;
    let runs = report.runs.into_iter().map(|r| (r.kind.id().to_string(), PyTrace { inner: r.trace })).collect();
    let files = report.files.iter().map(|p| p.display().to_string()).collect();
    Ok((runs, files))
}

#[pymodule]
fn kacanov_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDiffusionModel>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyStepRecord>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
