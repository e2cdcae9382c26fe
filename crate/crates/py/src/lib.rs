//! Python module `pymfgc`. Structured results come back as plain dicts.

use mfgc::contraction::{self, Variant};
use mfgc::model::{estimate_lipschitz, random_affine_model, RandomModelSpec};
use mfgc::slowfast::{self, SlowFastMode};
use mfgc::solvers::{self, SolveOptions};
use mfgc::{rates, spectral, LipschitzProfile, MfgError, MfgModel, PopulationConstants};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(pymfgc, MfgcError, PyException);
create_exception!(pymfgc, NotStableError, MfgcError);
create_exception!(pymfgc, IterationLimitError, MfgcError);

fn py_err(e: MfgError) -> PyErr {
    match e {
        MfgError::NotStable(_) | MfgError::EmptyInterval(_) => NotStableError::new_err(e.to_string()),
        MfgError::IterationLimit { .. } => IterationLimitError::new_err(e.to_string()),
        _ => MfgcError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| MfgcError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn variant(s: &str) -> PyResult<Variant> {
    match s.to_ascii_lowercase().as_str() {
        "a" => Ok(Variant::A),
        "b" => Ok(Variant::B),
        _ => Err(PyValueError::new_err(format!("variant must be \"a\" or \"b\", got {s:?}"))),
    }
}

#[pyclass(name = "Model", module = "pymfgc", skip_from_py_object)]
#[derive(Clone)]
struct PyModel(MfgModel);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        MfgModel::from_json(text).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MfgcError::new_err(format!("{path}: {e}")))?;
        Self::from_json(&text)
    }

    /// Seeded random affine/mixture model.
    #[staticmethod]
    #[pyo3(signature = (
        seed, n_pops=2, n_states=3, n_actions=2, beta=(0.3, 0.7), rho=(0.5, 2.0),
        cost_scale=1.0, weight_scale=0.5, eps=(0.0, 0.3), kernel_flatness=0.0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn random(
        seed: u64,
        n_pops: usize,
        n_states: usize,
        n_actions: usize,
        beta: (f64, f64),
        rho: (f64, f64),
        cost_scale: f64,
        weight_scale: f64,
        eps: (f64, f64),
        kernel_flatness: f64,
    ) -> Self {
        let spec =
            RandomModelSpec { n_pops, n_states, n_actions, beta, rho, cost_scale, weight_scale, eps, kernel_flatness };
        Self(random_affine_model(&spec, seed))
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(py_err)
    }

    #[getter]
    fn n_pops(&self) -> usize {
        self.0.n_pops()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.0.n_states
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.0.n_actions
    }

    fn profile(&self) -> PyResult<PyProfile> {
        estimate_lipschitz(&self.0).map(|e| PyProfile(e.profile)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Model(n_pops={}, n_states={}, n_actions={})", self.0.n_pops(), self.0.n_states, self.0.n_actions)
    }
}

#[pyclass(name = "Profile", module = "pymfgc", skip_from_py_object)]
#[derive(Clone)]
struct PyProfile(LipschitzProfile);

#[pymethods]
impl PyProfile {
    /// `pops`: list of `(L, K, beta, rho)` tuples.
    #[new]
    fn new(pops: Vec<(f64, f64, f64, f64)>) -> PyResult<Self> {
        let pops = pops.into_iter().map(|(l, k, beta, rho)| PopulationConstants { l, k, beta, rho, m: 1.0 }).collect();
        LipschitzProfile::new(pops).map(Self).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn a(&self) -> Vec<f64> {
        (0..self.0.n()).map(|i| self.0.a(i)).collect()
    }

    #[getter]
    fn kbar(&self) -> Vec<f64> {
        (0..self.0.n()).map(|i| self.0.kbar(i)).collect()
    }

    #[getter]
    fn beta_max(&self) -> f64 {
        self.0.beta_max
    }

    #[getter]
    fn kbar_inf(&self) -> f64 {
        self.0.kbar_inf
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    fn __repr__(&self) -> String {
        format!("Profile(n={}, beta_max={}, kbar_inf={})", self.0.n(), self.0.beta_max, self.0.kbar_inf)
    }
}

#[pyfunction]
fn stationary_certificate<'py>(py: Python<'py>, p: &PyProfile) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &contraction::stationary_certificate(&p.0))
}

#[pyfunction]
fn stationary_matrix(p: &PyProfile) -> Vec<Vec<f64>> {
    let m = contraction::stationary_matrix(&p.0);
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[pyfunction]
#[pyo3(signature = (p, variant="a"))]
fn minimize_v<'py>(py: Python<'py>, p: &PyProfile, variant: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &contraction::minimize_v(&p.0, self::variant(variant)?))
}

#[pyfunction]
#[pyo3(signature = (p, r, variant="a"))]
fn variational_v(p: &PyProfile, r: f64, variant: &str) -> PyResult<f64> {
    contraction::variational_v(&p.0, r, self::variant(variant)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (p, r, variant="a"))]
fn rho_b(p: &PyProfile, r: f64, variant: &str) -> PyResult<f64> {
    Ok(contraction::rho_b(&p.0, r, self::variant(variant)?))
}

#[pyfunction]
#[pyo3(signature = (p, horizons=vec![10, 50, 200]))]
fn contraction_report<'py>(py: Python<'py>, p: &PyProfile, horizons: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &contraction::contraction_report(&p.0, &horizons).map_err(py_err)?)
}

#[pyfunction]
fn st_radius(p: &PyProfile, horizon: usize) -> PyResult<f64> {
    contraction::st_radius(&p.0, horizon).map(|r| r.rho).map_err(py_err)
}

#[pyfunction]
fn st_matvec(p: &PyProfile, horizon: usize, v: Vec<f64>) -> PyResult<Vec<f64>> {
    contraction::st_matvec(&p.0, horizon, &v).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (p, lam, variant="a"))]
fn constraint_roots<'py>(py: Python<'py>, p: &PyProfile, lam: f64, variant: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &contraction::constraint_roots(&p.0, lam, self::variant(variant)?).map_err(py_err)?)
}

#[pyfunction]
#[pyo3(signature = (p, horizon, variant="a"))]
fn perron_ratio_diagnostic<'py>(py: Python<'py>, p: &PyProfile, horizon: usize, variant: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &contraction::perron_ratio_diagnostic(&p.0, horizon, self::variant(variant)?).map_err(py_err)?)
}

/// Perron radius of a dense nonnegative matrix given as a list of rows.
#[pyfunction]
#[pyo3(signature = (rows, tol=1e-12))]
fn dense_radius(rows: Vec<Vec<f64>>, tol: f64) -> PyResult<f64> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    spectral::dense_radius(&m, tol).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (p, split, horizon=None))]
fn slowfast_check<'py>(py: Python<'py>, p: &PyProfile, split: usize, horizon: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let mode = horizon.map_or(SlowFastMode::Stationary, SlowFastMode::Finite);
    to_py(py, &slowfast::mfg_slowfast_check(&p.0, split, mode).map_err(py_err)?)
}

#[pyfunction]
fn equivalence_campaign<'py>(py: Python<'py>, count: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &slowfast::equivalence_campaign(count, seed).map_err(py_err)?)
}

#[pyfunction]
fn lyapunov_weights<'py>(py: Python<'py>, p: &PyProfile, horizon: usize, t_star: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &rates::lyapunov_weights(&p.0, horizon, t_star).map_err(py_err)?)
}

#[pyfunction]
fn stable_rate(p: &PyProfile) -> PyResult<f64> {
    rates::stable_rate(&p.0).map_err(py_err)
}

/// Stationary equilibrium; a non-converged run raises `IterationLimitError`.
#[pyfunction]
#[pyo3(signature = (model, tol=1e-9, max_iter=10_000))]
fn solve_stationary<'py>(py: Python<'py>, model: &PyModel, tol: f64, max_iter: usize) -> PyResult<Bound<'py, PyAny>> {
    let m = model.0.clone();
    let sol = py
        .detach(move || solvers::solve_stationary(&m, &m.initial_measure(), &SolveOptions { tol, max_iter }))
        .and_then(|s| s.check())
        .map_err(py_err)?;
    to_py(py, &serde_json::json!({ "measure": sol.measure, "policy": sol.policy.pi, "trace": sol.trace }))
}

#[pyfunction]
#[pyo3(signature = (model, horizon, tol=1e-9, max_iter=10_000))]
fn solve_finite_horizon<'py>(
    py: Python<'py>,
    model: &PyModel,
    horizon: usize,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let m = model.0.clone();
    let sol = py
        .detach(move || solvers::solve_finite_horizon(&m, &m.initial_measure(), horizon, &SolveOptions { tol, max_iter }))
        .and_then(|s| s.check())
        .map_err(py_err)?;
    to_py(py, &serde_json::json!({ "flow": sol.flow.data, "policy": sol.policy.pi, "trace": sol.trace }))
}

#[pymodule]
fn pymfgc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("MfgcError", py.get_type::<MfgcError>())?;
    m.add("NotStableError", py.get_type::<NotStableError>())?;
    m.add("IterationLimitError", py.get_type::<IterationLimitError>())?;
    m.add("REPORT_SCHEMA", mfgc::REPORT_SCHEMA)?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyProfile>()?;
    m.add_function(wrap_pyfunction!(stationary_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(minimize_v, m)?)?;
    m.add_function(wrap_pyfunction!(variational_v, m)?)?;
    m.add_function(wrap_pyfunction!(rho_b, m)?)?;
    m.add_function(wrap_pyfunction!(contraction_report, m)?)?;
    m.add_function(wrap_pyfunction!(st_radius, m)?)?;
    m.add_function(wrap_pyfunction!(st_matvec, m)?)?;
    m.add_function(wrap_pyfunction!(constraint_roots, m)?)?;
    m.add_function(wrap_pyfunction!(perron_ratio_diagnostic, m)?)?;
    m.add_function(wrap_pyfunction!(dense_radius, m)?)?;
    m.add_function(wrap_pyfunction!(slowfast_check, m)?)?;
    m.add_function(wrap_pyfunction!(equivalence_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_weights, m)?)?;
    m.add_function(wrap_pyfunction!(stable_rate, m)?)?;
    m.add_function(wrap_pyfunction!(solve_stationary, m)?)?;
    m.add_function(wrap_pyfunction!(solve_finite_horizon, m)?)?;
    Ok(())
}
