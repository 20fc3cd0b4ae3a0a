//! Python bindings. Reports come back as plain dicts with the same keys as
//! the JSON written by the command-line tool.

use pinchlab::cones::{self, SetKind, SetSpec};
use pinchlab::eigen_ode::{self, EigenTriple, FlowParams};
use pinchlab::error::PinchError;
use pinchlab::integrator::{self, IntegratorConfig, Trajectory};
use pinchlab::pinch::{self, EstimateVariant};
use pinchlab::verifier::{self, DerivQuantity, InequalityKind, ScanOptions};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: PinchError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn triple(v: (f64, f64, f64)) -> PyResult<EigenTriple> {
    EigenTriple::sorted([v.0, v.1, v.2]).map(|(s, _)| s).map_err(err)
}

/// Flow parameters `(rho, eta, theta)`.
#[pyclass(name = "FlowParams", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyFlowParams {
    inner: FlowParams,
}

#[pymethods]
impl PyFlowParams {
    #[new]
    #[pyo3(signature = (rho, eta = -4.0, theta = 1.0))]
    fn new(rho: f64, eta: f64, theta: f64) -> PyResult<Self> {
        Ok(Self {
            inner: FlowParams::new(rho, eta, theta).map_err(err)?,
        })
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    fn __repr__(&self) -> String {
        format!(
            "FlowParams(rho={}, eta={}, theta={})",
            self.inner.rho, self.inner.eta, self.inner.theta
        )
    }
}

/// Adaptive solution of the reaction ODE with dense output.
#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory {
    inner: Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    /// Stored states as sorted `(lambda, mu, nu)` tuples.
    #[getter]
    fn states(&self) -> Vec<(f64, f64, f64)> {
        self.inner
            .states()
            .iter()
            .map(|s| (s.lambda(), s.mu(), s.nu()))
            .collect()
    }

    #[getter]
    fn terminal<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.terminal)
    }

    #[getter]
    fn events<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.events)
    }

    fn eval_at(&self, t: f64) -> PyResult<(f64, f64, f64)> {
        let s = self.inner.eval_at(t).map_err(err)?;
        Ok((s.lambda(), s.mu(), s.nu()))
    }

    #[pyo3(signature = (path, refine = 3))]
    fn to_csv(&self, path: std::path::PathBuf, refine: usize) -> PyResult<()> {
        let meta = pinchlab::cli::output::ExportMeta {
            refine,
            ..Default::default()
        };
        pinchlab::cli::output::export_trajectory(&self.inner, &self.inner.params, &path, &meta).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Right-hand side `(lambda', mu', nu')` of the reaction ODE.
#[pyfunction]
fn rhs(state: (f64, f64, f64), params: &PyFlowParams) -> PyResult<(f64, f64, f64)> {
    let d = eigen_ode::rhs(&triple(state)?, &params.inner);
    Ok((d.dlambda, d.dmu, d.dnu))
}

#[pyfunction]
fn isotropic_solution(c0: f64, params: &PyFlowParams, t: f64) -> PyResult<f64> {
    eigen_ode::isotropic_solution(c0, &params.inner, t).map_err(err)
}

#[pyfunction]
fn f_pinch(x: f64, params: &PyFlowParams) -> PyResult<f64> {
    pinch::f_pinch(x, &params.inner).map_err(err)
}

#[pyfunction]
fn f_inverse(y: f64, params: &PyFlowParams) -> PyResult<f64> {
    pinch::f_inverse(y, &params.inner).map_err(err)
}

#[pyfunction]
fn lambda_pinch(state: (f64, f64, f64), params: &PyFlowParams) -> PyResult<f64> {
    pinch::lambda_pinch(&triple(state)?, &params.inner).map_err(err)
}

#[pyfunction]
fn j_polynomial(state: (f64, f64, f64), params: &PyFlowParams) -> PyResult<f64> {
    Ok(pinch::j_polynomial(&triple(state)?, &params.inner))
}

#[pyfunction]
fn i_polynomial(state: (f64, f64, f64), params: &PyFlowParams) -> PyResult<f64> {
    Ok(pinch::i_polynomial(&triple(state)?, &params.inner))
}

#[pyfunction]
fn xi_pinch(state: (f64, f64, f64), params: &PyFlowParams, t: f64) -> PyResult<f64> {
    pinch::xi_pinch(&triple(state)?, &params.inner, t).map_err(err)
}

#[pyfunction]
fn estimate_rhs(variant: &str, smallest: f64, params: &PyFlowParams, t: f64) -> PyResult<f64> {
    let v: EstimateVariant = variant.parse().map_err(err)?;
    pinch::estimate_rhs(v, smallest, &params.inner, t).map_err(err)
}

/// Membership of `state` in set `kind` (`"X"`, `"K"`, `"Y"`, `"W"`) at time `t`.
#[pyfunction]
fn membership<'py>(
    py: Python<'py>,
    kind: &str,
    state: (f64, f64, f64),
    params: &PyFlowParams,
    t: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let kind: SetKind = kind.parse().map_err(err)?;
    let spec = SetSpec::new(kind, params.inner).map_err(err)?;
    let r = cones::membership(&spec, &triple(state)?, t).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (kind, params, count, seed, t = 0.0, band = f64::INFINITY))]
fn sample_set(
    kind: &str,
    params: &PyFlowParams,
    count: usize,
    seed: u64,
    t: f64,
    band: f64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let kind: SetKind = kind.parse().map_err(err)?;
    let spec = SetSpec::new(kind, params.inner).map_err(err)?;
    let states = cones::sample_set(&spec, t, count, seed, band).map_err(err)?;
    Ok(states.iter().map(|s| (s.lambda(), s.mu(), s.nu())).collect())
}

#[pyfunction]
#[pyo3(signature = (state, params, t_end, t0 = 0.0, rel_tol = 1e-10, abs_tol = 1e-12))]
fn integrate(
    state: (f64, f64, f64),
    params: &PyFlowParams,
    t_end: f64,
    t0: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> PyResult<PyTrajectory> {
    let cfg = IntegratorConfig {
        rel_tol,
        abs_tol,
        ..IntegratorConfig::default()
    };
    let inner = integrator::integrate_partial(&triple(state)?, &params.inner, t0, t_end, &cfg).map_err(err)?;
    Ok(PyTrajectory { inner })
}

/// Grid scan of a sign claim; `kind` is one of `j-neg-trace`,
/// `j-nonneg-trace`, `i-poly`, `xi-prime`, `trace-bound`.
#[pyfunction]
#[pyo3(signature = (kind, params, resolution = 200, tol = 1e-12, times = vec![0.0]))]
fn scan<'py>(
    py: Python<'py>,
    kind: &str,
    params: &PyFlowParams,
    resolution: usize,
    tol: f64,
    times: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind: InequalityKind = kind.parse().map_err(err)?;
    let opts = ScanOptions { tol, times };
    let r = py
        .detach(|| verifier::scan_inequality_with(kind, &params.inner, resolution, &opts))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (kind, params, samples = 1000, horizon = 0.05, seed = 42, tol = 1e-8))]
fn verify_set<'py>(
    py: Python<'py>,
    kind: &str,
    params: &PyFlowParams,
    samples: usize,
    horizon: f64,
    seed: u64,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let kind: SetKind = kind.parse().map_err(err)?;
    let spec = SetSpec::new(kind, params.inner).map_err(err)?;
    let cfg = IntegratorConfig::default();
    let r = py
        .detach(|| verifier::check_invariance(&spec, samples, horizon, seed, &cfg, tol))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (variant, params, count = 100, seed = 42, horizon = 10.0, tol = 1e-8))]
fn verify_estimate<'py>(
    py: Python<'py>,
    variant: &str,
    params: &PyFlowParams,
    count: usize,
    seed: u64,
    horizon: f64,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let v: EstimateVariant = variant.parse().map_err(err)?;
    let cfg = IntegratorConfig::default();
    let r = py
        .detach(|| verifier::check_estimate_batch(v, &params.inner, count, seed, horizon, &cfg, tol))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (quantity, params, count = 20, seed = 42, h = 1e-4, horizon = 0.02, tol = 1e-6))]
#[allow(clippy::too_many_arguments)]
fn deriv_check<'py>(
    py: Python<'py>,
    quantity: &str,
    params: &PyFlowParams,
    count: usize,
    seed: u64,
    h: f64,
    horizon: f64,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let q: DerivQuantity = quantity.parse().map_err(err)?;
    let cfg = IntegratorConfig::default();
    let r = py
        .detach(|| verifier::derivative_batch(q, &params.inner, count, seed, h, horizon, &cfg, tol))
        .map_err(err)?;
    to_py(py, &r)
}

#[pymodule]
fn pinchlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFlowParams>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(rhs, m)?)?;
    m.add_function(wrap_pyfunction!(isotropic_solution, m)?)?;
    m.add_function(wrap_pyfunction!(f_pinch, m)?)?;
    m.add_function(wrap_pyfunction!(f_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_pinch, m)?)?;
    m.add_function(wrap_pyfunction!(j_polynomial, m)?)?;
    m.add_function(wrap_pyfunction!(i_polynomial, m)?)?;
    m.add_function(wrap_pyfunction!(xi_pinch, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_rhs, m)?)?;
    m.add_function(wrap_pyfunction!(membership, m)?)?;
    m.add_function(wrap_pyfunction!(sample_set, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(verify_set, m)?)?;
    m.add_function(wrap_pyfunction!(verify_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(deriv_check, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
