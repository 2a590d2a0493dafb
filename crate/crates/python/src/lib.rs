use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use fineq::bounds::{self, ParamSearch, Quantity};
use fineq::langevin::{self, ChainConfig, Target};
use fineq::measures::{Certified, MeasureModel, MomentSet};
use fineq::mollify::{mollified_grad_f, AtomicMeasure};
use fineq::oracle::{self, GridMeasure1D, DEFAULT_INTERVALS};
use fineq::regress::{self, Design, PosteriorSpec, RegressionConstants};
use fineq::scenario::{self, RunOptions};
use fineq::sweep::PertSpec;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn certified(c: Certified) -> Option<f64> {
    match c {
        Certified::Finite(v) => Some(v),
        Certified::Infinite => Some(f64::INFINITY),
        Certified::Unknown => None,
    }
}

/// Base measure `e^{−V}`.
#[pyclass(name = "Measure", frozen)]
struct PyMeasure {
    inner: MeasureModel,
}

#[pymethods]
impl PyMeasure {
    #[staticmethod]
    #[pyo3(signature = (rho=1.0, dim=1))]
    fn gaussian(rho: f64, dim: usize) -> PyResult<Self> {
        MeasureModel::gaussian(rho, dim).map(|inner| PyMeasure { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (alpha=1.0, dim=1))]
    fn exponential(alpha: f64, dim: usize) -> PyResult<Self> {
        MeasureModel::exponential(alpha, dim).map(|inner| PyMeasure { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (p, dim=1))]
    fn subbotin(p: f64, dim: usize) -> PyResult<Self> {
        MeasureModel::subbotin(p, dim).map(|inner| PyMeasure { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (lo=0.0, hi=1.0, dim=1))]
    fn uniform(lo: f64, hi: f64, dim: usize) -> PyResult<Self> {
        MeasureModel::uniform(lo, hi, dim).map(|inner| PyMeasure { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (a, dim=1))]
    fn double_well(a: f64, dim: usize) -> PyResult<Self> {
        MeasureModel::double_well(a, dim).map(|inner| PyMeasure { inner }).map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn log_concave(&self) -> bool {
        self.inner.flags.log_concave
    }

    /// Closed-form Poincaré constant when known.
    #[getter]
    fn known_poincare(&self) -> Option<f64> {
        self.inner.known.c_p
    }

    fn __repr__(&self) -> String {
        format!("Measure({})", self.inner.name())
    }
}

/// Perturbation `F` of a measure, `μ_F ∝ e^{−F} μ`.
#[pyclass(name = "Perturbation", frozen)]
struct PyPerturbation {
    spec: PertSpec,
}

#[pymethods]
impl PyPerturbation {
    #[staticmethod]
    fn zero() -> Self {
        PyPerturbation { spec: PertSpec::Zero }
    }

    #[staticmethod]
    fn linear(c: f64) -> Self {
        PyPerturbation { spec: PertSpec::Linear { c } }
    }

    #[staticmethod]
    fn abs(c: f64) -> Self {
        PyPerturbation { spec: PertSpec::Abs { c } }
    }

    #[staticmethod]
    #[pyo3(signature = (amplitude, width, center=0.0))]
    fn bump(amplitude: f64, width: f64, center: f64) -> Self {
        PyPerturbation { spec: PertSpec::Bump { amplitude, width, center } }
    }

    #[staticmethod]
    fn quadratic(rho: f64) -> Self {
        PyPerturbation { spec: PertSpec::Quadratic { rho } }
    }

    /// Certified metadata of `F` relative to `measure`.
    /// Unknown quantities map to `None`, infinite ones to `inf`.
    fn metadata<'py>(&self, py: Python<'py>, measure: &PyMeasure) -> PyResult<Bound<'py, PyDict>> {
        let meta = self.spec.build(&measure.inner).meta;
        let d = PyDict::new(py);
        for (k, v) in [
            ("lipschitz", meta.lipschitz),
            ("oscillation", meta.oscillation),
            ("sup_above", meta.sup_above),
            ("inf_below", meta.inf_below),
            ("generator_plus_sup", meta.generator_plus_sup),
            ("curvature_lower", meta.curvature_lower),
        ] {
            d.set_item(k, certified(v))?;
        }
        d.set_item("convex", meta.convex)?;
        d.set_item("even", meta.even)?;
        d.set_item("boundary_ok", meta.boundary_ok)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Perturbation({:?})", self.spec)
    }
}

#[pyclass(name = "BoundResult", frozen)]
struct PyBoundResult {
    inner: bounds::BoundResult,
}

#[pymethods]
impl PyBoundResult {
    #[getter]
    fn theorem(&self) -> String {
        self.inner.theorem.name()
    }

    #[getter]
    fn applicable(&self) -> bool {
        self.inner.applicable
    }

    #[getter]
    fn value(&self) -> Option<f64> {
        self.inner.value
    }

    #[getter]
    fn params(&self) -> std::collections::BTreeMap<String, f64> {
        self.inner.params.clone()
    }

    #[getter]
    fn untraced(&self) -> bool {
        self.inner.untraced
    }

    #[getter]
    fn note(&self) -> Option<String> {
        self.inner.note.clone()
    }

    /// Theorems this result was derived from, innermost first.
    fn chain(&self) -> Vec<String> {
        self.inner.chain().into_iter().map(|t| t.name()).collect()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        let f = self.inner.flat();
        format!("BoundResult({}, applicable={}, value={:?})", f.theorem, f.applicable, f.value)
    }
}

fn wrap(r: Result<bounds::BoundResult, bounds::BoundError>) -> PyResult<PyBoundResult> {
    r.map(|inner| PyBoundResult { inner }).map_err(err)
}

#[pyfunction]
fn lipschitz_poincare(c_p: f64, lipschitz: f64) -> PyResult<PyBoundResult> {
    wrap(bounds::bound_lipschitz_poincare(c_p, lipschitz, &ParamSearch::default()))
}

#[pyfunction]
fn lipschitz_cheeger(c_c: f64, lipschitz: f64) -> PyResult<PyBoundResult> {
    wrap(bounds::bound_lipschitz_cheeger(c_c, lipschitz))
}

#[pyfunction]
fn holley_stroock(c_p: f64, oscillation: f64) -> PyResult<PyBoundResult> {
    wrap(bounds::bound_holley_stroock(c_p, Quantity::Poincare, Certified::Finite(oscillation)))
}

#[pyfunction]
#[pyo3(signature = (c_p, generator_plus_sup, restricted=false, boundary_ok=false))]
fn generator_poincare(c_p: f64, generator_plus_sup: f64, restricted: bool, boundary_ok: bool) -> PyResult<PyBoundResult> {
    wrap(bounds::bound_generator_poincare(c_p, generator_plus_sup, restricted, boundary_ok))
}

#[pyfunction]
fn mollified_poincare(radius: f64, sigma: f64) -> PyResult<PyBoundResult> {
    wrap(bounds::bound_mollified(radius, sigma, bounds::MollifiedVariant::GaussianPoincare, &ParamSearch::default()))
}

/// `C_P ≤ 2592 ln2 · Var` for a log-concave measure with the given variance.
#[pyfunction]
fn variance_bound(variance: f64) -> PyResult<PyBoundResult> {
    let m = MomentSet { second: Some(variance), ..Default::default() };
    let mut r = bounds::bound_from_moments(&m, bounds::MomentVariant::Variance, true).map_err(err)?;
    Ok(PyBoundResult { inner: r.remove(0) })
}

fn grid(measure: &PyMeasure, perturbation: Option<&PyPerturbation>, intervals: usize) -> PyResult<GridMeasure1D> {
    let f = perturbation.map(|p| p.spec.build(&measure.inner));
    GridMeasure1D::from_model(&measure.inner, f.as_ref(), intervals).map_err(err)
}

/// Spectral oracle for `C_P(μ_F)` of a one-dimensional measure.
#[pyfunction]
#[pyo3(signature = (measure, perturbation=None, intervals=DEFAULT_INTERVALS))]
fn poincare<'py>(py: Python<'py>, measure: &PyMeasure, perturbation: Option<&PyPerturbation>, intervals: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &oracle::poincare_1d(&grid(measure, perturbation, intervals)?).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (measure, perturbation=None, intervals=DEFAULT_INTERVALS))]
fn cheeger<'py>(py: Python<'py>, measure: &PyMeasure, perturbation: Option<&PyPerturbation>, intervals: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &oracle::cheeger_1d(&grid(measure, perturbation, intervals)?).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (measure, perturbation=None, intervals=DEFAULT_INTERVALS))]
fn muckenhoupt<'py>(py: Python<'py>, measure: &PyMeasure, perturbation: Option<&PyPerturbation>, intervals: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &oracle::muckenhoupt_1d(&grid(measure, perturbation, intervals)?).map_err(err)?)
}

/// `∇F` of the mollified atomic measure at `x`.
#[pyfunction]
fn mollified_gradient(locations: Vec<f64>, weights: Vec<f64>, sigma: f64, x: f64) -> PyResult<f64> {
    let nu = AtomicMeasure::new(locations.into_iter().zip(weights).map(|(l, w)| (vec![l], w)).collect()).map_err(err)?;
    Ok(mollified_grad_f(&nu, sigma, &[x])[0])
}

/// Samples of a ULA chain on `μ_F` (first coordinate of each step).
#[pyfunction]
#[pyo3(signature = (measure, h, steps, seed, perturbation=None, init=None))]
fn ula_chain(measure: &PyMeasure, h: f64, steps: usize, seed: u64, perturbation: Option<&PyPerturbation>, init: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    let f = perturbation.map(|p| p.spec.build(&measure.inner));
    let target = Target::from_model(&measure.inner, f.as_ref());
    let cfg = ChainConfig { h, steps, burn_in: 0, seed, init: init.unwrap_or_else(|| vec![0.0; measure.inner.dim]) };
    langevin::ula_run(&target, &cfg).map(|t| t.coordinate(0)).map_err(err)
}

#[pyfunction]
fn ula_ou_stationary_variance(rho: f64, h: f64) -> f64 {
    langevin::ula_ou_stationary_variance(rho, h)
}

#[pyfunction]
fn integrated_autocorrelation_time(series: Vec<f64>) -> f64 {
    langevin::integrated_autocorrelation_time(&series)
}

/// Gate quantities and bounds for a generated sparse-regression problem.
#[pyfunction]
#[pyo3(signature = (n, m, sparsity, alpha, beta, tau, seed, noise_sd=0.1, orthogonal=true))]
#[allow(clippy::too_many_arguments)]
fn regression_check<'py>(py: Python<'py>, n: usize, m: usize, sparsity: usize, alpha: f64, beta: f64, tau: f64, seed: u64, noise_sd: f64, orthogonal: bool) -> PyResult<Bound<'py, PyAny>> {
    let design = if orthogonal { Design::Orthogonal } else { Design::IidGaussian };
    let p = regress::generate_problem(n, m, sparsity, noise_sd, design, seed).map_err(err)?;
    let spec = PosteriorSpec { beta, alpha, tau, radius: None };
    let k = RegressionConstants::default();
    let a = regress::check_regression_gated(&p, &spec, &k, &ParamSearch::default()).map_err(err)?;
    let b = regress::check_orthogonal_gated(&p, &spec, &k).map_err(err)?;
    to_py(py, &serde_json::json!({ "q": a.q, "q_prime": b.q, "gated": a.gated, "constructive": a.constructive, "gated_orthogonal": b.gated }))
}

/// Run a TOML scenario; returns `(csv, summary)`.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, config: &str) -> PyResult<(String, Bound<'py, PyAny>)> {
    let sc = scenario::parse_scenario(config, "<string>").map_err(err)?;
    let out = py.detach(|| scenario::run_scenario(&sc, &RunOptions::default())).map_err(err)?;
    Ok((String::from_utf8(out.csv).map_err(err)?, to_py(py, &out.summary)?))
}

#[pymodule]
fn fineq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMeasure>()?;
    m.add_class::<PyPerturbation>()?;
    m.add_class::<PyBoundResult>()?;
    m.add_function(wrap_pyfunction!(lipschitz_poincare, m)?)?;
    m.add_function(wrap_pyfunction!(lipschitz_cheeger, m)?)?;
    m.add_function(wrap_pyfunction!(holley_stroock, m)?)?;
    m.add_function(wrap_pyfunction!(generator_poincare, m)?)?;
    m.add_function(wrap_pyfunction!(mollified_poincare, m)?)?;
    m.add_function(wrap_pyfunction!(variance_bound, m)?)?;
    m.add_function(wrap_pyfunction!(poincare, m)?)?;
    m.add_function(wrap_pyfunction!(cheeger, m)?)?;
    m.add_function(wrap_pyfunction!(muckenhoupt, m)?)?;
    m.add_function(wrap_pyfunction!(mollified_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(ula_chain, m)?)?;
    m.add_function(wrap_pyfunction!(ula_ou_stationary_variance, m)?)?;
    m.add_function(wrap_pyfunction!(integrated_autocorrelation_time, m)?)?;
    m.add_function(wrap_pyfunction!(regression_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
