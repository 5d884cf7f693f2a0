//! Python bindings for the campaign engine, evaluators, RTD analysis and coil geometry.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mfbo_core::backends::{EvalOutput, Evaluator, EvaluatorSpec, MockReactor, MockReactorSpec, SyntheticBenchmark, SyntheticSpec};
use mfbo_core::config::CampaignConfig;
use mfbo_core::engine::{self, Record};
use mfbo_core::geometry::{self, CoilCurve, CoilParams};
use mfbo_core::rtd::{self, FitMethod, RtdCurve, TisFit};
use mfbo_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Evaluation { .. } | Error::Protocol { .. } | Error::Interrupted(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Campaign configuration, round-tripped through its JSON form.
#[pyclass(name = "CampaignConfig", module = "mfbo", from_py_object)]
#[derive(Clone)]
struct PyCampaignConfig {
    inner: CampaignConfig,
}

#[pymethods]
impl PyCampaignConfig {
    /// The mock reactor problem with default settings.
    #[new]
    fn new() -> Self {
        Self {
            inner: CampaignConfig::default(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CampaignConfig::from_json(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CampaignConfig::load(&path).map_err(py_err)?,
        })
    }

    /// Synthetic benchmark problem with the given loop budget.
    #[staticmethod]
    fn synthetic(budget_total: f64) -> Self {
        Self {
            inner: CampaignConfig::synthetic(SyntheticSpec::default(), budget_total),
        }
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn diagnostics(&self) -> Vec<String> {
        self.inner.diagnostics()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn budget_total(&self) -> f64 {
        self.inner.budget_total
    }

    #[setter]
    fn set_budget_total(&mut self, v: f64) {
        self.inner.budget_total = v;
    }

    #[getter]
    fn doe_count(&self) -> usize {
        self.inner.doe_count
    }

    #[setter]
    fn set_doe_count(&mut self, v: usize) {
        self.inner.doe_count = v;
    }

    #[getter]
    fn design_names(&self) -> Vec<String> {
        self.inner.design.iter().map(|v| v.name.clone()).collect()
    }

    #[getter]
    fn fidelity_names(&self) -> Vec<String> {
        self.inner.fidelity.iter().map(|v| v.name.clone()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "CampaignConfig(evaluator={:?}, design={}, fidelity={}, budget_total={})",
            self.inner.evaluator.kind(),
            self.inner.design.len(),
            self.inner.fidelity.len(),
            self.inner.budget_total
        )
    }
}

/// One evaluation in a campaign trace.
#[pyclass(name = "Record", module = "mfbo", get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyRecord {
    index: usize,
    iteration: usize,
    provenance: String,
    x: Vec<f64>,
    z: Vec<f64>,
    objective: Option<f64>,
    cost: f64,
    failed: bool,
    error: Option<String>,
    cumulative_cost: f64,
    remaining_budget: f64,
    c_max: Option<f64>,
}

impl From<&Record> for PyRecord {
    fn from(r: &Record) -> Self {
        Self {
            index: r.index,
            iteration: r.iteration,
            provenance: r.provenance.as_str().into(),
            x: r.x.clone(),
            z: r.z.clone(),
            objective: r.objective,
            cost: r.cost,
            failed: r.failed,
            error: r.error.clone(),
            cumulative_cost: r.cumulative_cost,
            remaining_budget: r.remaining_budget,
            c_max: r.c_max.map(|b| b.total()),
        }
    }
}

#[pymethods]
impl PyRecord {
    fn __repr__(&self) -> String {
        format!(
            "Record(index={}, provenance={:?}, z={:?}, objective={:?}, cost={})",
            self.index, self.provenance, self.z, self.objective, self.cost
        )
    }
}

#[pyclass(name = "CampaignResult", module = "mfbo", get_all)]
struct PyCampaignResult {
    x_star: Vec<f64>,
    y_star: f64,
    z_star: Vec<f64>,
    termination: String,
    budget_total: f64,
    budget_spent: f64,
    iterations: usize,
    trace: Vec<PyRecord>,
}

#[pymethods]
impl PyCampaignResult {
    fn __repr__(&self) -> String {
        format!(
            "CampaignResult(y_star={}, z_star={:?}, termination={:?}, evaluations={})",
            self.y_star,
            self.z_star,
            self.termination,
            self.trace.len()
        )
    }
}

/// Wraps a Python callable `f(x, z, seed) -> (objective, cost)`.
struct CallableEvaluator {
    f: Py<PyAny>,
}

impl Evaluator for CallableEvaluator {
    fn evaluate(&self, x: &[f64], z: &[f64], seed: u64) -> mfbo_core::Result<EvalOutput> {
        Python::attach(|py| {
            let out = self
                .f
                .call1(py, (x.to_vec(), z.to_vec(), seed))
                .and_then(|v| v.extract::<(f64, f64)>(py));
            match out {
                Ok((objective, cost)) => Ok(EvalOutput::scalar(objective, cost)),
                Err(e) => Err(Error::evaluation(e.to_string(), None)),
            }
        })
    }
}

/// Runs a campaign to completion and returns its result.
///
/// With `evaluator` set, the callable replaces the configured evaluator.
#[pyfunction]
#[pyo3(signature = (config, evaluator=None))]
fn run_campaign(py: Python<'_>, config: &PyCampaignConfig, evaluator: Option<Py<PyAny>>) -> PyResult<PyCampaignResult> {
    let settings = config.inner.settings().map_err(py_err)?;
    let boxed: Box<dyn Evaluator> = match evaluator {
        Some(f) => Box::new(CallableEvaluator { f }),
        None => config.inner.evaluator.build().map_err(py_err)?,
    };
    let r = py.detach(|| engine::run(settings, boxed.as_ref())).map_err(py_err)?;
    Ok(PyCampaignResult {
        x_star: r.x_star,
        y_star: r.y_star,
        z_star: r.z_star,
        termination: r.termination.as_str().into(),
        budget_total: r.budget.total,
        budget_spent: r.budget.spent,
        iterations: r.iterations,
        trace: r.trace.records.iter().map(PyRecord::from).collect(),
    })
}

/// A built-in evaluator: `"synthetic-benchmark"` or `"mock-reactor"`.
#[pyclass(name = "Simulator", module = "mfbo")]
struct PySimulator {
    kind: &'static str,
    inner: Box<dyn Evaluator>,
}

#[pymethods]
impl PySimulator {
    #[new]
    #[pyo3(signature = (kind="synthetic-benchmark"))]
    fn new(kind: &str) -> PyResult<Self> {
        let spec = match kind {
            "synthetic-benchmark" => EvaluatorSpec::SyntheticBenchmark(SyntheticSpec::default()),
            "mock-reactor" => EvaluatorSpec::MockReactor(MockReactorSpec::default()),
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown simulator {other:?}, expected synthetic-benchmark or mock-reactor"
                )))
            }
        };
        let inner: Box<dyn Evaluator> = match &spec {
            EvaluatorSpec::SyntheticBenchmark(s) => Box::new(SyntheticBenchmark::new(s.clone()).map_err(py_err)?),
            EvaluatorSpec::MockReactor(s) => Box::new(MockReactor::new(s.clone()).map_err(py_err)?),
            EvaluatorSpec::ExternalProcess(_) => unreachable!(),
        };
        Ok(Self { kind: spec.kind(), inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.kind
    }

    /// Returns `(objective, cost)`.
    #[pyo3(signature = (x, z, seed=0))]
    fn evaluate(&self, x: Vec<f64>, z: Vec<f64>, seed: u64) -> PyResult<(f64, f64)> {
        let out = self.inner.evaluate(&x, &z, seed).map_err(py_err)?;
        Ok((out.objective, out.cost))
    }

    /// Design and fidelity bounds as `((lo, hi), (lo, hi))`.
    fn domain(&self) -> Option<((Vec<f64>, Vec<f64>), (Vec<f64>, Vec<f64>))> {
        self.inner
            .domain()
            .map(|(x, z)| ((x.low, x.high), (z.low, z.high)))
    }
}

#[pyclass(name = "TisFit", module = "mfbo", get_all)]
struct PyTisFit {
    n: f64,
    data_peak: f64,
    model_peak: f64,
    peak_discrepancy: f64,
    pinned: bool,
    method: String,
}

impl From<TisFit> for PyTisFit {
    fn from(f: TisFit) -> Self {
        Self {
            n: f.n,
            data_peak: f.data_peak,
            model_peak: f.model_peak,
            peak_discrepancy: f.peak_discrepancy,
            pinned: f.pinned,
            method: match f.method {
                FitMethod::PeakMatching => "peak-matching".into(),
                FitMethod::LeastSquares => "least-squares".into(),
            },
        }
    }
}

#[pymethods]
impl PyTisFit {
    fn __repr__(&self) -> String {
        format!("TisFit(n={}, peak_discrepancy={}, method={:?})", self.n, self.peak_discrepancy, self.method)
    }
}

/// Fits a tanks-in-series model to a raw `(t, C(t))` curve.
#[pyfunction]
#[pyo3(signature = (times, concentrations, method="peak-matching", n_max=100.0))]
fn fit_rtd(times: Vec<f64>, concentrations: Vec<f64>, method: &str, n_max: f64) -> PyResult<PyTisFit> {
    let curve = RtdCurve::new(times, concentrations).map_err(py_err)?;
    let d = rtd::to_dimensionless(&curve).map_err(py_err)?;
    let method: FitMethod = method.parse().map_err(py_err)?;
    Ok(rtd::fit_tanks_in_series_with(&d, method, n_max).map_err(py_err)?.into())
}

/// Normalizes a raw curve to `(theta, E(theta))`.
#[pyfunction]
fn dimensionless(times: Vec<f64>, concentrations: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let curve = RtdCurve::new(times, concentrations).map_err(py_err)?;
    let d = rtd::to_dimensionless(&curve).map_err(py_err)?;
    Ok((d.theta, d.e_theta))
}

#[pyfunction]
fn tanks_in_series(theta: Vec<f64>, n: f64) -> PyResult<Vec<f64>> {
    rtd::tanks_in_series_curve(&theta, n).map_err(py_err)
}

/// Centerline points `[(x, y, z), ...]` of a coil in mm.
#[pyfunction]
#[pyo3(signature = (pitch, coil_radius, inversion, samples_per_mm=10.0))]
fn coil_path(pitch: f64, coil_radius: f64, inversion: f64, samples_per_mm: f64) -> PyResult<Vec<(f64, f64, f64)>> {
    let params = CoilParams::new(pitch, coil_radius, inversion);
    let path = geometry::coil_path(&params, samples_per_mm).map_err(py_err)?;
    Ok(path.points.iter().map(|p| (p[0], p[1], p[2])).collect())
}

/// Summary numbers of a coil: length, turns, helix angle and the minimum wall clearance.
#[pyfunction]
#[pyo3(signature = (pitch, coil_radius, inversion, samples_per_mm=10.0))]
fn coil_summary(pitch: f64, coil_radius: f64, inversion: f64, samples_per_mm: f64) -> PyResult<(f64, f64, f64, f64)> {
    let params = CoilParams::new(pitch, coil_radius, inversion);
    let curve = CoilCurve::new(&params).map_err(py_err)?;
    let path = curve.sample(samples_per_mm).map_err(py_err)?;
    let clearance = path.min_clearance(geometry::neighbour_window(params.tube_radius));
    Ok((curve.length(), curve.turns(), curve.helix_angle(), clearance))
}

#[pyfunction]
fn derive_seed(base: u64, purpose: u64, counter: u64) -> u64 {
    engine::derive_seed(base, purpose, counter)
}

#[pymodule]
fn mfbo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCampaignConfig>()?;
    m.add_class::<PyRecord>()?;
    m.add_class::<PyCampaignResult>()?;
    m.add_class::<PySimulator>()?;
    m.add_class::<PyTisFit>()?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rtd, m)?)?;
    m.add_function(wrap_pyfunction!(dimensionless, m)?)?;
    m.add_function(wrap_pyfunction!(tanks_in_series, m)?)?;
    m.add_function(wrap_pyfunction!(coil_path, m)?)?;
    m.add_function(wrap_pyfunction!(coil_summary, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
