//! Python bindings. Structured results cross the boundary as plain dicts and
//! lists, converted through their JSON form.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use cobra_core::backend::{self, AgentBackend, BackendConfig, ControlKind};
use cobra_core::metrics::{self, Direction};
use cobra_core::regulation::{self, apply_control, BiasSpec, CalibrationOptions, ControlMethod as CoreMethod};
use cobra_core::report::{self, ExperimentConfig, RunRecord as CoreRecord, Selector};
use cobra_core::testbed::{load_testbed_file, ParadigmSpec, Testbed as CoreTestbed};
use cobra_core::{Error, EXIT_BACKEND, EXIT_NON_CONVERGENCE};

create_exception!(cobra, CobraError, PyException, "Base class for errors raised by cobra.");
create_exception!(cobra, ValidationError, CobraError, "Invalid input or configuration.");
create_exception!(cobra, BackendError, CobraError, "The agent backend failed.");
create_exception!(cobra, NonConvergenceError, CobraError, "A calibration did not reach its target.");

fn raise(e: impl Into<Error>) -> PyErr {
    let e = e.into();
    let msg = e.to_string();
    match e.exit_code() {
        EXIT_BACKEND => BackendError::new_err(msg),
        EXIT_NON_CONVERGENCE => NonConvergenceError::new_err(msg),
        _ => ValidationError::new_err(msg),
    }
}

fn invalid(msg: impl Into<String>) -> PyErr {
    ValidationError::new_err(msg.into())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| CobraError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Accept a dict, a list or a JSON string.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?,
    };
    serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))
}

fn parse_direction(s: &str) -> PyResult<Direction> {
    match s {
        "increasing" => Ok(Direction::Increasing),
        "decreasing" => Ok(Direction::Decreasing),
        other => Err(invalid(format!("direction must be increasing or decreasing, got `{other}`"))),
    }
}

/// Registered paradigms: the bundled set plus any loaded documents.
#[pyclass(module = "cobra")]
struct Testbed {
    inner: CoreTestbed,
}

#[pymethods]
impl Testbed {
    #[new]
    fn new() -> Self {
        Self { inner: CoreTestbed::bundled() }
    }

    /// Register the paradigms of a testbed document.
    fn load(&mut self, path: PathBuf) -> PyResult<Vec<String>> {
        let specs = load_testbed_file(&path).map_err(raise)?;
        let ids = specs.iter().map(|s| s.id.clone()).collect();
        self.inner.register(specs).map_err(raise)?;
        Ok(ids)
    }

    fn paradigms(&self) -> Vec<String> {
        self.inner.paradigms().iter().map(|p| p.id.clone()).collect()
    }

    fn variant_count(&self, paradigm: &str) -> PyResult<usize> {
        Ok(self.paradigm(paradigm)?.variant_count())
    }

    fn bias(&self, paradigm: &str) -> PyResult<String> {
        Ok(self.paradigm(paradigm)?.bias.id().to_owned())
    }

    /// Expanded prompt variants of a paradigm, as dicts.
    fn variants<'py>(&self, py: Python<'py>, paradigm: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.paradigm(paradigm)?.expand_variants())
    }

    fn __len__(&self) -> usize {
        self.inner.paradigms().len()
    }

    fn __contains__(&self, paradigm: &str) -> bool {
        self.inner.get(paradigm).is_some()
    }
}

impl Testbed {
    fn paradigm(&self, id: &str) -> PyResult<&ParadigmSpec> {
        self.inner.require(id).map_err(raise)
    }
}

/// Check a testbed document on its own; returns `(paradigm_id, variant_count)` pairs.
#[pyfunction]
fn validate_testbed(path: PathBuf) -> PyResult<Vec<(String, usize)>> {
    let specs = load_testbed_file(&path).map_err(raise)?;
    let mut tb = CoreTestbed::empty();
    tb.register(specs).map_err(raise)?;
    Ok(tb.paradigms().iter().map(|p| (p.id.clone(), p.variant_count())).collect())
}

/// A connected agent backend.
#[pyclass(module = "cobra", frozen)]
struct Backend {
    config: BackendConfig,
    agent: Arc<dyn AgentBackend>,
}

#[pymethods]
impl Backend {
    /// `Backend()` is the default mock; pass a config dict (or JSON string)
    /// for anything else, e.g. `{"endpoint": "api", "model_name": "gpt-4o"}`.
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let config: BackendConfig = match config {
            Some(c) => from_py(c)?,
            None => BackendConfig::default(),
        };
        let agent = backend::from_config(&config).map_err(raise)?;
        Ok(Self { config, agent })
    }

    #[getter]
    fn id(&self) -> String {
        self.agent.id()
    }

    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.config)
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.agent.stats())
    }

    fn __repr__(&self) -> String {
        format!("Backend({})", self.agent.id())
    }
}

/// A control method with its coefficient domain.
#[pyclass(module = "cobra", frozen)]
struct ControlMethod {
    inner: CoreMethod,
}

#[pymethods]
impl ControlMethod {
    /// `kind` is one of prompt_numerical, repe_linear, repe_projection or
    /// task_vector; steering kinds take a stability range `(min, max)`.
    #[new]
    #[pyo3(signature = (kind="prompt_numerical", domain=None, vector_id=None, task_id=None))]
    fn new(kind: &str, domain: Option<(f64, f64)>, vector_id: Option<&str>, task_id: Option<&str>) -> PyResult<Self> {
        let kind: ControlKind = kind.parse().map_err(|e: String| invalid(e))?;
        let mut inner = match domain {
            Some((lambda_min, lambda_max)) if kind.is_steering() => {
                CoreMethod::steering(kind, regulation::StabilityRange { lambda_min, lambda_max }).map_err(raise)?
            }
            Some(_) => return Err(invalid(format!("{kind} has a fixed domain"))),
            None => CoreMethod::default_for(kind),
        };
        if let Some(id) = vector_id {
            inner = inner.with_vector_id(id);
        }
        if let Some(id) = task_id {
            inner = inner.with_task_id(id);
        }
        Ok(Self { inner })
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        self.inner.domain
    }

    #[getter]
    fn quantization(&self) -> Option<f64> {
        self.inner.quantization
    }

    fn __repr__(&self) -> String {
        format!("ControlMethod({}, [{}, {}])", self.inner.kind, self.inner.domain.0, self.inner.domain.1)
    }
}

fn resolve_method(method: Option<&ControlMethod>) -> CoreMethod {
    method.map_or_else(CoreMethod::prompt_numerical, |m| m.inner.clone())
}

fn bias_spec(paradigm: &ParadigmSpec) -> PyResult<BiasSpec> {
    BiasSpec::builtin(&paradigm.bias).ok_or_else(|| invalid(format!("no bias description for `{}`", paradigm.bias.id())))
}

fn default_testbed(testbed: Option<&Testbed>) -> CoreTestbed {
    testbed.map_or_else(CoreTestbed::bundled, |t| t.inner.clone())
}

/// Measure the CBI of `backend` on `paradigm`, optionally under `method` at
/// `coefficient`.
#[pyfunction]
#[pyo3(signature = (backend, paradigm, method=None, coefficient=None, seed=0, testbed=None))]
fn measure<'py>(
    py: Python<'py>,
    backend: &Backend,
    paradigm: &str,
    method: Option<&ControlMethod>,
    coefficient: Option<f64>,
    seed: u64,
    testbed: Option<&Testbed>,
) -> PyResult<Bound<'py, PyAny>> {
    let tb = default_testbed(testbed);
    let p = tb.require(paradigm).map_err(raise)?;
    let agent = backend.agent.clone();
    let result = match coefficient {
        None => py.detach(|| regulation::measure(&*agent, p, seed)),
        Some(c) => {
            let controlled = apply_control(agent, &resolve_method(method), &bias_spec(p)?, c).map_err(raise)?;
            py.detach(|| regulation::measure(&controlled, p, seed))
        }
    };
    to_py(py, &result.map_err(raise)?)
}

/// Measure at every grid coefficient; returns the control curve.
#[pyfunction]
#[pyo3(signature = (backend, paradigm, grid, method=None, seed=0, testbed=None))]
fn sweep<'py>(
    py: Python<'py>,
    backend: &Backend,
    paradigm: &str,
    grid: Vec<f64>,
    method: Option<&ControlMethod>,
    seed: u64,
    testbed: Option<&Testbed>,
) -> PyResult<Bound<'py, PyAny>> {
    let tb = default_testbed(testbed);
    let p = tb.require(paradigm).map_err(raise)?;
    let spec = bias_spec(p)?;
    let m = resolve_method(method);
    let agent = backend.agent.clone();
    let curve = py.detach(|| regulation::sweep(&*agent, &m, &spec, p, &grid, seed)).map_err(raise)?;
    to_py(py, &curve)
}

/// Search the coefficient reaching `target`. Unreached targets come back
/// with `converged: False` unless `strict` is set.
#[pyfunction]
#[pyo3(signature = (backend, paradigm, target, method=None, tolerance=0.05, budget=20, seed=0, transfer=None, strict=false, testbed=None))]
#[allow(clippy::too_many_arguments)]
fn calibrate<'py>(
    py: Python<'py>,
    backend: &Backend,
    paradigm: &str,
    target: f64,
    method: Option<&ControlMethod>,
    tolerance: f64,
    budget: usize,
    seed: u64,
    transfer: Option<&str>,
    strict: bool,
    testbed: Option<&Testbed>,
) -> PyResult<Bound<'py, PyAny>> {
    let tb = default_testbed(testbed);
    let p = tb.require(paradigm).map_err(raise)?;
    let t = transfer.map(|id| tb.require(id)).transpose().map_err(raise)?;
    let spec = bias_spec(p)?;
    let m = resolve_method(method);
    let options = CalibrationOptions { tolerance, budget, verify: true, seed };
    let agent = backend.agent.clone();
    let r = py.detach(|| regulation::calibrate(&*agent, &m, &spec, p, target, t, &options)).map_err(raise)?;
    if strict && !r.converged {
        return Err(NonConvergenceError::new_err(format!(
            "target {target} not reached: {}",
            r.note.as_deref().unwrap_or("budget exhausted")
        )));
    }
    to_py(py, &r)
}

/// CBI of per-variant option distributions (each five probabilities, most
/// biased option first).
#[pyfunction]
fn cbi(distributions: Vec<[f64; 5]>) -> PyResult<f64> {
    let mut total = 0.0;
    for d in &distributions {
        let dist = cobra_core::cbi::OptionDistribution::new(*d).map_err(raise)?;
        total += cobra_core::cbi::weighted_score(&dist);
    }
    if distributions.is_empty() {
        return Err(invalid("need at least one distribution"));
    }
    Ok(total / distributions.len() as f64)
}

/// Curve quality metrics for CBI values `ys` measured at `xs`.
#[pyfunction]
#[pyo3(signature = (xs, ys, alpha=metrics::DEFAULT_ALPHA, direction="increasing"))]
fn evaluate<'py>(py: Python<'py>, xs: Vec<f64>, ys: Vec<f64>, alpha: f64, direction: &str) -> PyResult<Bound<'py, PyAny>> {
    let report = metrics::evaluate(&xs, &ys, alpha, parse_direction(direction)?).map_err(raise)?;
    to_py(py, &report)
}

/// A persisted run.
#[pyclass(module = "cobra", frozen)]
struct RunRecord {
    inner: CoreRecord,
}

#[pymethods]
impl RunRecord {
    #[getter]
    fn run_id(&self) -> String {
        self.inner.run_id.clone()
    }

    #[getter]
    fn status(&self) -> String {
        format!("{:?}", self.inner.status).to_lowercase()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.unconverged().is_empty()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn results<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.results)
    }

    /// One table as CSV text: metrics, curves, calibrations, dose_response,
    /// measurements, transfers or gaps.
    fn csv(&self, table: &str) -> PyResult<String> {
        let selector: Selector = table.parse().map_err(|e: String| invalid(e))?;
        let mut buf = Vec::new();
        report::export_csv(&self.inner, selector, &mut buf).map_err(raise)?;
        String::from_utf8(buf).map_err(|e| CobraError::new_err(e.to_string()))
    }

    /// Write SVG figures into `out_dir`; returns their paths.
    fn plots(&self, out_dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        report::emit_plots(&self.inner, None, &out_dir).map_err(raise)
    }

    fn __repr__(&self) -> String {
        format!("RunRecord({}, {})", self.inner.run_id, self.status())
    }
}

fn runs_path(dir: Option<PathBuf>) -> PathBuf {
    dir.unwrap_or_else(|| PathBuf::from("runs"))
}

/// Execute an experiment config (dict or JSON string) and persist it under
/// `runs_dir`.
#[pyfunction]
#[pyo3(signature = (config, runs_dir=None))]
fn run(py: Python<'_>, config: &Bound<'_, PyAny>, runs_dir: Option<PathBuf>) -> PyResult<RunRecord> {
    let config: ExperimentConfig = from_py(config)?;
    let inner = py.detach(|| report::run(&config, &runs_path(runs_dir))).map_err(raise)?;
    Ok(RunRecord { inner })
}

/// Load a run by id, run directory or summary path.
#[pyfunction]
#[pyo3(signature = (run, runs_dir=None))]
fn load_run(run: &str, runs_dir: Option<PathBuf>) -> PyResult<RunRecord> {
    let inner = report::load_run(&runs_path(runs_dir), run).map_err(raise)?;
    Ok(RunRecord { inner })
}

/// Ids of stored runs, oldest first.
#[pyfunction]
#[pyo3(signature = (runs_dir=None))]
fn list_runs(runs_dir: Option<PathBuf>) -> PyResult<Vec<String>> {
    report::list_runs(&runs_path(runs_dir)).map_err(raise)
}

#[pymodule]
fn cobra(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("CobraError", py.get_type::<CobraError>())?;
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add("BackendError", py.get_type::<BackendError>())?;
    m.add("NonConvergenceError", py.get_type::<NonConvergenceError>())?;
    m.add_class::<Testbed>()?;
    m.add_class::<Backend>()?;
    m.add_class::<ControlMethod>()?;
    m.add_class::<RunRecord>()?;
    m.add_function(wrap_pyfunction!(validate_testbed, m)?)?;
    m.add_function(wrap_pyfunction!(measure, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(cbi, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(load_run, m)?)?;
    m.add_function(wrap_pyfunction!(list_runs, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
