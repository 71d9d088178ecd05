//! Python bindings: configs, synthesis, tables, traces and the bound
//! primitives, with errors mapped onto a small exception hierarchy.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use isochron::comparison::{self, BoundState, Sense};
use isochron::config::{Artifact, RunConfig, SweepEntry};
use isochron::runner::{self, Setup};
use isochron::selftrigger::{self, BetaVector, SelfTrigger};
use isochron::sim::{event_time_oracle, IntegratorConfig};
use isochron::Error;

create_exception!(pyisochron, IsochronError, PyException);
create_exception!(pyisochron, ConfigError, IsochronError);
create_exception!(pyisochron, InfeasibleError, IsochronError);
create_exception!(pyisochron, SimulationError, IsochronError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Dimension(_) | Error::Invalid(_) | Error::Io(_) => {
            ConfigError::new_err(msg)
        }
        Error::Infeasible(_) => InfeasibleError::new_err(msg),
        Error::Integration { .. } | Error::ImmediateTrigger { .. } | Error::Eval(_) => SimulationError::new_err(msg),
    }
}

/// A symbolic expression over named variables.
#[pyclass(name = "Expr", module = "pyisochron", frozen)]
struct PyExpr(isochron::Expr);

#[pymethods]
impl PyExpr {
    /// Parse `text`; identifiers must be in `vars` or `params`.
    #[staticmethod]
    #[pyo3(signature = (text, vars, params = None))]
    fn parse(text: &str, vars: Vec<String>, params: Option<HashMap<String, f64>>) -> PyResult<Self> {
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        isochron::expr::parse(text, &refs, &params.unwrap_or_default())
            .map(PyExpr)
            .map_err(|e| to_py(e.into()))
    }

    fn evaluate(&self, values: HashMap<String, f64>) -> PyResult<f64> {
        let mut at = isochron::VarAssignment::new();
        for (k, v) in &values {
            at.set(k, *v);
        }
        self.0.evaluate(&at).map_err(|e| to_py(e.into()))
    }

    fn differentiate(&self, var: &str) -> Self {
        PyExpr(self.0.differentiate(var))
    }

    fn free_vars(&self) -> Vec<String> {
        self.0.free_vars().into_iter().collect()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Expr('{}')", self.0)
    }
}

/// Run configuration.
#[pyclass(name = "Config", module = "pyisochron")]
struct PyConfig(RunConfig);

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        RunConfig::from_json(text).map(PyConfig).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        RunConfig::load(&path).map(PyConfig).map_err(to_py)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.0.seed = seed;
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.model.n
    }

    /// σ values of the sweep (None when the model has no σ).
    fn sigmas(&self) -> Vec<Option<f64>> {
        self.0.sweep().iter().map(|s| s.sigma).collect()
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("config serializes")
    }
}

/// Synthesized coefficients and t* per σ.
#[pyclass(name = "Artifact", module = "pyisochron", frozen)]
struct PyArtifact(Artifact);

#[pymethods]
impl PyArtifact {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(PyArtifact).map_err(|e| ConfigError::new_err(e.to_string()))
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn xi(&self) -> Option<f64> {
        self.0.xi
    }

    #[getter]
    fn homogenized(&self) -> bool {
        self.0.homogenized
    }

    /// (σ, t*, χ_low) for each entry.
    fn entries(&self) -> Vec<(Option<f64>, f64, Vec<f64>)> {
        self.0.entries.iter().map(|e| (e.sigma, e.t_star, e.low.chi.clone())).collect()
    }
}

fn artifact_or_synth(cfg: &RunConfig, art: Option<&PyArtifact>) -> PyResult<Artifact> {
    match art {
        Some(a) => Ok(a.0.clone()),
        None => runner::synthesize(cfg).map_err(to_py),
    }
}

/// Closed loop for one σ with the policy from an artifact.
#[pyclass(name = "Loop", module = "pyisochron")]
struct PyLoop {
    setup: Setup,
    t_star: f64,
    integrator: IntegratorConfig,
    policies: HashMap<usize, SelfTrigger>,
    cfg: RunConfig,
    art: Artifact,
    entry: SweepEntry,
}

impl PyLoop {
    fn policy(&mut self, n_iter: usize) -> PyResult<&SelfTrigger> {
        if !self.policies.contains_key(&n_iter) {
            let entry = self.art.entry_for(self.entry.sigma).expect("checked on construction");
            let p = runner::policy(&self.cfg, &self.setup, entry, n_iter).map_err(to_py)?;
            self.policies.insert(n_iter, p);
        }
        Ok(&self.policies[&n_iter])
    }

    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.cfg.model.n {
            return Err(ConfigError::new_err(format!("state must have {} entries", self.cfg.model.n)));
        }
        Ok(())
    }
}

#[pymethods]
impl PyLoop {
    #[new]
    #[pyo3(signature = (config, artifact = None, sigma = None))]
    fn new(config: &PyConfig, artifact: Option<&PyArtifact>, sigma: Option<f64>) -> PyResult<Self> {
        let cfg = config.0.clone();
        let art = artifact_or_synth(&cfg, artifact)?;
        runner::check_artifact(&cfg, &art).map_err(to_py)?;
        let sweep = cfg.sweep();
        let entry = match sigma {
            None => sweep[0].clone(),
            Some(s) => sweep
                .into_iter()
                .find(|e| e.sigma == Some(s))
                .ok_or_else(|| ConfigError::new_err(format!("sigma = {s} is not in the sweep")))?,
        };
        let t_star = art.entry_for(entry.sigma).expect("checked above").t_star;
        let setup = runner::build_setup(&cfg, &entry, runner::chain_order(&cfg)).map_err(to_py)?;
        let integrator = runner::integrator_for(&cfg, t_star);
        Ok(PyLoop { setup, t_star, integrator, policies: HashMap::new(), cfg, art, entry })
    }

    #[getter]
    fn t_star(&self) -> f64 {
        self.t_star
    }

    #[getter]
    fn xi(&self) -> Option<f64> {
        self.setup.field.xi
    }

    #[getter]
    fn homogenized(&self) -> bool {
        self.setup.field.homogenized
    }

    /// Guaranteed lower bound on the inter-execution time from plant state x (s).
    #[pyo3(signature = (x, n_iter = 1))]
    fn bound(&mut self, x: Vec<f64>, n_iter: usize) -> PyResult<f64> {
        self.check_dim(&x)?;
        Ok(self.policy(n_iter)?.bound(&x).map_err(to_py)?.tau_lower)
    }

    /// Partial sums of the iterative bound (one per step taken).
    fn partial_sums(&mut self, x: Vec<f64>, n_iter: usize) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        let b = self.policy(n_iter)?.bound(&x).map_err(to_py)?;
        Ok(b.iterations.iter().map(|it| it.partial_sum).collect())
    }

    /// Event-triggered inter-execution time from x (s); inf if none before the horizon.
    fn event_time(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_dim(&x)?;
        let z = self.setup.plant.fresh_state(&x);
        event_time_oracle(&self.setup.plant, &self.setup.plant_gamma, &z, &self.integrator).map_err(to_py)
    }

    /// Γ and its Lie derivatives at the fresh extended state of x.
    fn lie_values(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        self.setup.chain.eval(&self.setup.field.fresh_state(&x)).map_err(|e| to_py(e.into()))
    }
}

/// Linear comparison model with companion matrix built from χ.
#[pyclass(name = "ComparisonModel", module = "pyisochron", frozen)]
struct PyComparisonModel(comparison::ComparisonModel);

fn parse_sense(s: &str) -> PyResult<Sense> {
    match s {
        "lower" => Ok(Sense::Lower),
        "upper" => Ok(Sense::Upper),
        _ => Err(ConfigError::new_err(format!("sense must be 'lower' or 'upper', got '{s}'"))),
    }
}

#[pymethods]
impl PyComparisonModel {
    #[new]
    #[pyo3(signature = (chi, t_star, sense = "lower", region_radius = 1.0))]
    fn new(chi: Vec<f64>, t_star: f64, sense: &str, region_radius: f64) -> PyResult<Self> {
        comparison::ComparisonModel::new(chi, parse_sense(sense)?, region_radius, t_star)
            .map(PyComparisonModel)
            .map_err(to_py)
    }

    #[getter]
    fn p(&self) -> usize {
        self.0.p
    }

    #[getter]
    fn chi(&self) -> Vec<f64> {
        self.0.chi.clone()
    }

    #[getter]
    fn t_star(&self) -> f64 {
        self.0.t_star
    }

    /// First row of exp(A t).
    fn exp_row(&self, t: f64) -> Vec<f64> {
        self.0.exp_row(t)
    }

    /// exp(A t)·y.
    fn evolve(&self, y: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        if y.len() != self.0.p {
            return Err(ConfigError::new_err(format!("state must have p = {} entries", self.0.p)));
        }
        Ok(comparison::bound_evolve(&self.0, &BoundState(y), t).0)
    }
}

#[pyfunction]
fn synthesize(config: &PyConfig) -> PyResult<PyArtifact> {
    runner::synthesize(&config.0).map(PyArtifact).map_err(to_py)
}

/// Average inter-execution times per σ (and iteration count), in seconds.
#[pyfunction]
#[pyo3(signature = (config, artifact = None))]
fn table<'py>(py: Python<'py>, config: &PyConfig, artifact: Option<&PyArtifact>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let art = artifact_or_synth(&config.0, artifact)?;
    let rows = runner::table(&config.0, &art).map_err(to_py)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("sigma", r.sigma)?;
            d.set_item("n_iter", r.n_iter)?;
            d.set_item("periodic", r.periodic)?;
            d.set_item("prev", r.prev)?;
            d.set_item("selftrig", r.selftrig)?;
            d.set_item("event", r.event)?;
            d.set_item("upper", r.upper)?;
            d.set_item("samples", r.samples)?;
            Ok(d)
        })
        .collect()
}

/// Execution instants per strategy for a closed-loop run from x0.
#[pyfunction]
#[pyo3(signature = (config, x0, artifact = None, sigma = None))]
fn trace<'py>(
    py: Python<'py>,
    config: &PyConfig,
    x0: Vec<f64>,
    artifact: Option<&PyArtifact>,
    sigma: Option<f64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let art = artifact_or_synth(&config.0, artifact)?;
    let runs = runner::traces(&config.0, &art, sigma, &x0).map_err(to_py)?;
    runs.iter()
        .map(|(s, tr)| {
            let d = PyDict::new(py);
            d.set_item("sigma", *s)?;
            d.set_item("strategy", &tr.strategy)?;
            d.set_item("exec_instants", &tr.exec_instants)?;
            d.set_item("inter_exec", tr.inter_exec())?;
            Ok(d)
        })
        .collect()
}

/// Re-check coefficients on a fresh sample set.
#[pyfunction]
#[pyo3(signature = (config, artifact = None))]
fn verify<'py>(py: Python<'py>, config: &PyConfig, artifact: Option<&PyArtifact>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rows = runner::verify(&config.0, artifact.map(|a| &a.0)).map_err(to_py)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("sigma", r.sigma)?;
            d.set_item("model", r.role)?;
            d.set_item("p", r.p)?;
            d.set_item("samples", r.report.samples)?;
            d.set_item("violations", r.report.violations)?;
            d.set_item("max_residual", r.report.max_residual)?;
            d.set_item("passed", r.report.passed)?;
            Ok(d)
        })
        .collect()
}

/// Smallest positive root bound of β0 + β1 q + β2 q², times t*.
#[pyfunction]
fn tau_closed_form(beta: Vec<f64>, t_star: f64) -> PyResult<f64> {
    selftrigger::tau_closed_form_p3(&BetaVector(beta), 0.0, t_star).map(|b| b.tau_lower).map_err(to_py)
}

/// Smallest positive root bound of Σ βi q^i, times t*.
#[pyfunction]
fn tau_poly_root(beta: Vec<f64>, t_star: f64) -> PyResult<f64> {
    selftrigger::tau_poly_root(&BetaVector(beta), 0.0, t_star).map(|b| b.tau_lower).map_err(to_py)
}

#[pyfunction]
fn matrix_exp(a: Vec<Vec<f64>>, t: f64) -> PyResult<Vec<Vec<f64>>> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) {
        return Err(ConfigError::new_err("matrix must be square"));
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let e = comparison::matrix_exp(&m, t);
    Ok((0..n).map(|i| (0..n).map(|j| e[(i, j)]).collect()).collect())
}

#[pymodule]
fn pyisochron(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExpr>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyArtifact>()?;
    m.add_class::<PyLoop>()?;
    m.add_class::<PyComparisonModel>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(table, m)?)?;
    m.add_function(wrap_pyfunction!(trace, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(tau_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(tau_poly_root, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_exp, m)?)?;
    let py = m.py();
    m.add("IsochronError", py.get_type::<IsochronError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("InfeasibleError", py.get_type::<InfeasibleError>())?;
    m.add("SimulationError", py.get_type::<SimulationError>())?;
    Ok(())
}
