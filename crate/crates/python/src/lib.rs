//! Python bindings: `import fresh_csma`.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fresh_csma_core::analysis::{self, PsiArgs};
use fresh_csma_core::engine::TimeIntegration;
use fresh_csma_core::experiment::{self, ExperimentSpec, PRESET_NAMES};
use fresh_csma_core::params::{aoi_defaults, aoii_defaults};
use fresh_csma_core::verify::{self, Theorem};
use fresh_csma_core::{
    policy, special, timer, BackoffParams, Engine, Error, FrameOutcome, LogBase, NetworkConfig, PolicyKind,
    SimulationResult, StopRule,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Csv(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_log_base(s: &str) -> PyResult<LogBase> {
    match s {
        "natural" | "e" => Ok(LogBase::Natural),
        "ten" | "10" => Ok(LogBase::Ten),
        _ => Err(PyValueError::new_err(format!("unknown log base '{s}'"))),
    }
}

fn parse_policy(s: &str) -> PyResult<PolicyKind> {
    s.parse().map_err(py_err)
}

/// Backoff parameters (α, β, B, M, δ).
#[pyclass(name = "BackoffParams", module = "fresh_csma", from_py_object)]
#[derive(Clone, Copy)]
struct PyBackoffParams {
    inner: BackoffParams,
}

#[pymethods]
impl PyBackoffParams {
    #[new]
    #[pyo3(signature = (alpha, beta, b_offset, minislots_per_update = 10_000, delta_scale = 0.1))]
    fn new(alpha: f64, beta: f64, b_offset: u64, minislots_per_update: u64, delta_scale: f64) -> PyResult<Self> {
        let inner = BackoffParams {
            alpha,
            beta,
            b_offset,
            minislots_per_update,
            delta_scale,
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (weights, log_base = "ten"))]
    fn aoi_defaults(weights: Vec<f64>, log_base: &str) -> PyResult<Self> {
        Ok(Self {
            inner: aoi_defaults(&weights, parse_log_base(log_base)?),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n_sources, log_base = "ten"))]
    fn aoii_defaults(n_sources: usize, log_base: &str) -> PyResult<Self> {
        Ok(Self {
            inner: aoii_defaults(n_sources, parse_log_base(log_base)?),
        })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }
    #[getter]
    fn b_offset(&self) -> u64 {
        self.inner.b_offset
    }
    #[getter]
    fn minislots_per_update(&self) -> u64 {
        self.inner.minislots_per_update
    }
    #[getter]
    fn delta_scale(&self) -> f64 {
        self.inner.delta_scale
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "BackoffParams(alpha={}, beta={}, b_offset={}, minislots_per_update={}, delta_scale={})",
            p.alpha, p.beta, p.b_offset, p.minislots_per_update, p.delta_scale
        )
    }
}

fn result_dict<'py>(py: Python<'py>, r: &SimulationResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("policy", r.policy.name())?;
    d.set_item("normalized_weighted_avg_aoi", r.normalized_weighted_avg_aoi)?;
    d.set_item("per_source_avg_aoi", r.per_source_avg_aoi.clone())?;
    d.set_item("per_source_avg_frame_age", r.per_source_avg_frame_age.clone())?;
    d.set_item("normalized_avg_aoii", r.normalized_avg_aoii)?;
    d.set_item("per_source_avg_aoii", r.per_source_avg_aoii.clone())?;
    d.set_item("collision_rate", r.collision_rate)?;
    d.set_item("avg_overhead_minislots", r.avg_overhead_minislots)?;
    d.set_item("frames", r.frames)?;
    d.set_item("deliveries", r.deliveries)?;
    d.set_item("elapsed_time", r.elapsed_time)?;
    d.set_item("seed", r.seed)?;
    Ok(d)
}

fn outcome_dict<'py>(py: Python<'py>, o: &FrameOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("winners", o.winners.clone())?;
    d.set_item("delivered", o.delivered)?;
    d.set_item("collided", o.collided)?;
    d.set_item("frame_duration", o.frame_duration)?;
    d.set_item("overhead_minislots", o.overhead_minislots())?;
    Ok(d)
}

fn build_engine(
    policy: &str,
    weights: Vec<f64>,
    params: Option<PyBackoffParams>,
    seed: u64,
    markov_q: Option<f64>,
) -> PyResult<Engine> {
    let kind = parse_policy(policy)?;
    let n = weights.len();
    let params = match params {
        Some(p) => p.inner,
        None if kind.uses_aoii() => aoii_defaults(n, LogBase::default()),
        None => aoi_defaults(&weights, LogBase::default()),
    };
    let config = NetworkConfig::new(weights, 1, seed).map_err(py_err)?;
    Engine::new(&config, kind, &params, markov_q.map(|q| vec![q; n]), TimeIntegration::default()).map_err(py_err)
}

/// A steppable simulation of one policy.
#[pyclass(name = "Simulation", module = "fresh_csma")]
struct PySimulation {
    engine: Engine,
}

#[pymethods]
impl PySimulation {
    #[new]
    #[pyo3(signature = (policy, weights, params = None, seed = 1, markov_q = None))]
    fn new(
        policy: &str,
        weights: Vec<f64>,
        params: Option<PyBackoffParams>,
        seed: u64,
        markov_q: Option<f64>,
    ) -> PyResult<Self> {
        Ok(Self {
            engine: build_engine(policy, weights, params, seed, markov_q)?,
        })
    }

    /// Advances one frame and returns its outcome.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let o = self.engine.step().map_err(py_err)?;
        outcome_dict(py, &o)
    }

    /// Runs `frames` more frames, or until `deliveries` total deliveries.
    #[pyo3(signature = (frames = None, deliveries = None, max_frames = None))]
    fn run(&mut self, frames: Option<u64>, deliveries: Option<u64>, max_frames: Option<u64>) -> PyResult<()> {
        let stop = match (frames, deliveries) {
            (Some(f), None) => StopRule::Frames(self.engine.metrics().frame_count + f),
            (None, Some(target)) => StopRule::Deliveries {
                target,
                max_frames: max_frames.unwrap_or(u64::MAX),
            },
            _ => return Err(PyValueError::new_err("give exactly one of frames or deliveries")),
        };
        self.engine.run_until(stop).map_err(py_err)
    }

    #[getter]
    fn frame_age(&self) -> Vec<u64> {
        self.engine.ages().frame_age.clone()
    }

    #[getter]
    fn clock_age(&self) -> Vec<f64> {
        self.engine.ages().clock_age.clone()
    }

    #[getter]
    fn aoii(&self) -> Option<Vec<u64>> {
        self.engine.markov().map(|m| m.aoii.clone())
    }

    fn result<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        result_dict(py, &self.engine.result())
    }
}

/// Runs one policy until `deliveries` updates are delivered.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (policy, weights, deliveries = 100_000, params = None, seed = 1, markov_q = None, max_frame_factor = 10))]
fn simulate<'py>(
    py: Python<'py>,
    policy: &str,
    weights: Vec<f64>,
    deliveries: u64,
    params: Option<PyBackoffParams>,
    seed: u64,
    markov_q: Option<f64>,
    max_frame_factor: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut engine = build_engine(policy, weights, params, seed, markov_q)?;
    let stop = StopRule::Deliveries {
        target: deliveries,
        max_frames: deliveries.saturating_mul(max_frame_factor),
    };
    py.detach(|| engine.run_until(stop)).map_err(py_err)?;
    result_dict(py, &engine.result())
}

#[pyfunction]
fn policy_names() -> Vec<&'static str> {
    PolicyKind::ALL.iter().map(|k| k.name()).collect()
}

#[pyfunction]
fn scheduling_probabilities(exponents: Vec<f64>, alpha: f64) -> Vec<f64> {
    policy::scheduling_prob_closed_form(&exponents, alpha)
}

#[pyfunction]
fn stationary_randomized_probabilities(weights: Vec<f64>) -> Vec<f64> {
    policy::stationary_randomized_probs(&weights)
}

#[pyfunction]
fn discretize_timer(z: f64, params: PyBackoffParams) -> PyResult<u64> {
    timer::discretize_timer(z, &params.inner).map_err(py_err)
}

/// ψ(B, β, λ_i, λ_j) with the rates given in log form.
#[pyfunction]
fn psi(b_offset: u64, beta: f64, log_lambda_i: f64, log_lambda_j: f64) -> PyResult<f64> {
    analysis::psi(PsiArgs {
        b_offset,
        beta,
        log_lambda_i,
        log_lambda_j,
    })
    .map_err(py_err)
}

/// Lower bound on P(D_i != D_j).
#[pyfunction]
fn distinct_timer_bound(b_offset: u64, beta: f64, log_lambda_i: f64, log_lambda_j: f64) -> PyResult<f64> {
    analysis::distinct_timer_bound(PsiArgs {
        b_offset,
        beta,
        log_lambda_i,
        log_lambda_j,
    })
    .map_err(py_err)
}

/// Γ(0, x), the exponential integral E1.
#[pyfunction]
fn gamma0(x: f64) -> PyResult<f64> {
    special::gamma_upper_incomplete_zero(x).map_err(py_err)
}

/// Expected idle time per frame at the given ages, in minislots.
#[pyfunction]
fn overhead_upper_bound(frame_age: Vec<u64>, weights: Vec<f64>, params: PyBackoffParams) -> PyResult<f64> {
    let t = analysis::overhead_upper_bound(&frame_age, &weights, &params.inner).map_err(py_err)?;
    Ok(t * params.inner.minislots_per_update as f64)
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    PRESET_NAMES.to_vec()
}

fn run_to_csv(py: Python<'_>, spec: ExperimentSpec) -> PyResult<String> {
    py.detach(|| experiment::run_experiment(&spec).and_then(|t| t.to_csv_string()))
        .map_err(py_err)
}

/// Runs a figure preset and returns the CSV text.
#[pyfunction]
#[pyo3(signature = (name, seed = None, horizon_deliveries = None))]
fn run_preset(py: Python<'_>, name: &str, seed: Option<u64>, horizon_deliveries: Option<u64>) -> PyResult<String> {
    let mut spec = experiment::preset(name).map_err(py_err)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(h) = horizon_deliveries {
        spec.horizon_deliveries = h;
    }
    run_to_csv(py, spec)
}

/// Runs an experiment from TOML config text and returns the CSV text.
#[pyfunction]
fn run_config(py: Python<'_>, toml_text: &str) -> PyResult<String> {
    run_to_csv(py, ExperimentSpec::from_toml_str(toml_text).map_err(py_err)?)
}

#[pyfunction]
#[pyo3(name = "verify", signature = (theorem, trials = None, seed = 1))]
fn verify_theorem<'py>(
    py: Python<'py>,
    theorem: &str,
    trials: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let t: Theorem = theorem.parse().map_err(py_err)?;
    let r = py.detach(|| verify::verify(t, trials, seed)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("theorem", r.theorem.name())?;
    d.set_item("passed", r.passed)?;
    d.set_item("checks", r.checks)?;
    d.set_item("failures", r.failures)?;
    d.set_item("trials", r.trials)?;
    d.set_item("worst_margin", r.worst_margin)?;
    d.set_item("worst_case", r.worst_case)?;
    Ok(d)
}

#[pymodule]
fn fresh_csma(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBackoffParams>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(policy_names, m)?)?;
    m.add_function(wrap_pyfunction!(scheduling_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_randomized_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(discretize_timer, m)?)?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(distinct_timer_bound, m)?)?;
    m.add_function(wrap_pyfunction!(gamma0, m)?)?;
    m.add_function(wrap_pyfunction!(overhead_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(verify_theorem, m)?)?;
    Ok(())
}
