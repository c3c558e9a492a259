//! Python bindings: uncertainty sets, solvers, objectives, schedules and the
//! configuration-driven experiment runner.

// pyo3 0.22 macro expansion trips this lint on every `PyResult` function
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::robust_sched::cli::{run_experiment, run_to_disk, ExperimentConfig};
use ::robust_sched::{self as rs, GroupLosses, GroupWeights, SolverConfig};

fn err(e: rs::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_weights(v: Vec<f64>) -> PyResult<GroupWeights> {
    GroupWeights::new(v).map_err(err)
}

fn group_losses(v: Vec<f64>) -> PyResult<GroupLosses> {
    GroupLosses::new(v).map_err(err)
}

fn solver(dual_tolerance: f64, max_iterations: usize) -> SolverConfig {
    SolverConfig {
        dual_tolerance,
        max_iterations,
    }
}

#[pyclass(name = "UncertaintySet", module = "robust_sched", frozen)]
#[derive(Clone)]
struct PyUncertaintySet {
    inner: rs::UncertaintySet,
}

#[pymethods]
impl PyUncertaintySet {
    #[staticmethod]
    fn singleton(center: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: rs::UncertaintySet::singleton(to_weights(center)?),
        })
    }

    #[staticmethod]
    fn full_simplex() -> Self {
        Self {
            inner: rs::UncertaintySet::FullSimplex,
        }
    }

    #[staticmethod]
    fn cvar(alpha: f64, center: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: rs::UncertaintySet::cvar(alpha, to_weights(center)?).map_err(err)?,
        })
    }

    #[staticmethod]
    fn chi_square(rho: f64, center: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: rs::UncertaintySet::chi_square(rho, to_weights(center)?).map_err(err)?,
        })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    #[getter]
    fn center(&self) -> Option<Vec<f64>> {
        self.inner.center().map(|c| c.as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("UncertaintySet({:?})", self.inner)
    }
}

#[pyclass(name = "BestResponse", module = "robust_sched", frozen, get_all)]
struct PyBestResponse {
    q: Vec<f64>,
    objective: f64,
    active: bool,
}

#[pymethods]
impl PyBestResponse {
    fn __repr__(&self) -> String {
        format!(
            "BestResponse(q={:?}, objective={}, active={})",
            self.q, self.objective, self.active
        )
    }
}

/// Per-group exponential moving average of observed losses.
#[pyclass(name = "LossTracker", module = "robust_sched")]
struct PyLossTracker {
    inner: rs::LossTracker,
}

#[pymethods]
impl PyLossTracker {
    #[new]
    fn new(groups: usize, ema_lambda: f64) -> PyResult<Self> {
        Ok(Self {
            inner: rs::LossTracker::new(groups, ema_lambda).map_err(err)?,
        })
    }

    fn update(&mut self, group: usize, loss: f64) -> PyResult<()> {
        self.inner.update(group, loss).map_err(err)
    }

    #[getter]
    fn ema(&self) -> Vec<f64> {
        self.inner.ema().to_vec()
    }

    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.inner.counts().to_vec()
    }
}

#[pyfunction]
fn chi_square_divergence(q: Vec<f64>, p: Vec<f64>) -> PyResult<f64> {
    rs::chi_square_divergence(&to_weights(q)?, &to_weights(p)?).map_err(err)
}

#[pyfunction]
fn temperature_distribution(sizes: Vec<u64>, tau: f64) -> PyResult<Vec<f64>> {
    Ok(rs::temperature_distribution(&sizes, tau)
        .map_err(err)?
        .into_vec())
}

#[pyfunction]
fn training_distribution(sizes: Vec<u64>) -> PyResult<Vec<f64>> {
    Ok(rs::training_distribution(&sizes).map_err(err)?.into_vec())
}

#[pyfunction]
#[pyo3(signature = (v, set, dual_tolerance = 1e-10, max_iterations = 200))]
fn best_response(
    v: Vec<f64>,
    set: &PyUncertaintySet,
    dual_tolerance: f64,
    max_iterations: usize,
) -> PyResult<PyBestResponse> {
    let br = rs::best_response(
        &group_losses(v)?,
        &set.inner,
        &solver(dual_tolerance, max_iterations),
    )
    .map_err(err)?;
    Ok(PyBestResponse {
        q: br.q.into_vec(),
        objective: br.objective,
        active: br.active,
    })
}

#[pyfunction]
#[pyo3(signature = (v, rho, center, dual_tolerance = 1e-10, max_iterations = 200))]
fn project_chi_square(
    v: Vec<f64>,
    rho: f64,
    center: Vec<f64>,
    dual_tolerance: f64,
    max_iterations: usize,
) -> PyResult<Vec<f64>> {
    let q = rs::project_chi_square(
        &v,
        rho,
        &to_weights(center)?,
        &solver(dual_tolerance, max_iterations),
    )
    .map_err(err)?;
    Ok(q.into_vec())
}

#[pyfunction]
fn weighted_loss(losses: Vec<f64>, weights: Vec<f64>) -> PyResult<f64> {
    rs::weighted_loss(&group_losses(losses)?, &to_weights(weights)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (losses, set, baselines = None))]
fn robust_loss(
    losses: Vec<f64>,
    set: &PyUncertaintySet,
    baselines: Option<Vec<f64>>,
) -> PyResult<f64> {
    let b = baselines
        .map(|b| rs::Baselines::new(b, "python"))
        .transpose()
        .map_err(err)?;
    rs::robust_loss(
        &group_losses(losses)?,
        &set.inner,
        b.as_ref(),
        &SolverConfig::default(),
    )
    .map_err(err)
}

/// Learning rate at a 1-based step; `schedule_json` is a schedule object as
/// written in experiment configs.
#[pyfunction]
fn lr_at(schedule_json: &str, step: u64) -> PyResult<f64> {
    let s: rs::LrSchedule =
        serde_json::from_str(schedule_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    s.validate().map_err(err)?;
    Ok(s.lr_at(step))
}

/// Per-group draw counts and replacement flags for one resampled epoch.
#[pyfunction]
fn make_resample_plan(
    q: Vec<f64>,
    group_sizes: Vec<u64>,
    target_total: u64,
) -> PyResult<(Vec<u64>, Vec<bool>)> {
    let plan = rs::make_resample_plan(&to_weights(q)?, &group_sizes, target_total).map_err(err)?;
    Ok((plan.counts, plan.with_replacement))
}

/// Runs one experiment from a JSON config and returns its summary. Artifacts
/// are written only when `write` is true (to the config's `output_dir`).
#[pyfunction]
#[pyo3(signature = (config_json, write = false))]
fn run<'py>(py: Python<'py>, config_json: &str, write: bool) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(err)?;
    let report = py
        .allow_threads(|| {
            if write {
                run_to_disk(&cfg)
            } else {
                run_experiment(&cfg)
            }
        })
        .map_err(err)?;
    let out = PyDict::new_bound(py);
    out.set_item("label", &report.label)?;
    out.set_item("group_ids", &report.group_ids)?;
    out.set_item("average_loss", report.average_loss)?;
    out.set_item("worst_group_loss", report.worst_group_loss)?;
    out.set_item("robust_loss", report.robust_loss)?;
    out.set_item("final_losses", report.final_losses.as_slice())?;
    out.set_item("final_q", report.outcome.final_q.as_slice())?;
    out.set_item("theta", &report.outcome.params.theta)?;
    out.set_item("steps", report.outcome.steps)?;
    let q_trajectory: Vec<Vec<f64>> = report
        .outcome
        .trajectory
        .iter()
        .map(|r| r.q.clone())
        .collect();
    out.set_item("q_trajectory", q_trajectory)?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "robust_sched")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyUncertaintySet>()?;
    m.add_class::<PyBestResponse>()?;
    m.add_class::<PyLossTracker>()?;
    m.add_function(wrap_pyfunction!(chi_square_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(temperature_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(training_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(best_response, m)?)?;
    m.add_function(wrap_pyfunction!(project_chi_square, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_loss, m)?)?;
    m.add_function(wrap_pyfunction!(robust_loss, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    m.add_function(wrap_pyfunction!(make_resample_plan, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
