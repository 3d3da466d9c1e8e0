//! Python bindings: problems, runs, trajectories, memory accounting and the
//! oracle suite.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use zovr::harness::accounting::{AccountingMode, OVERHEAD_SLOTS};
use zovr::harness::config::{Problem, ProblemSpec, RunConfig};
use zovr::harness::records::save_records;
use zovr::harness::{account_memory, verify};
use zovr::optimizers::RunRecord;
use zovr::trajectory::{load_params, save_params};
use zovr::{OptimizerKind, ParamVector, TrajectoryLog, ZoError};

create_exception!(zovr, ZovrError, PyException);

fn err(e: ZoError) -> PyErr {
    ZovrError::new_err(e.to_string())
}

fn params(values: Vec<f64>) -> PyResult<ParamVector> {
    ParamVector::new(values).map_err(err)
}

/// An objective with its starting point.
#[pyclass(name = "Problem", module = "zovr", frozen)]
struct PyProblem {
    inner: Problem,
}

impl PyProblem {
    fn build(spec: ProblemSpec) -> PyResult<Self> {
        Ok(Self {
            inner: spec.build().map_err(err)?,
        })
    }

    fn checked(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        let d = self.inner.objective().dim();
        if theta.len() != d {
            return Err(err(ZoError::DimensionMismatch {
                expected: d,
                actual: theta.len(),
            }));
        }
        Ok(theta)
    }
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    #[pyo3(signature = (n=1000, d=100, noise_std=0.01, seed=0))]
    fn least_squares(n: usize, d: usize, noise_std: f64, seed: u64) -> PyResult<Self> {
        Self::build(ProblemSpec::LeastSquares { n, d, noise_std, seed })
    }

    #[staticmethod]
    #[pyo3(signature = (n=1000, d=20, separation=2.0, seed=0))]
    fn logistic(n: usize, d: usize, separation: f64, seed: u64) -> PyResult<Self> {
        Self::build(ProblemSpec::Logistic { n, d, separation, seed })
    }

    /// Two-hidden-layer MLP on IDX files, or on synthetic digits when no
    /// paths are given.
    #[staticmethod]
    #[pyo3(signature = (samples=512, images=None, labels=None, seed=0))]
    fn mlp(samples: usize, images: Option<PathBuf>, labels: Option<PathBuf>, seed: u64) -> PyResult<Self> {
        Self::build(ProblemSpec::Mlp {
            samples,
            images,
            labels,
            seed,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.objective().dim()
    }

    #[getter]
    fn num_samples(&self) -> usize {
        self.inner.objective().num_samples()
    }

    #[getter]
    fn f_star(&self) -> Option<f64> {
        self.inner.f_star
    }

    #[getter]
    fn theta0(&self) -> Vec<f64> {
        self.inner.theta0.to_vec()
    }

    fn loss(&self, theta: Vec<f64>) -> PyResult<f64> {
        self.inner.objective().full_loss(&self.checked(theta)?).map_err(err)
    }

    fn grad(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.objective().full_grad(&self.checked(theta)?).map_err(err)
    }

    fn metric(&self, theta: Vec<f64>) -> PyResult<Option<f64>> {
        Ok(self.inner.objective().metric(&self.checked(theta)?))
    }
}

/// Seed-replay log of a MeZO or MeZO-SVRG run.
#[pyclass(name = "Trajectory", module = "zovr", frozen)]
struct PyTrajectory {
    inner: TrajectoryLog,
}

#[pymethods]
impl PyTrajectory {
    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: TrajectoryLog::from_bytes(data).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: TrajectoryLog::load(&path).map_err(err)?,
        })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.inner.steps()
    }

    /// Parameters after `step` steps (default: all), without objective calls.
    #[pyo3(signature = (theta0, step=None))]
    fn replay(&self, theta0: Vec<f64>, step: Option<u64>) -> PyResult<Vec<f64>> {
        let step = step.unwrap_or_else(|| self.inner.steps());
        zovr::replay(&self.inner, &params(theta0)?, step)
            .map(ParamVector::into_inner)
            .map_err(err)
    }
}

#[pyclass(name = "RunResult", module = "zovr", frozen)]
struct PyRunResult {
    #[pyo3(get)]
    theta: Vec<f64>,
    #[pyo3(get)]
    steps: u64,
    #[pyo3(get)]
    total_queries: u64,
    #[pyo3(get)]
    initial_loss: f64,
    #[pyo3(get)]
    final_loss: Option<f64>,
    #[pyo3(get)]
    diverged: bool,
    #[pyo3(get)]
    failure: Option<String>,
    records: Vec<RunRecord>,
    trajectory: Option<TrajectoryLog>,
}

#[pymethods]
impl PyRunResult {
    /// One dict per emitted row, keyed by CSV column.
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.records
            .iter()
            .map(|r| {
                let row = PyDict::new(py);
                row.set_item("step", r.step)?;
                row.set_item("cumulative_queries", r.cumulative_queries)?;
                row.set_item("train_loss", r.train_loss)?;
                row.set_item("eval_metric", r.eval_metric)?;
                row.set_item("eta1", r.eta1)?;
                row.set_item("eta2", r.eta2)?;
                row.set_item("kind", r.kind.as_str())?;
                row.set_item("peak_slots", r.peak_slots)?;
                row.set_item("elapsed_seconds", r.elapsed_seconds)?;
                row.set_item("backward_queries", r.backward_queries)?;
                row.set_item("gap", r.gap)?;
                row.set_item("batch_loss", r.batch_loss)?;
                row.set_item("max_step_queries", r.max_step_queries)?;
                Ok(row)
            })
            .collect()
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        save_records(&path, &self.records, &[]).map_err(err)
    }

    #[getter]
    fn trajectory(&self) -> Option<PyTrajectory> {
        self.trajectory.clone().map(|inner| PyTrajectory { inner })
    }
}

/// Runs a configuration given as `key = value` pairs, e.g.
/// `run({"optimizer": "mezo", "steps": 100})`. Values are converted with
/// `str()`. With `record_trajectory`, MeZO and MeZO-SVRG runs keep a replay log.
#[pyfunction]
#[pyo3(signature = (config=None, record_trajectory=false))]
fn run(
    py: Python<'_>,
    config: Option<HashMap<String, Bound<'_, PyAny>>>,
    record_trajectory: bool,
) -> PyResult<PyRunResult> {
    let pairs = config
        .unwrap_or_default()
        .into_iter()
        .map(|(k, v)| Ok((k, v.str()?.to_string())))
        .collect::<PyResult<Vec<_>>>()?;
    let cfg = RunConfig::from_pairs(pairs).map_err(err)?;
    if record_trajectory && !cfg.optimizer.kind().replayable() {
        return Err(ZovrError::new_err(format!(
            "{} runs cannot be replayed",
            cfg.optimizer.kind()
        )));
    }
    let outcome = py
        .detach(|| -> zovr::Result<_> {
            let problem = cfg.problem.build()?;
            let mut spec = cfg.run_spec(problem.f_star);
            spec.record_trajectory = record_trajectory;
            zovr::run(problem.objective(), &problem.theta0, &spec)
        })
        .map_err(err)?;
    Ok(PyRunResult {
        theta: outcome.theta.to_vec(),
        steps: outcome.steps,
        total_queries: outcome.total_queries,
        initial_loss: outcome.initial_loss,
        final_loss: outcome.final_loss,
        diverged: outcome.diverged(),
        failure: outcome.failure.as_ref().map(|f| f.reason.clone()),
        records: outcome.records,
        trajectory: outcome.trajectory,
    })
}

/// Modeled peak float slots for an optimizer and accounting mode.
#[pyfunction]
#[pyo3(signature = (optimizer, d, mode="store_g"))]
fn peak_slots(optimizer: &str, d: u64, mode: &str) -> PyResult<u64> {
    let kind: OptimizerKind = optimizer.parse().map_err(err)?;
    let mode: AccountingMode = mode.parse().map_err(err)?;
    account_memory(kind, mode, d).map(|m| m.peak_slots()).map_err(err)
}

/// Runs the oracle suite; returns `(name, passed, detail)` per check.
#[pyfunction]
fn run_oracles(py: Python<'_>) -> Vec<(String, bool, String)> {
    py.detach(verify::run_all)
        .into_iter()
        .map(|r| (r.name.to_string(), r.passed, r.detail))
        .collect()
}

#[pyfunction]
fn write_params(theta: Vec<f64>, path: PathBuf) -> PyResult<()> {
    save_params(&params(theta)?, &path).map_err(err)
}

#[pyfunction]
fn read_params(path: PathBuf) -> PyResult<Vec<f64>> {
    load_params(&path).map(ParamVector::into_inner).map_err(err)
}

#[pymodule(name = "zovr")]
fn zovr_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("OVERHEAD_SLOTS", OVERHEAD_SLOTS)?;
    m.add("ZovrError", m.py().get_type::<ZovrError>())?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(peak_slots, m)?)?;
    m.add_function(wrap_pyfunction!(run_oracles, m)?)?;
    m.add_function(wrap_pyfunction!(write_params, m)?)?;
    m.add_function(wrap_pyfunction!(read_params, m)?)?;
    Ok(())
}
