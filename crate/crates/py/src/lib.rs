//! Python bindings. Structured results (metrics, reports, artifacts) are
//! returned as plain dicts.

use bloomclock as bc;
use bloomclock::{EventIndex, ProcessId};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: bc::Error) -> PyErr {
    match e {
        bc::Error::Numeric(_) | bc::Error::Overflow { .. } => PyArithmeticError::new_err(e.to_string()),
        bc::Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn dict<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "HashFamily", module = "bloomclock_py", frozen)]
struct PyHashFamily(bc::HashFamily);

#[pymethods]
impl PyHashFamily {
    #[new]
    #[pyo3(signature = (k, m, seed = 0))]
    fn new(k: u32, m: usize, seed: u64) -> PyResult<Self> {
        bc::HashFamily::new(k, m, seed).map(Self).map_err(to_py)
    }

    /// Counter indices incremented by event `x` of process `pid`.
    fn indices(&self, pid: u32, x: u64) -> Vec<usize> {
        self.0.derive(ProcessId(pid), EventIndex(x))
    }

    #[getter]
    fn k(&self) -> u32 {
        self.0.k()
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m()
    }
}

#[pyclass(name = "BloomClock", module = "bloomclock_py", eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyBloomClock(bc::BloomClock);

#[pymethods]
impl PyBloomClock {
    #[new]
    fn new(m: usize) -> Self {
        Self(bc::BloomClock::new(m))
    }

    #[staticmethod]
    fn from_counters(counters: Vec<u64>) -> Self {
        Self(bc::BloomClock::from_counters(counters))
    }

    fn tick(&mut self, pid: u32, x: u64, family: &PyHashFamily) -> PyResult<()> {
        self.0.tick(ProcessId(pid), EventIndex(x), &family.0).map_err(to_py)
    }

    fn merge(&mut self, other: &PyBloomClock) -> PyResult<()> {
        self.0.merge(&other.0).map_err(to_py)
    }

    fn leq(&self, other: &PyBloomClock) -> PyResult<bool> {
        self.0.leq(&other.0).map_err(to_py)
    }

    fn copy(&self) -> Self {
        self.clone()
    }

    #[getter]
    fn counters(&self) -> Vec<u64> {
        self.0.counters().to_vec()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    fn sum(&self) -> u64 {
        self.0.sum()
    }

    fn __repr__(&self) -> String {
        format!("BloomClock({:?})", self.0.counters())
    }
}

#[pyclass(name = "VectorClock", module = "bloomclock_py", eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyVectorClock(bc::VectorClock);

#[pymethods]
impl PyVectorClock {
    #[new]
    fn new(n: usize) -> Self {
        Self(bc::VectorClock::new(n))
    }

    #[staticmethod]
    fn from_counters(counters: Vec<u64>) -> Self {
        Self(bc::VectorClock::from_counters(counters))
    }

    fn tick(&mut self, pid: u32) -> PyResult<()> {
        self.0.tick(ProcessId(pid)).map_err(to_py)
    }

    fn merge(&mut self, other: &PyVectorClock) -> PyResult<()> {
        self.0.merge(&other.0).map_err(to_py)
    }

    fn leq(&self, other: &PyVectorClock) -> PyResult<bool> {
        self.0.leq(&other.0).map_err(to_py)
    }

    fn happened_before(&self, other: &PyVectorClock) -> PyResult<bool> {
        self.0.happened_before(&other.0).map_err(to_py)
    }

    fn copy(&self) -> Self {
        self.clone()
    }

    #[getter]
    fn counters(&self) -> Vec<u64> {
        self.0.counters().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("VectorClock({:?})", self.0.counters())
    }
}

fn config(
    topology: &str,
    n: usize,
    m: usize,
    k: u32,
    pr_i: f64,
    seed: u64,
    gsn_limit: Option<u64>,
) -> PyResult<bc::ExperimentConfig> {
    let topology: bc::Topology = topology.parse().map_err(to_py)?;
    let mut cfg = bc::ExperimentConfig::new(topology, n, m, k, pr_i, seed);
    cfg.gsn_limit = gsn_limit;
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

fn slice(n: usize, start: Option<u64>, stride: Option<u64>, end: Option<u64>) -> bc::SliceSpec {
    let mut spec = bc::SliceSpec::for_processes(n);
    spec.start_gsn = start.unwrap_or(spec.start_gsn);
    spec.stride = stride.unwrap_or(spec.stride);
    spec.end_gsn = end;
    spec
}

/// A simulated execution with its vector and bloom timestamps.
#[pyclass(name = "ExecutionLog", module = "bloomclock_py", frozen)]
struct PyExecutionLog(bc::ExecutionLog);

#[pymethods]
impl PyExecutionLog {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Event at `gsn` as a dict.
    fn event<'py>(&self, py: Python<'py>, gsn: u64) -> PyResult<Bound<'py, PyAny>> {
        let ev = self
            .0
            .event(gsn)
            .ok_or_else(|| PyValueError::new_err(format!("no event with gsn {gsn}")))?;
        dict(py, ev)
    }

    fn bloom(&self, gsn: u64) -> PyResult<PyBloomClock> {
        self.0
            .event(gsn)
            .map(|e| PyBloomClock(e.bloom_ts.clone()))
            .ok_or_else(|| PyValueError::new_err(format!("no event with gsn {gsn}")))
    }

    fn vector(&self, gsn: u64) -> PyResult<PyVectorClock> {
        self.0
            .event(gsn)
            .map(|e| PyVectorClock(e.vector_ts.clone()))
            .ok_or_else(|| PyValueError::new_err(format!("no event with gsn {gsn}")))
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        dict(py, &self.0.config)
    }

    #[pyo3(signature = (start = None, stride = None, end = None))]
    fn slice_metrics<'py>(
        &self,
        py: Python<'py>,
        start: Option<u64>,
        stride: Option<u64>,
        end: Option<u64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let spec = slice(self.0.config.n, start, stride, end);
        let report = bc::slice_metrics(&self.0, &spec).map_err(to_py)?;
        dict(py, &report)
    }

    fn curve<'py>(&self, py: Python<'py>, y_gsn: u64, z_from: u64, z_to: u64) -> PyResult<Bound<'py, PyAny>> {
        let rows = bc::probability_curve(&self.0, y_gsn, z_from, z_to).map_err(to_py)?;
        dict(py, &rows)
    }

    fn verify_replay(&self) -> PyResult<()> {
        bc::verify_replay(&self.0).map_err(to_py)
    }

    fn persist(&self, path: &str) -> PyResult<()> {
        bc::persist_trace(&self.0, path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        bc::load_trace(path).map(Self).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (topology, n, m, k = 2, pr_i = 0.0, seed = 1, gsn_limit = None))]
fn simulate(
    topology: &str,
    n: usize,
    m: usize,
    k: u32,
    pr_i: f64,
    seed: u64,
    gsn_limit: Option<u64>,
) -> PyResult<PyExecutionLog> {
    let cfg = config(topology, n, m, k, pr_i, seed, gsn_limit)?;
    bc::simulate(&cfg).map(PyExecutionLog).map_err(to_py)
}

/// Mean slice metrics over `seeds` (default 1, 2, 3).
#[pyfunction]
#[pyo3(signature = (topology, n, m, k = 2, pr_i = 0.0, seeds = None, gsn_limit = None, slice_start = None, slice_stride = None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    topology: &str,
    n: usize,
    m: usize,
    k: u32,
    pr_i: f64,
    seeds: Option<Vec<u64>>,
    gsn_limit: Option<u64>,
    slice_start: Option<u64>,
    slice_stride: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let seeds = seeds.unwrap_or_else(|| bc::default_seeds(bc::DEFAULT_RUNS));
    let cfg = config(topology, n, m, k, pr_i, seeds.first().copied().unwrap_or(1), gsn_limit)?;
    let spec = slice(n, slice_start, slice_stride, None);
    let artifact = py
        .detach(|| bc::run_experiment(&cfg, &seeds, Some(spec)))
        .map_err(to_py)?;
    dict(py, &artifact)
}

#[pyfunction]
fn binom_pmf(l: u64, q: u64, m: usize) -> PyResult<f64> {
    bc::binom_pmf(l, q, m).map(|p| p.value()).map_err(to_py)
}

#[pyfunction]
fn count_threshold_cdf(c: u64, q: u64, m: usize) -> PyResult<f64> {
    bc::count_threshold_cdf(c, q, m).map(|p| p.value()).map_err(to_py)
}

#[pyfunction]
fn poisson_cdf_via_gamma(c: u64, lam: f64) -> PyResult<f64> {
    bc::poisson_cdf_via_gamma(c, lam).map(|p| p.value()).map_err(to_py)
}

#[pyfunction]
fn pr_positive(by: &PyBloomClock, bz: &PyBloomClock) -> PyResult<f64> {
    bc::pr_positive(&by.0, &bz.0).map(|p| p.value()).map_err(to_py)
}

#[pyfunction]
fn pr_delta(by: &PyBloomClock, bz: &PyBloomClock) -> PyResult<u8> {
    bc::pr_delta(&by.0, &bz.0).map_err(to_py)
}

#[pyfunction]
fn classify_probabilities<'py>(py: Python<'py>, by: &PyBloomClock, bz: &PyBloomClock) -> PyResult<Bound<'py, PyAny>> {
    let r = bc::classify_probabilities(&by.0, &bz.0).map_err(to_py)?;
    dict(py, &r)
}

/// Metrics for raw confusion counts.
#[pyfunction]
fn compute_metrics<'py>(py: Python<'py>, tp: u64, fp: u64, tn: u64, fn_: u64) -> PyResult<Bound<'py, PyAny>> {
    let counts = bc::ConfusionCounts { tp, fp, tn, fn_ };
    let r = bc::compute_metrics(counts).map_err(to_py)?;
    dict(py, &r)
}

#[pymodule]
fn bloomclock_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHashFamily>()?;
    m.add_class::<PyBloomClock>()?;
    m.add_class::<PyVectorClock>()?;
    m.add_class::<PyExecutionLog>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(binom_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(count_threshold_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_cdf_via_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(pr_positive, m)?)?;
    m.add_function(wrap_pyfunction!(pr_delta, m)?)?;
    m.add_function(wrap_pyfunction!(classify_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    Ok(())
}
