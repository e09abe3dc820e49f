//! Python bindings: the repeater model, the Monte Carlo estimator, the
//! pulse engine scenarios and the decay fits.
//!
//! Structured results cross the boundary as JSON and come back as plain
//! dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use qmemsim::analysis::{fit_efficiency_decay, fit_mims, fit_t1, FitOptions};
use qmemsim::config::Config;
use qmemsim::cppe::{self, ChirpPulse, Preset};
use qmemsim::mc::{self, McOptions};
use qmemsim::model::{self, LinkConfig};

fn py_err(e: qmemsim::Error) -> PyErr {
    use qmemsim::Error as E;
    match e {
        E::Config(_) | E::InvalidParameter { .. } | E::Schedule(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Source, channel, detector and multiplexing parameters.
#[pyclass(name = "RepeaterParams", module = "qmemsim", skip_from_py_object)]
#[derive(Clone)]
struct PyRepeaterParams {
    inner: model::RepeaterParams,
}

#[pymethods]
impl PyRepeaterParams {
    #[new]
    #[pyo3(signature = (rho=0.9, alpha=0.21, beta=2, eta_d_i=0.9, eta_d_s=0.9, m_t=20, m_s=3, nu=1.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(rho: f64, alpha: f64, beta: u32, eta_d_i: f64, eta_d_s: f64, m_t: u32, m_s: u32, nu: f64) -> PyResult<Self> {
        let inner = model::RepeaterParams {
            rho,
            alpha,
            beta,
            eta_d_i,
            eta_d_s,
            m_t,
            m_s,
            nu,
            ..model::RepeaterParams::default()
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn beta(&self) -> u32 {
        self.inner.beta
    }
    #[getter]
    fn eta_d_i(&self) -> f64 {
        self.inner.eta_d_i
    }
    #[getter]
    fn eta_d_s(&self) -> f64 {
        self.inner.eta_d_s
    }
    #[getter]
    fn m_t(&self) -> u32 {
        self.inner.m_t
    }
    #[getter]
    fn m_s(&self) -> u32 {
        self.inner.m_s
    }
    /// Signal velocity in fiber, km/s.
    #[getter]
    fn v(&self) -> f64 {
        self.inner.v
    }
    #[getter]
    fn modes(&self) -> u64 {
        self.inner.modes()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Memory efficiency law plus lifetime and noise scale.
#[pyclass(name = "MemoryModel", module = "qmemsim", skip_from_py_object)]
#[derive(Clone)]
struct PyMemoryModel {
    inner: model::MemoryModel,
}

#[pymethods]
impl PyMemoryModel {
    #[new]
    #[pyo3(signature = (eta_o=0.65, t2=3e-3, t1=10.68e-3, noise_scale=1.0))]
    fn new(eta_o: f64, t2: f64, t1: f64, noise_scale: f64) -> PyResult<Self> {
        let inner = model::MemoryModel {
            eta_o,
            t2,
            t1,
            noise_scale,
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    /// The demonstrated memory: 23.05 % and 804 us.
    #[staticmethod]
    fn demonstrated() -> Self {
        Self {
            inner: model::MemoryModel::demonstrated(),
        }
    }

    #[getter]
    fn eta_o(&self) -> f64 {
        self.inner.eta_o
    }
    #[getter]
    fn t2(&self) -> f64 {
        self.inner.t2
    }
    #[getter]
    fn t1(&self) -> f64 {
        self.inner.t1
    }

    /// Efficiency after `storage_time` seconds.
    fn efficiency(&self, storage_time: f64) -> PyResult<f64> {
        model::memory_efficiency(&self.inner, storage_time).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Success probability of one cycle over `n_links` links spanning `total_length` km.
#[pyfunction]
fn success_probability(
    params: PyRef<'_, PyRepeaterParams>,
    memory: PyRef<'_, PyMemoryModel>,
    total_length: f64,
    n_links: u32,
) -> PyResult<f64> {
    let link = LinkConfig::new(total_length, n_links).map_err(py_err)?;
    model::success_probability(&params.inner, &memory.inner, &link).map_err(py_err)
}

/// Best link count at a fixed length.
#[pyfunction]
#[pyo3(signature = (params, memory, total_length, n_max=64))]
fn optimize_links(
    py: Python<'_>,
    params: PyRef<'_, PyRepeaterParams>,
    memory: PyRef<'_, PyMemoryModel>,
    total_length: f64,
    n_max: u32,
) -> PyResult<Py<PyAny>> {
    let best = model::optimize_links(&params.inner, &memory.inner, total_length, n_max).map_err(py_err)?;
    to_py(py, &best)
}

/// Optimized repeater against direct transmission over `lengths` (km).
#[pyfunction]
#[pyo3(signature = (params, memory, lengths, n_max=64))]
fn sweep_distance(
    py: Python<'_>,
    params: PyRef<'_, PyRepeaterParams>,
    memory: PyRef<'_, PyMemoryModel>,
    lengths: Vec<f64>,
    n_max: u32,
) -> PyResult<Py<PyAny>> {
    let mut spec = model::SweepSpec::distance(params.inner, memory.inner, lengths);
    spec.n_max = n_max;
    let rows = py.detach(|| model::sweep_distance(&spec)).map_err(py_err)?;
    to_py(py, &rows)
}

#[derive(Serialize)]
struct McSummary {
    n_cycles: u64,
    successes: u64,
    frequency: f64,
    standard_error: f64,
    analytic: f64,
    z_score: f64,
}

/// Monte Carlo estimate of the success probability with its analytic value.
#[pyfunction]
fn estimate_success(
    py: Python<'_>,
    params: PyRef<'_, PyRepeaterParams>,
    memory: PyRef<'_, PyMemoryModel>,
    total_length: f64,
    n_links: u32,
    n_cycles: u64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let (p, m) = (params.inner, memory.inner);
    let link = LinkConfig::new(total_length, n_links).map_err(py_err)?;
    let est = py
        .detach(|| mc::estimate_success(&p, &m, &link, n_cycles, seed, McOptions::default()))
        .map_err(py_err)?;
    let analytic = model::success_probability(&p, &m, &link).map_err(py_err)?;
    to_py(
        py,
        &McSummary {
            n_cycles: est.n_cycles,
            successes: est.successes,
            frequency: est.frequency,
            standard_error: est.standard_error,
            analytic,
            z_score: est.z_score(analytic),
        },
    )
}

/// Fits `exp4`, `mims` or `t1` to the points; returns the parameters and diagnostics.
#[pyfunction]
#[pyo3(signature = (model, x, y, sigma=None, background=false))]
fn fit(
    py: Python<'_>,
    model: &str,
    x: Vec<f64>,
    y: Vec<f64>,
    sigma: Option<Vec<f64>>,
    background: bool,
) -> PyResult<Py<PyAny>> {
    if x.len() != y.len() {
        return Err(PyValueError::new_err("x and y differ in length"));
    }
    let points: Vec<(f64, f64)> = x.into_iter().zip(y).collect();
    let options = FitOptions {
        sigma,
        background,
        ..FitOptions::default()
    };
    let result = match model {
        "exp4" => fit_efficiency_decay(&points, &options),
        "mims" => fit_mims(&points, &options),
        "t1" => fit_t1(&points, &options),
        other => return Err(PyValueError::new_err(format!("unknown model `{other}` (exp4, mims, t1)"))),
    };
    to_py(py, &result.map_err(py_err)?)
}

fn preset(index: usize) -> PyResult<Preset> {
    Preset::by_index(index).ok_or_else(|| PyValueError::new_err(format!("preset index {index} out of range")))
}

/// The built-in pulse presets.
#[pyfunction]
fn presets(py: Python<'_>) -> PyResult<Py<PyAny>> {
    to_py(py, &cppe::PRESETS)
}

/// Excited population after the storage chirp of preset `index` (0-based)
/// at each detuning (Hz).
#[pyfunction]
#[pyo3(signature = (index, detunings, adiabaticity=None, refine=1.0))]
fn inversion_profile(
    py: Python<'_>,
    index: usize,
    detunings: Vec<f64>,
    adiabaticity: Option<f64>,
    refine: f64,
) -> PyResult<Vec<f64>> {
    let p = preset(index)?;
    let pulse = ChirpPulse {
        a0: p.a0(adiabaticity.unwrap_or(cppe::DEFAULT_ADIABATICITY)),
        tau_cp: p.tau_cp,
        delta: p.delta,
        omega0: 0.0,
        t_start: 0.0,
    };
    py.detach(|| cppe::inversion_profile(&pulse, &detunings, refine)).map_err(py_err)
}

/// Runs the pulse scenarios of a TOML configuration (the `[pulse]` and
/// `[memory]` sections) and returns one report per scenario. With
/// `traces=True` each report also carries its `times` and `intensity`.
#[pyfunction]
#[pyo3(signature = (config="", traces=false))]
fn run_pulse(py: Python<'_>, config: &str, traces: bool) -> PyResult<Py<PyAny>> {
    let cfg = Config::from_toml(config).map_err(py_err)?;
    let reports = py
        .detach(|| -> qmemsim::Result<Vec<serde_json::Value>> {
            let mut out = Vec::new();
            for sc in cppe::scenarios(&cfg.pulse)? {
                let (run, report) = cppe::run_scenario(&sc, &cfg.memory, cfg.pulse.detection_calibration)?;
                let mut v = serde_json::to_value(&report).expect("report serializes");
                if traces {
                    v["times"] = serde_json::json!(run.trace.times);
                    v["intensity"] = serde_json::json!(run.trace.intensity);
                }
                out.push(v);
            }
            Ok(out)
        })
        .map_err(py_err)?;
    to_py(py, &reports)
}

/// Parses and validates a TOML configuration; returns it with defaults filled in.
#[pyfunction]
fn load_config(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    to_py(py, &Config::from_toml(text).map_err(py_err)?)
}

#[pymodule(name = "qmemsim")]
fn qmemsim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRepeaterParams>()?;
    m.add_class::<PyMemoryModel>()?;
    m.add_function(wrap_pyfunction!(success_probability, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_links, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_distance, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_success, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(inversion_profile, m)?)?;
    m.add_function(wrap_pyfunction!(run_pulse, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
