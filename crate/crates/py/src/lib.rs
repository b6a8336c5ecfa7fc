//! Python bindings: scenarios, single runs, sweeps and a few helpers.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use epon_hssr::config::{validate, ScenarioConfig, ValidatedConfig};
use epon_hssr::engine::{SimError, Simulation as Engine};
use epon_hssr::sweep::{expand, run_points, SweepSpec, DEFAULT_MAX_POINTS};
use epon_hssr::time::bytes_to_duration;
use epon_hssr::{MetricsSummary, ServiceClass, SimTime};

create_exception!(pyepon, ConfigError, PyValueError);
create_exception!(pyepon, SimulationError, PyRuntimeError);

fn config_err(e: impl std::fmt::Display) -> PyErr {
    ConfigError::new_err(e.to_string())
}

fn sim_err(e: SimError) -> PyErr {
    SimulationError::new_err(e.to_string())
}

fn to_json(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    if obj.is_none() {
        Ok(Value::Null)
    } else if let Ok(b) = obj.extract::<bool>() {
        Ok(Value::Bool(b))
    } else if let Ok(i) = obj.extract::<i64>() {
        Ok(Value::from(i))
    } else if let Ok(u) = obj.extract::<u64>() {
        Ok(Value::from(u))
    } else if let Ok(f) = obj.extract::<f64>() {
        Ok(Value::from(f))
    } else if let Ok(s) = obj.extract::<String>() {
        Ok(Value::String(s))
    } else if let Ok(d) = obj.cast::<PyDict>() {
        let mut map = serde_json::Map::new();
        for (k, v) in d.iter() {
            map.insert(k.extract::<String>()?, to_json(&v)?);
        }
        Ok(Value::Object(map))
    } else if let Ok(items) = obj.extract::<Vec<Bound<'_, PyAny>>>() {
        Ok(Value::Array(items.iter().map(to_json).collect::<PyResult<_>>()?))
    } else {
        Err(config_err(format!("unsupported value {obj}")))
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn summary_to_py<'py>(py: Python<'py>, s: &MetricsSummary) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &s.to_json_string())
}

/// Scenario description. Keyword arguments override the built-in defaults;
/// network fields may be given at top level (`n_onus=32`) or under `network`.
#[pyclass(module = "pyepon", skip_from_py_object)]
#[derive(Clone)]
pub struct Scenario {
    inner: ScenarioConfig,
}

impl Scenario {
    fn validated(&self) -> PyResult<ValidatedConfig> {
        validate(&self.inner)
            .map_err(|errs| config_err(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")))
    }
}

#[pymethods]
impl Scenario {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut value = serde_json::to_value(ScenarioConfig::default()).map_err(config_err)?;
        if let Some(kwargs) = kwargs {
            for (k, v) in kwargs.iter() {
                let key: String = k.extract()?;
                let v = to_json(&v)?;
                let root = value.as_object_mut().expect("object");
                if root.contains_key(&key) {
                    match (root.get_mut(&key), v) {
                        (Some(Value::Object(dst)), Value::Object(src)) => dst.extend(src),
                        (Some(slot), v) => *slot = v,
                        (None, _) => unreachable!(),
                    }
                    continue;
                }
                let net = root.get_mut("network").and_then(Value::as_object_mut).expect("network");
                if net.contains_key(&key) {
                    net.insert(key, v);
                } else {
                    return Err(config_err(format!("unknown scenario field `{key}`")));
                }
            }
        }
        let inner: ScenarioConfig = serde_json::from_value(value).map_err(config_err)?;
        Ok(Scenario { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ScenarioConfig::from_json_str(text).map(|inner| Scenario { inner }).map_err(config_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    /// Raise `ConfigError` listing every violated rule.
    fn validate(&self) -> PyResult<()> {
        self.validated().map(|_| ())
    }

    #[getter]
    fn scheduler(&self) -> String {
        self.inner.scheduler.to_string()
    }

    #[getter]
    fn n_onus(&self) -> u32 {
        self.inner.network.n_onus
    }

    #[getter]
    fn offered_load(&self) -> f64 {
        self.inner.offered_load
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(scheduler={}, n_onus={}, offered_load={}, seed={})",
            self.inner.scheduler, self.inner.network.n_onus, self.inner.offered_load, self.inner.seed
        )
    }
}

fn parse_class(name: &str) -> PyResult<ServiceClass> {
    match name.to_ascii_uppercase().as_str() {
        "HP" => Ok(ServiceClass::Hp),
        "BE" => Ok(ServiceClass::Be),
        _ => Err(PyValueError::new_err(format!("class must be 'HP' or 'BE', got {name:?}"))),
    }
}

/// Step-by-step access to one run.
#[pyclass(module = "pyepon", unsendable)]
pub struct Simulation {
    inner: Engine,
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (scenario, capture_trace = false))]
    fn new(scenario: &Scenario, capture_trace: bool) -> PyResult<Self> {
        let cfg = scenario.validated()?;
        let mut inner = Engine::new(&cfg);
        if capture_trace {
            inner.capture_trace();
        }
        Ok(Simulation { inner })
    }

    /// Queue packets at time zero, before the first event.
    fn preload(&mut self, onu: u32, class: &str, sizes: Vec<u32>) -> PyResult<()> {
        if self.inner.events_processed() > 0 {
            return Err(PyRuntimeError::new_err("preload after start"));
        }
        self.check_onu(onu)?;
        self.inner.preload(onu, parse_class(class)?, &sizes);
        Ok(())
    }

    /// Schedule one packet arrival; returns its id.
    fn inject(&mut self, onu: u32, class: &str, size: u32, at_ns: u64) -> PyResult<u64> {
        self.check_onu(onu)?;
        let at = SimTime::from_nanos(at_ns);
        if at < self.inner.now() {
            return Err(PyValueError::new_err("injection time is in the past"));
        }
        Ok(self.inner.inject(onu, parse_class(class)?, size, at))
    }

    /// Run to the end and return the summary as a dict.
    fn run<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let summary = self.inner.run_in_place().map_err(sim_err)?;
        summary_to_py(py, &summary)
    }

    #[getter]
    fn now_ns(&self) -> u64 {
        self.inner.now().as_nanos()
    }

    #[getter]
    fn events_processed(&self) -> u64 {
        self.inner.events_processed()
    }

    fn trace_lines(&self) -> Option<Vec<String>> {
        self.inner.trace_lines().map(|l| l.to_vec())
    }
}

impl Simulation {
    fn check_onu(&self, onu: u32) -> PyResult<()> {
        if (onu as usize) < self.inner.onus().len() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("no ONU {onu}")))
        }
    }
}

/// Run one scenario and return its summary dict.
#[pyfunction]
fn run<'py>(py: Python<'py>, scenario: &Scenario) -> PyResult<Bound<'py, PyAny>> {
    let cfg = scenario.validated()?;
    let summary = py.detach(|| epon_hssr::run(&cfg)).map_err(sim_err)?;
    summary_to_py(py, &summary)
}

/// Run the cross product of `NAME=SPEC` sweeps over `scenario`.
#[pyfunction]
#[pyo3(signature = (scenario, sweeps, jobs = 1))]
fn sweep<'py>(py: Python<'py>, scenario: &Scenario, sweeps: Vec<String>, jobs: usize) -> PyResult<Bound<'py, PyList>> {
    let specs = sweeps.iter().map(|s| s.parse::<SweepSpec>()).collect::<Result<Vec<_>, _>>().map_err(config_err)?;
    let points = expand(&scenario.inner, &specs, DEFAULT_MAX_POINTS).map_err(config_err)?;
    let results = py.detach(|| run_points(&points, jobs)).map_err(|e| SimulationError::new_err(e.to_string()))?;
    let items = results.iter().map(|s| summary_to_py(py, s)).collect::<PyResult<Vec<_>>>()?;
    PyList::new(py, items)
}

/// Positions chosen by the greedy look-ahead packer.
#[pyfunction]
fn pack_slot(sizes: Vec<u32>, slot_bytes: u64, lookahead: usize) -> PyResult<Vec<usize>> {
    if lookahead == 0 {
        return Err(PyValueError::new_err("lookahead must be at least 1"));
    }
    Ok(epon_hssr::onu::pack_slot(sizes, slot_bytes, lookahead))
}

/// Serialization time in ns, rounded up.
#[pyfunction]
fn bytes_to_duration_ns(bytes: u64, rate_bps: u64) -> PyResult<u64> {
    bytes_to_duration(bytes, rate_bps).map(SimTime::as_nanos).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Parse a duration such as "100ns" or "1.5ms" into ns.
#[pyfunction]
fn parse_duration_ns(text: &str) -> PyResult<u64> {
    text.parse::<SimTime>().map(SimTime::as_nanos).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pyepon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Simulation>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(pack_slot, m)?)?;
    m.add_function(wrap_pyfunction!(bytes_to_duration_ns, m)?)?;
    m.add_function(wrap_pyfunction!(parse_duration_ns, m)?)?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("SimulationError", m.py().get_type::<SimulationError>())?;
    Ok(())
}
