//! Python bindings: `import tickvol`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use tickvol_core::asymptotics::{self, OptimalDelta, Smoothness, VarianceComponents};
use tickvol_core::estimators::{self as est, VolScale};
use tickvol_core::ingest::{self, CleanConfig};
use tickvol_core::{mc, sim, EstimatorTag, PreAvgWeight};

fn err(e: tickvol_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Round-trips a serializable value through `json.loads`.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn tag(name: &str) -> PyResult<EstimatorTag> {
    name.parse().map_err(err)
}

/// `(u, value, reason_code)` per grid point.
type CurveRows = Vec<(f64, Option<f64>, Option<String>)>;

#[pyclass(name = "TickSeries", module = "tickvol", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyTickSeries(tickvol_core::TickSeries);

#[pymethods]
impl PyTickSeries {
    #[new]
    fn new(horizon: f64, times: Vec<f64>, log_prices: Vec<f64>) -> PyResult<Self> {
        tickvol_core::TickSeries::new(horizon, times, log_prices)
            .map(Self)
            .map_err(err)
    }

    /// Reads the `time,log_price` CSV format.
    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let f = std::fs::File::open(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
        ingest::read_series_csv(f).map(Self).map_err(err)
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let f = std::fs::File::create(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
        ingest::write_series_csv(&self.0, std::io::BufWriter::new(f)).map_err(err)
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times().to_vec()
    }

    #[getter]
    fn log_prices(&self) -> Vec<f64> {
        self.0.log_prices().to_vec()
    }

    #[getter]
    fn cleaned(&self) -> bool {
        self.0.is_cleaned()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("TickSeries(n={}, horizon={})", self.0.len(), self.0.horizon())
    }
}

#[pyclass(name = "EstimatorConfig", module = "tickvol", from_py_object)]
#[derive(Clone)]
pub struct PyEstimatorConfig(est::EstimatorConfig);

#[pymethods]
impl PyEstimatorConfig {
    /// Bandwidths are fractions of the horizon; `scale` is `"rescaled"` or
    /// `"clock_seconds"`.
    #[new]
    #[pyo3(signature = (intensity_bandwidth, clock_bandwidth, tick_window, block_size, scale = "rescaled"))]
    fn new(
        intensity_bandwidth: f64,
        clock_bandwidth: f64,
        tick_window: usize,
        block_size: usize,
        scale: &str,
    ) -> PyResult<Self> {
        let mut cfg = est::EstimatorConfig::new(intensity_bandwidth, clock_bandwidth, tick_window, block_size)
            .map_err(err)?;
        cfg.scale = parse_scale(scale)?;
        Ok(Self(cfg))
    }

    /// Defaults for real data: `window_seconds` per side, clock-second units.
    #[staticmethod]
    #[pyo3(signature = (series, window_seconds = 200.0))]
    fn data_defaults(series: &PyTickSeries, window_seconds: f64) -> PyResult<Self> {
        est::EstimatorConfig::data_defaults(&series.0, window_seconds)
            .map(Self)
            .map_err(err)
    }

    fn interior_grid(&self, points: usize) -> Vec<f64> {
        self.0.interior_grid(points)
    }

    #[getter]
    fn intensity_bandwidth(&self) -> f64 {
        self.0.intensity_bandwidth
    }

    #[getter]
    fn clock_bandwidth(&self) -> f64 {
        self.0.clock_bandwidth
    }

    #[getter]
    fn tick_window(&self) -> usize {
        self.0.tick_window
    }

    #[getter]
    fn block_size(&self) -> usize {
        self.0.block_size()
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.0.grid.clone()
    }

    #[setter]
    fn set_grid(&mut self, grid: Vec<f64>) {
        self.0.grid = grid;
    }

    fn __repr__(&self) -> String {
        format!(
            "EstimatorConfig(intensity_bandwidth={}, clock_bandwidth={}, tick_window={}, block_size={})",
            self.0.intensity_bandwidth,
            self.0.clock_bandwidth,
            self.0.tick_window,
            self.0.block_size()
        )
    }
}

fn parse_scale(s: &str) -> PyResult<VolScale> {
    match s {
        "rescaled" => Ok(VolScale::Rescaled),
        "clock_seconds" => Ok(VolScale::ClockSeconds),
        other => Err(PyValueError::new_err(format!("unknown scale `{other}`"))),
    }
}

/// Simulates a series from a TOML model config.
#[pyfunction]
#[pyo3(signature = (config_toml, seed = None))]
fn simulate(config_toml: &str, seed: Option<u64>) -> PyResult<PyTickSeries> {
    let mut cfg = sim::SimConfig::from_toml(config_toml).map_err(err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    sim::simulate(&cfg).map(PyTickSeries).map_err(err)
}

/// One estimate at `u0`. Raises `ValueError` when it is undefined there.
#[pyfunction]
fn estimate(series: &PyTickSeries, u0: f64, config: &PyEstimatorConfig, estimator: &str) -> PyResult<f64> {
    est::estimate(&series.0, u0, &config.0, tag(estimator)?).map_err(err)
}

/// Estimates on the config's grid: a list of `(u, value or None, reason or None)`.
#[pyfunction]
fn estimate_curve(
    series: &PyTickSeries,
    config: &PyEstimatorConfig,
    estimator: &str,
) -> PyResult<CurveRows> {
    let curve = est::estimate_on_grid(&series.0, &config.0, tag(estimator)?);
    Ok(curve.points.into_iter().map(|p| (p.u, p.value, p.reason_code)).collect())
}

/// Cleans raw `timestamp,price,condition` CSV text. Returns the series and a
/// report dict.
#[pyfunction]
#[pyo3(signature = (raw_csv, session_start = 34200.0, session_end = 57600.0, bad_conditions = Vec::new()))]
fn clean<'py>(
    py: Python<'py>,
    raw_csv: &str,
    session_start: f64,
    session_end: f64,
    bad_conditions: Vec<String>,
) -> PyResult<(PyTickSeries, Bound<'py, PyAny>)> {
    let parsed = ingest::parse_tick_csv(raw_csv.as_bytes()).map_err(err)?;
    let cfg = CleanConfig {
        session_start,
        session_end,
        bad_conditions: bad_conditions.into_iter().collect(),
        outlier_filter: None,
    };
    let (series, report) = ingest::clean_ticks(&parsed.records, &cfg).map_err(err)?;
    let report = to_py(py, &report)?;
    report
        .cast::<PyDict>()?
        .set_item("malformed", to_py(py, &parsed.malformed)?)?;
    Ok((PyTickSeries(series), report))
}

/// The `δ` minimizing `δA + B/δ + C/δ³`, or `None` when `B = C = 0`.
#[pyfunction]
fn optimal_delta(a: f64, b: f64, c: f64) -> PyResult<Option<f64>> {
    Ok(match asymptotics::optimal_delta(&VarianceComponents { a, b, c }).map_err(err)? {
        OptimalDelta::Stationary(d) => Some(d),
        OptimalDelta::Degenerate => None,
    })
}

/// Pre-averaging constants for the parabolic weight with block size `h`.
#[pyfunction]
fn weight_constants<'py>(py: Python<'py>, h: usize) -> PyResult<Bound<'py, PyAny>> {
    let w = PreAvgWeight::parabolic(h).map_err(err)?;
    to_py(py, &w.constants())
}

/// Regime of the decomposed estimator for the given smoothness of `σ²` and `λ`.
#[pyfunction]
fn decomposition_regime<'py>(
    py: Python<'py>,
    sigma2_m: u8,
    sigma2_gamma: f64,
    lambda_m: u8,
    lambda_gamma: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let s = Smoothness::new(sigma2_m, sigma2_gamma).map_err(err)?;
    let l = Smoothness::new(lambda_m, lambda_gamma).map_err(err)?;
    to_py(py, &asymptotics::decomposition_regime(s, l))
}

fn scenario(registry_toml: &str, name: &str) -> PyResult<mc::Scenario> {
    let reg = mc::Registry::from_toml(registry_toml).map_err(err)?;
    reg.get(name)
        .cloned()
        .ok_or_else(|| PyValueError::new_err(format!("unknown scenario `{name}`; available: {}", reg.names().join(", "))))
}

/// Runs one scenario for one estimator. `replications` overrides the registry.
#[pyfunction]
#[pyo3(signature = (registry_toml, name, estimator, replications = None))]
fn run_scenario<'py>(
    py: Python<'py>,
    registry_toml: &str,
    name: &str,
    estimator: &str,
    replications: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut s = scenario(registry_toml, name)?;
    if let Some(r) = replications {
        s.replications = r;
    }
    let which = tag(estimator)?;
    let report = py.detach(|| mc::run_scenario(&s, which)).map_err(err)?;
    to_py(py, &report)
}

/// Runs a scenario's checks. Returns reports, the head-to-head comparison if
/// any, and the check results.
#[pyfunction]
#[pyo3(signature = (registry_toml, name, replications = None))]
fn validate_scenario<'py>(
    py: Python<'py>,
    registry_toml: &str,
    name: &str,
    replications: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut s = scenario(registry_toml, name)?;
    if let Some(r) = replications {
        s.replications = r;
    }
    let outcome = py.detach(|| mc::validate_scenario(&s)).map_err(err)?;
    to_py(py, &outcome)
}

#[pymodule]
fn tickvol(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTickSeries>()?;
    m.add_class::<PyEstimatorConfig>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_curve, m)?)?;
    m.add_function(wrap_pyfunction!(clean, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_delta, m)?)?;
    m.add_function(wrap_pyfunction!(weight_constants, m)?)?;
    m.add_function(wrap_pyfunction!(decomposition_regime, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(validate_scenario, m)?)?;
    m.add("ESTIMATORS", EstimatorTag::ALL.iter().map(|t| t.name()).collect::<Vec<_>>())?;
    Ok(())
}
