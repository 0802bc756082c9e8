//! Python bindings for the `rotspec` simulator.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rotspec::analysis::{fit_exponential_with, DecayTrace, FitOptions, FitResult, SpectrumPoint};
use rotspec::config::SimulationConfig;
use rotspec::lineshape::{self, DopplerParams, MagneticField};
use rotspec::protocol::Method;
use rotspec::{pipeline, radfield, selftest};

fn py_err(e: rotspec::Error) -> PyErr {
    if e.is_config_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn method(name: &str) -> PyResult<Method> {
    name.parse().map_err(py_err)
}

/// Simulation configuration. Defaults match the reference config.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SimulationConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: SimulationConfig::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        SimulationConfig::from_toml(text)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        SimulationConfig::load(path)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn master_seed(&self) -> u64 {
        self.inner.master_seed
    }

    #[setter]
    fn set_master_seed(&mut self, seed: u64) {
        self.inner.master_seed = seed;
    }

    #[getter]
    fn magnetic_field_gauss(&self) -> f64 {
        self.inner.field.magnetic_field_gauss
    }

    #[setter]
    fn set_magnetic_field_gauss(&mut self, b: f64) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.field.magnetic_field_gauss = b;
        next.validate().map_err(py_err)?;
        self.inner = next;
        Ok(())
    }

    #[getter]
    fn molecule_count(&self) -> f64 {
        self.inner.ions.molecule_count
    }

    #[setter]
    fn set_molecule_count(&mut self, n: f64) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.ions.molecule_count = n;
        next.validate().map_err(py_err)?;
        self.inner = next;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(master_seed={}, magnetic_field_gauss={}, molecule_count={})",
            self.inner.master_seed, self.inner.field.magnetic_field_gauss, self.inner.ions.molecule_count
        )
    }
}

fn config_or_default(config: Option<PyConfig>) -> SimulationConfig {
    config.map(|c| c.inner).unwrap_or_default()
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn fit_dict<'py>(py: Python<'py>, fit: &FitResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rate", fit.rate)?;
    d.set_item("rate_stddev", fit.rate_stddev)?;
    d.set_item("amplitude", fit.amplitude)?;
    d.set_item("offset", fit.offset)?;
    d.set_item("window", fit.window)?;
    d.set_item("converged", fit.converged)?;
    d.set_item("iterations", fit.iterations)?;
    Ok(d)
}

fn point_dict<'py>(py: Python<'py>, p: &SpectrumPoint) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("list", &p.list_name)?;
    d.set_item("method", p.method.map(|m| m.to_string()))?;
    d.set_item("signal", p.normalized_signal)?;
    d.set_item("stddev", p.stddev)?;
    d.set_item("stderr", p.standard_error())?;
    d.set_item("n_reps", p.n_reps)?;
    Ok(d)
}

/// Mean photon occupancy of a thermal field mode.
#[pyfunction]
fn planck_occupancy(frequency_hz: f64, temperature_k: f64) -> PyResult<f64> {
    radfield::planck_occupancy(frequency_hz, temperature_k).map_err(py_err)
}

/// Doppler FWHM (Hz) of the N=0 -> N=1 line at the given ion temperature.
#[pyfunction]
fn doppler_fwhm(ion_temperature_k: f64) -> PyResult<f64> {
    let p = DopplerParams::hd_plus(ion_temperature_k);
    p.validate().map_err(py_err)?;
    Ok(lineshape::doppler_fwhm(&p))
}

/// Thermal rotational populations for N = 0..=n_max.
#[pyfunction]
#[pyo3(signature = (temperature_k, n_max = 8))]
fn thermal_populations(temperature_k: f64, n_max: usize) -> PyResult<Vec<f64>> {
    let env = radfield::ThermalEnvironment::at(temperature_k);
    env.validate().map_err(py_err)?;
    Ok(radfield::truncated_thermal_populations(&env, n_max))
}

/// `(label, position_hz, targeted)` for every catalog line at field `b_gauss`.
#[pyfunction]
#[pyo3(signature = (b_gauss, config = None))]
fn line_positions(b_gauss: f64, config: Option<PyConfig>) -> PyResult<Vec<(String, f64, bool)>> {
    let cfg = config_or_default(config);
    let catalog = cfg.catalog().map_err(py_err)?;
    let field = MagneticField::new(b_gauss);
    field.validate().map_err(py_err)?;
    Ok(catalog
        .lines
        .iter()
        .map(|l| (l.label(), lineshape::line_position(l, &field), l.targeted))
        .collect())
}

/// Fit `A exp(-r t) + c` (or without `c`) over `window`.
#[pyfunction]
#[pyo3(signature = (times, values, window, offset = true))]
fn fit_exponential<'py>(
    py: Python<'py>,
    times: Vec<f64>,
    values: Vec<f64>,
    window: (f64, f64),
    offset: bool,
) -> PyResult<Bound<'py, PyDict>> {
    if times.len() != values.len() {
        return Err(PyValueError::new_err("times and values differ in length"));
    }
    let trace = DecayTrace::from_samples(times.into_iter().zip(values).collect());
    let opts = if offset {
        FitOptions::default()
    } else {
        FitOptions::without_offset()
    };
    let fit = fit_exponential_with(&trace, window, &opts).map_err(py_err)?;
    fit_dict(py, &fit)
}

/// Run seeded repetitions for one list. Returns a dict with the summary,
/// per-rep signals and the averaged trace.
#[pyfunction]
#[pyo3(signature = (method_name, list, reps, config = None, workers = None))]
fn simulate<'py>(
    py: Python<'py>,
    method_name: &str,
    list: &str,
    reps: usize,
    config: Option<PyConfig>,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let m = method(method_name)?;
    let cfg = config_or_default(config);
    let workers = workers.unwrap_or_else(default_workers);
    let list = list.to_string();
    let run = py
        .detach(|| {
            let catalog = cfg.catalog()?;
            pipeline::simulate(&cfg, &catalog, m, &list, reps, workers)
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("summary", point_dict(py, &run.summary(None).map_err(py_err)?)?)?;
    d.set_item("signals", run.signals())?;
    d.set_item("seeds", run.reps.iter().map(|r| r.seed).collect::<Vec<_>>())?;
    let avg = run.averaged_trace().map_err(py_err)?;
    d.set_item("times", avg.times().collect::<Vec<_>>())?;
    d.set_item("trace", avg.values().collect::<Vec<_>>())?;
    if m == Method::I {
        let fit = run.averaged_fit(&cfg).map_err(py_err)?;
        d.set_item("averaged_fit", fit_dict(py, &fit)?)?;
    }
    Ok(d)
}

/// One normalized spectrum point per list.
#[pyfunction]
#[pyo3(signature = (method_name, lists, reps, config = None, workers = None))]
fn spectrum<'py>(
    py: Python<'py>,
    method_name: &str,
    lists: Vec<String>,
    reps: usize,
    config: Option<PyConfig>,
    workers: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let m = method(method_name)?;
    let cfg = config_or_default(config);
    let workers = workers.unwrap_or_else(default_workers);
    let result = py
        .detach(|| {
            let catalog = cfg.catalog()?;
            pipeline::spectrum(&cfg, &catalog, m, &lists, reps, workers)
        })
        .map_err(py_err)?;
    result.points.iter().map(|p| point_dict(py, p)).collect()
}

/// Acceptance checks as `(id, name, passed, detail)` tuples.
#[pyfunction]
#[pyo3(signature = (config = None, workers = None))]
fn run_selftest(
    py: Python<'_>,
    config: Option<PyConfig>,
    workers: Option<usize>,
) -> Vec<(usize, String, bool, String)> {
    let cfg = config_or_default(config);
    let workers = workers.unwrap_or_else(default_workers);
    py.detach(|| selftest::run_all(&cfg, workers))
        .into_iter()
        .map(|r| (r.id, r.name.to_string(), r.passed, r.detail))
        .collect()
}

#[pymodule]
fn rotspec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(planck_occupancy, m)?)?;
    m.add_function(wrap_pyfunction!(doppler_fwhm, m)?)?;
    m.add_function(wrap_pyfunction!(thermal_populations, m)?)?;
    m.add_function(wrap_pyfunction!(line_positions, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    Ok(())
}
