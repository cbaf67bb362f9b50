//! Python bindings. Process specs and experiment configs cross the boundary
//! as JSON strings, results as plain Python values.

use hyperlab::coulomb::{default_grid, energy_per_volume, solve_field};
use hyperlab::harness::{run_chain_experiment, run_counterexample_experiment, ExperimentConfig};
use hyperlab::spectral::{sc_integral, sigma_via_spectrum, structure_factor};
use hyperlab::transport::{wp_to_lebesgue, Method};
use hyperlab::variance::estimate_sigma;
use hyperlab::{ProcessSpec, RngSeed, TorusBox};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: hyperlab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn spec(json: &str) -> PyResult<ProcessSpec> {
    ProcessSpec::from_json(json).map_err(err)
}

fn torus(side: u32) -> PyResult<TorusBox> {
    TorusBox::integer(side).map_err(err)
}

#[pyclass(name = "PointConfiguration", module = "hyperlab_py")]
#[derive(Clone)]
struct PyConfiguration {
    inner: hyperlab::PointConfiguration,
}

#[pymethods]
impl PyConfiguration {
    #[getter]
    fn side(&self) -> f64 {
        self.inner.torus.side()
    }

    #[getter]
    fn points(&self) -> Vec<(f64, f64)> {
        self.inner.points.iter().map(|p| (p.x, p.y)).collect()
    }

    #[getter]
    fn multiplicities(&self) -> Vec<u32> {
        self.inner.multiplicities.clone()
    }

    fn total_count(&self) -> u64 {
        self.inner.total_count()
    }

    /// The text format written by `hyperlab generate`.
    fn to_text(&self) -> String {
        hyperlab::io::config_to_string(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.points.len()
    }

    fn __repr__(&self) -> String {
        format!("PointConfiguration(side={}, sites={}, count={})", self.side(), self.inner.points.len(), self.total_count())
    }
}

/// Sample one configuration of `spec_json` on the torus of side `side`.
#[pyfunction]
#[pyo3(signature = (spec_json, side, seed = 1))]
fn generate(spec_json: &str, side: u32, seed: u64) -> PyResult<PyConfiguration> {
    let inner = spec(spec_json)?.sample(&torus(side)?, RngSeed::new(seed)).map_err(err)?;
    Ok(PyConfiguration { inner })
}

/// Normalised number variance; returns `{"radii", "sigma", "stderr"}`.
#[pyfunction]
#[pyo3(signature = (spec_json, side, radii, replicas = 200, centers = 16, seed = 1))]
fn sigma<'py>(
    py: Python<'py>,
    spec_json: &str,
    side: u32,
    radii: Vec<f64>,
    replicas: usize,
    centers: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let (s, t) = (spec(spec_json)?, torus(side)?);
    let c = py.allow_threads(|| estimate_sigma(&s, &t, &radii, replicas, centers, RngSeed::new(seed))).map_err(err)?;
    let d = PyDict::new_bound(py);
    d.set_item("radii", c.radii)?;
    d.set_item("sigma", c.sigma)?;
    d.set_item("stderr", c.stderr)?;
    Ok(d)
}

/// Radially binned structure factor with its SC integral, plus spectral
/// sigma at the requested radii (empty when `omega_max` is too small).
#[pyfunction]
#[pyo3(signature = (spec_json, side, replicas = 50, omega_max = 1.0, seed = 1, radii = Vec::new()))]
fn spectrum<'py>(
    py: Python<'py>,
    spec_json: &str,
    side: u32,
    replicas: usize,
    omega_max: f64,
    seed: u64,
    radii: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let (s, t) = (spec(spec_json)?, torus(side)?);
    let est = py.allow_threads(|| structure_factor(&s, &t, replicas, omega_max, RngSeed::new(seed))).map_err(err)?;
    let sc = sc_integral(&est);
    let sig: Vec<f64> = radii.iter().map(|&r| sigma_via_spectrum(&est, r)).collect::<Result<_, _>>().map_err(err)?;
    let d = PyDict::new_bound(py);
    d.set_item("omega", est.radial_bins.iter().map(|b| b.omega).collect::<Vec<_>>())?;
    d.set_item("mean", est.radial_bins.iter().map(|b| b.mean).collect::<Vec<_>>())?;
    d.set_item("stderr", est.radial_bins.iter().map(|b| b.stderr).collect::<Vec<_>>())?;
    d.set_item("count", est.radial_bins.iter().map(|b| b.count).collect::<Vec<_>>())?;
    d.set_item("zero_mode", est.zero_mode)?;
    d.set_item("sc_integral", sc.value)?;
    d.set_item("divergence_flag", sc.divergence_flag)?;
    d.set_item("sigma", sig)?;
    Ok(d)
}

/// Truncated field of a neutral configuration; energy per unit volume and residuals.
#[pyfunction]
#[pyo3(signature = (config, eta = 1.0, grid = None))]
fn coulomb<'py>(py: Python<'py>, config: &PyConfiguration, eta: f64, grid: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
    let n = grid.unwrap_or_else(|| default_grid(&config.inner.torus, eta, 64));
    let f = py.allow_threads(|| solve_field(&config.inner, eta, n)).map_err(err)?;
    let d = PyDict::new_bound(py);
    d.set_item("energy", energy_per_volume(&f))?;
    d.set_item("grid", n)?;
    d.set_item("div_residual", f.div_residual)?;
    d.set_item("curl_residual", f.curl_residual)?;
    d.set_item("tol_div", f.tol_div)?;
    Ok(d)
}

/// `W_p^p` per unit volume to Lebesgue; `method` is "exact" or "entropic".
#[pyfunction]
#[pyo3(signature = (config, grid_m, p = 2.0, method = "exact", epsilon = 0.01))]
fn transport<'py>(py: Python<'py>, config: &PyConfiguration, grid_m: usize, p: f64, method: &str, epsilon: f64) -> PyResult<Bound<'py, PyDict>> {
    let m = match method {
        "exact" => Method::ExactAssignment,
        "entropic" => Method::Entropic,
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    let r = py.allow_threads(|| wp_to_lebesgue(&config.inner, grid_m, p, m, epsilon)).map_err(err)?;
    let d = PyDict::new_bound(py);
    d.set_item("cost_per_volume", r.cost_per_volume)?;
    d.set_item("relative_gap", r.relative_gap)?;
    d.set_item("marginal_error", r.marginal_error().ok())?;
    Ok(d)
}

fn experiment_config(config_json: Option<&str>) -> PyResult<ExperimentConfig> {
    config_json.map_or_else(|| Ok(ExperimentConfig::default()), |j| ExperimentConfig::from_json(j).map_err(err))
}

/// Run the implication-chain experiment; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (config_json = None))]
fn run_chain(py: Python<'_>, config_json: Option<&str>) -> PyResult<String> {
    let c = experiment_config(config_json)?;
    py.allow_threads(|| run_chain_experiment(&c)?.to_json()).map_err(err)
}

/// Run the counter-example experiment; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (config_json = None))]
fn run_counterexamples(py: Python<'_>, config_json: Option<&str>) -> PyResult<String> {
    let c = experiment_config(config_json)?;
    py.allow_threads(|| run_counterexample_experiment(&c)?.to_json()).map_err(err)
}

#[pymodule]
fn hyperlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfiguration>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(sigma, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(coulomb, m)?)?;
    m.add_function(wrap_pyfunction!(transport, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    m.add_function(wrap_pyfunction!(run_counterexamples, m)?)?;
    Ok(())
}
