//! Python bindings for the `xkte` crate.
//!
//! ```python
//! import pyxkte
//! data = pyxkte.generate("III", 350, seed=7)
//! r = pyxkte.aipw_xkte(data)
//! print(r.statistic, r.p_value, r.reject)
//! ```

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;

use xkte::dtetests::{PropensityMode, DEFAULT_ALPHA, DEFAULT_CLIP_EPS, DEFAULT_L2, DEFAULT_PERMUTATIONS};
use xkte::numerics::KernelFamily;
use xkte::scenarios::DEFAULT_DX;
use xkte::{Design, Link, Method, Scenario, ScenarioConfig};

create_exception!(pyxkte, XkteError, PyException, "Base error raised by pyxkte.");
create_exception!(
    pyxkte,
    DegenerateError,
    XkteError,
    "The studentized statistic or the bandwidth is undefined for this data."
);

fn to_py(e: xkte::Error) -> PyErr {
    match e {
        xkte::Error::Io(io) => PyIOError::new_err(io.to_string()),
        e if e.is_degenerate() => DegenerateError::new_err(e.to_string()),
        xkte::Error::Input(_) | xkte::Error::Config(_) => PyValueError::new_err(e.to_string()),
        e => XkteError::new_err(e.to_string()),
    }
}

/// Covariates `x` (n rows of d values), binary treatment `a` and outcomes `y`.
#[pyclass(name = "Dataset", module = "pyxkte", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: xkte::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(x: Vec<Vec<f64>>, a: Vec<u8>, y: Vec<f64>) -> PyResult<Self> {
        let inner = xkte::Dataset::from_rows(&x, a, y).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Reads a CSV file with header `x1,...,xd,a,y`.
    #[staticmethod]
    fn read_csv(path: std::path::PathBuf) -> PyResult<Self> {
        let f = std::fs::File::open(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let inner = xkte::cli::read_dataset_csv(std::io::BufReader::new(f)).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn write_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        let f = std::fs::File::create(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        xkte::cli::write_dataset_csv(&self.inner, std::io::BufWriter::new(f))
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n()).map(|i| self.inner.covariates_of(i)).collect()
    }

    #[getter]
    fn a(&self) -> Vec<u8> {
        self.inner.treatment().to_vec()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.outcomes().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, d={}, treated={})",
            self.inner.n(),
            self.inner.d(),
            self.inner.n_treated()
        )
    }
}

fn parse_kernel(s: &str) -> PyResult<KernelFamily> {
    match s {
        "rbf" => Ok(KernelFamily::Rbf),
        "linear" => Ok(KernelFamily::Linear),
        other => Err(PyValueError::new_err(format!(
            "unknown kernel '{other}' (expected 'rbf' or 'linear')"
        ))),
    }
}

fn kernel_name(k: KernelFamily) -> &'static str {
    match k {
        KernelFamily::Rbf => "rbf",
        KernelFamily::Linear => "linear",
    }
}

/// Test options. `known_propensity=None` fits a clipped logistic model.
#[pyclass(name = "TestConfig", module = "pyxkte", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyTestConfig {
    inner: xkte::TestConfig,
}

#[pymethods]
impl PyTestConfig {
    #[new]
    #[pyo3(signature = (
        *,
        alpha = DEFAULT_ALPHA,
        permutations = DEFAULT_PERMUTATIONS,
        permutation_seed = 0,
        split_seed = None,
        kernel_x = "rbf",
        kernel_y = "rbf",
        bandwidth_x = None,
        bandwidth_y = None,
        lam = None,
        clip_eps = DEFAULT_CLIP_EPS,
        l2 = DEFAULT_L2,
        known_propensity = None,
        kte_unbiased = false,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha: f64,
        permutations: usize,
        permutation_seed: u64,
        split_seed: Option<u64>,
        kernel_x: &str,
        kernel_y: &str,
        bandwidth_x: Option<f64>,
        bandwidth_y: Option<f64>,
        lam: Option<f64>,
        clip_eps: f64,
        l2: f64,
        known_propensity: Option<f64>,
        kte_unbiased: bool,
    ) -> PyResult<Self> {
        let inner = xkte::TestConfig {
            kernel_x: parse_kernel(kernel_x)?,
            kernel_y: parse_kernel(kernel_y)?,
            bandwidth_x,
            bandwidth_y,
            lambda: lam,
            clip_eps,
            l2,
            split_seed,
            permutation_seed,
            permutations,
            propensity: known_propensity
                .map(PropensityMode::Known)
                .unwrap_or(PropensityMode::Logistic),
            alpha,
            kte_unbiased,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn permutations(&self) -> usize {
        self.inner.permutations
    }

    #[getter]
    fn kernel_y(&self) -> &'static str {
        kernel_name(self.inner.kernel_y)
    }

    fn __repr__(&self) -> String {
        format!(
            "TestConfig(alpha={}, permutations={}, kernel_x='{}', kernel_y='{}')",
            self.inner.alpha,
            self.inner.permutations,
            kernel_name(self.inner.kernel_x),
            kernel_name(self.inner.kernel_y)
        )
    }
}

#[pyclass(name = "TestResult", module = "pyxkte", frozen)]
pub struct PyTestResult {
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    statistic: f64,
    #[pyo3(get)]
    p_value: f64,
    #[pyo3(get)]
    alpha: f64,
    #[pyo3(get)]
    reject: bool,
    #[pyo3(get)]
    n_effective: usize,
    diagnostics_json: String,
}

#[pymethods]
impl PyTestResult {
    /// Diagnostics (bandwidths, λ, fold sizes, permutation settings) as JSON text.
    #[getter]
    fn diagnostics(&self) -> String {
        self.diagnostics_json.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "TestResult(method='{}', statistic={}, p_value={}, reject={})",
            self.method,
            self.statistic,
            self.p_value,
            if self.reject { "True" } else { "False" }
        )
    }
}

impl From<xkte::TestResult> for PyTestResult {
    fn from(r: xkte::TestResult) -> Self {
        Self {
            method: r.method.name().to_string(),
            statistic: r.statistic,
            p_value: r.p_value,
            alpha: r.alpha,
            reject: r.reject,
            n_effective: r.n_effective,
            diagnostics_json: serde_json::to_string(&r.diagnostics)
                .expect("diagnostics serialize"),
        }
    }
}

fn run(
    py: Python<'_>,
    method: Method,
    data: &PyDataset,
    config: Option<&PyTestConfig>,
) -> PyResult<PyTestResult> {
    let config = config.map(|c| c.inner.clone()).unwrap_or_default();
    let data = data.inner.clone();
    py.detach(move || xkte::run_test(method, &data, &config))
        .map(PyTestResult::from)
        .map_err(to_py)
}

/// Runs any method by name: aipw-xkte, ipw-xkte, kte or baseline-aipw.
#[pyfunction]
#[pyo3(signature = (method, data, config = None))]
fn run_test(
    py: Python<'_>,
    method: &str,
    data: &PyDataset,
    config: Option<&PyTestConfig>,
) -> PyResult<PyTestResult> {
    let method: Method = method.parse().map_err(to_py)?;
    run(py, method, data, config)
}

#[pyfunction]
#[pyo3(signature = (data, config = None))]
fn aipw_xkte(py: Python<'_>, data: &PyDataset, config: Option<&PyTestConfig>) -> PyResult<PyTestResult> {
    run(py, Method::AipwXkte, data, config)
}

#[pyfunction]
#[pyo3(signature = (data, config = None))]
fn ipw_xkte(py: Python<'_>, data: &PyDataset, config: Option<&PyTestConfig>) -> PyResult<PyTestResult> {
    run(py, Method::IpwXkte, data, config)
}

#[pyfunction]
#[pyo3(signature = (data, config = None))]
fn kte(py: Python<'_>, data: &PyDataset, config: Option<&PyTestConfig>) -> PyResult<PyTestResult> {
    run(py, Method::Kte, data, config)
}

#[pyfunction]
#[pyo3(signature = (data, config = None))]
fn baseline_aipw(py: Python<'_>, data: &PyDataset, config: Option<&PyTestConfig>) -> PyResult<PyTestResult> {
    run(py, Method::BaselineAipw, data, config)
}

/// Synthetic scenario data (scenario I-IV, linear or cosine link).
#[pyfunction]
#[pyo3(signature = (scenario, n, seed = 0, link = "linear", design = "observational", d_x = DEFAULT_DX))]
fn generate(
    scenario: &str,
    n: usize,
    seed: u64,
    link: &str,
    design: &str,
    d_x: usize,
) -> PyResult<PyDataset> {
    let config = ScenarioConfig {
        scenario: scenario.parse::<Scenario>().map_err(to_py)?,
        link: link.parse::<Link>().map_err(to_py)?,
        design: design.parse::<Design>().map_err(to_py)?,
        n,
        seed,
        d_x,
    };
    let inner = xkte::generate(&config).map_err(to_py)?;
    Ok(PyDataset { inner })
}

/// Median of pairwise squared distances between the rows of `points`.
#[pyfunction]
fn median_heuristic(points: Vec<Vec<f64>>) -> PyResult<f64> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if points.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let flat: Vec<f64> = points.into_iter().flatten().collect();
    let m = nalgebra::DMatrix::from_row_slice(n, d, &flat);
    xkte::median_heuristic(&m).map_err(to_py)
}

#[pyfunction]
fn std_normal_cdf(t: f64) -> f64 {
    xkte::std_normal_cdf(t)
}

#[pymodule]
fn pyxkte(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", xkte::VERSION)?;
    m.add("XkteError", m.py().get_type::<XkteError>())?;
    m.add("DegenerateError", m.py().get_type::<DegenerateError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyTestConfig>()?;
    m.add_class::<PyTestResult>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run_test, m)?)?;
    m.add_function(wrap_pyfunction!(aipw_xkte, m)?)?;
    m.add_function(wrap_pyfunction!(ipw_xkte, m)?)?;
    m.add_function(wrap_pyfunction!(kte, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_aipw, m)?)?;
    m.add_function(wrap_pyfunction!(median_heuristic, m)?)?;
    m.add_function(wrap_pyfunction!(std_normal_cdf, m)?)?;
    Ok(())
}
