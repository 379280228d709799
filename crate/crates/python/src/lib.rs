//! Python bindings: configuration, quantum geometry, estimation bounds,
//! classical Fisher information, minimum-detectable couplings, the table
//! reproduction, the shot-noise Monte Carlo and the invariant suite.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyComplex, PyDict};

use qmet_core::beam::MinDetectable;
use qmet_core::config::{ExperimentConfig, KEYS};
use qmet_core::estimation::{self, BoundPoint, GeneratorPair, QuantumGeometry};
use qmet_core::fisher::{Cfim, CfimMethod};
use qmet_core::fock::{self, fock_state, quadrature_operators, FockSpace};
use qmet_core::shot_noise::{self, Channel, SimResult, Table1Row, Threshold, WeakValueModel};
use qmet_core::validate::{self, Criterion};
use qmet_core::weak::{self as core_weak, SystemOperator, TwoLevelState};

create_exception!(qmet, QmetError, PyValueError, "Raised when a qmet computation rejects its inputs.");

fn py_err(err: qmet_core::QmetError) -> PyErr {
    QmetError::new_err(err.to_string())
}

fn xy(point: &BoundPoint) -> (f64, f64) {
    (point.x, point.y)
}

/// Experiment configuration; keyword arguments override the defaults.
#[pyclass(name = "Config", module = "qmet")]
struct PyConfig {
    inner: ExperimentConfig,
}

fn value_text(value: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(list) = value.extract::<Vec<usize>>() {
        return Ok(list.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    }
    Ok(value.str()?.to_string())
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut config = Self { inner: ExperimentConfig::default() };
        if let Some(overrides) = overrides {
            for (key, value) in overrides.iter() {
                config.set(&key.extract::<String>()?, &value)?;
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Parse a flat `key = value` configuration text.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::from_text(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn keys() -> Vec<&'static str> {
        KEYS.to_vec()
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        self.inner.set(key, &value_text(value)?).map_err(py_err)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner.entries().remove(key).ok_or_else(|| QmetError::new_err(format!("unknown key {key:?}")))
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Config(seed={}, trials={}, modes={:?})", self.inner.seed, self.inner.trials, self.inner.modes)
    }
}

/// Quantum Fisher information, Berry curvature and incompatibility criterion.
#[pyclass(name = "Geometry", module = "qmet", frozen, get_all)]
struct PyGeometry {
    qfim: [[f64; 2]; 2],
    berry: f64,
    qmec: f64,
    normalized_curvature: f64,
    compatible: bool,
}

impl From<QuantumGeometry> for PyGeometry {
    fn from(g: QuantumGeometry) -> Self {
        Self {
            qfim: g.qfim,
            berry: g.berry,
            qmec: g.qmec,
            normalized_curvature: g.normalized_curvature,
            compatible: g.compatible,
        }
    }
}

#[pymethods]
impl PyGeometry {
    fn __repr__(&self) -> String {
        format!("Geometry(qfim={:?}, berry={}, qmec={})", self.qfim, self.berry, self.qmec)
    }
}

/// Geometry of the displacement and tilt generators on the Hermite-Gaussian
/// mode `n`.
#[pyfunction]
#[pyo3(signature = (n, sigma0 = 1.0))]
fn mode_geometry(n: usize, sigma0: f64) -> PyResult<PyGeometry> {
    let space = FockSpace::for_mode(n, sigma0).map_err(py_err)?;
    let (p, x) = quadrature_operators(space);
    let pair = GeneratorPair::new(p, x, fock_state(space, n).map_err(py_err)?).map_err(py_err)?;
    Ok(estimation::quantum_geometry(&pair).map_err(py_err)?.into())
}

/// Normalized Hermite-Gaussian wavefunction of order `n` at position `x`.
#[pyfunction]
fn hermite_wavefunction(n: usize, sigma0: f64, x: f64) -> f64 {
    fock::hermite_wavefunction(n, sigma0, x)
}

/// Weak value of the horizontal projector for diagonal pre-selection and
/// post-selection at `epsilon` radians.
#[pyfunction]
fn weak_value<'py>(py: Python<'py>, epsilon: f64) -> PyResult<Bound<'py, PyComplex>> {
    let w = core_weak::weak_value(
        &TwoLevelState::diagonal(),
        &TwoLevelState::postselection(epsilon),
        &SystemOperator::horizontal_projector(),
    )
    .map_err(py_err)?;
    Ok(PyComplex::from_doubles(py, w.value.re, w.value.im))
}

/// `(x, y)` samples of the trade-off curve for criterion `s`.
#[pyfunction]
#[pyo3(signature = (s, num_points = 200))]
fn tradeoff_curve(s: f64, num_points: usize) -> PyResult<Vec<(f64, f64)>> {
    Ok(estimation::tradeoff_curve(s, num_points).map_err(py_err)?.points.iter().map(xy).collect())
}

/// Left and right endpoints of the trade-off curve for mode `n`.
#[pyfunction]
fn tradeoff_endpoints(n: usize) -> PyResult<((f64, f64), (f64, f64))> {
    let (left, right) = estimation::tradeoff_endpoints(n).map_err(py_err)?;
    Ok((xy(&left), xy(&right)))
}

/// `(x, y)` samples of the Holevo line for normalized curvature `c_tilde`.
#[pyfunction]
#[pyo3(signature = (c_tilde, num_points = 200))]
fn holevo_bound(c_tilde: f64, num_points: usize) -> PyResult<Vec<(f64, f64)>> {
    Ok(estimation::holevo_bound(c_tilde, num_points).map_err(py_err)?.points.iter().map(xy).collect())
}

/// Classical Fisher information matrix.
#[pyclass(name = "Cfim", module = "qmet", frozen, get_all)]
struct PyCfim {
    matrix: [[f64; 2]; 2],
    method: &'static str,
}

impl From<&Cfim> for PyCfim {
    fn from(c: &Cfim) -> Self {
        Self { matrix: c.matrix, method: c.method.as_str() }
    }
}

#[pymethods]
impl PyCfim {
    fn __repr__(&self) -> String {
        format!("Cfim(method={:?}, matrix={:?})", self.method, self.matrix)
    }
}

/// Numeric versus analytic CFIM at one operating point, in normalized units.
#[pyclass(name = "CfimReport", module = "qmet", frozen, get_all)]
struct PyCfimReport {
    n: usize,
    g_tilde: f64,
    numeric: Py<PyCfim>,
    analytic: Py<PyCfim>,
    qfim: [[f64; 2]; 2],
    relative_defect: f64,
    ordering_gap: f64,
}

/// CFIM of the exact pointer for `method` (`"nonorthogonal"` or
/// `"direct_imaging"`) at normalized coupling `g_tilde` (default: config
/// `cfim_offset`).
#[pyfunction]
#[pyo3(signature = (config, n, method = "nonorthogonal", g_tilde = None))]
fn cfim(py: Python<'_>, config: &PyConfig, n: usize, method: &str, g_tilde: Option<f64>) -> PyResult<PyCfimReport> {
    let method = match method {
        "nonorthogonal" => CfimMethod::NonOrthogonal,
        "direct_imaging" => CfimMethod::DirectImaging,
        other => return Err(QmetError::new_err(format!("unknown method {other:?}"))),
    };
    let g = g_tilde.unwrap_or(config.inner.cfim_offset);
    let inner = config.inner.clone();
    let report = py.detach(move || validate::cfim_report(&inner, n, method, g)).map_err(py_err)?;
    Ok(PyCfimReport {
        n: report.n,
        g_tilde: report.g_tilde,
        numeric: Py::new(py, PyCfim::from(&report.numeric))?,
        analytic: Py::new(py, PyCfim::from(&report.analytic))?,
        qfim: report.qfim,
        relative_defect: report.relative_defect(),
        ordering_gap: report.ordering_gap(),
    })
}

/// Minimum detectable couplings (`g1` m, `g2` 1/m) and mirror motions (`d` m,
/// `phi` rad).
#[pyclass(name = "MinDetectable", module = "qmet", frozen, get_all)]
struct PyMinDetectable {
    g1: f64,
    g2: f64,
    d: f64,
    phi: f64,
}

impl From<MinDetectable> for PyMinDetectable {
    fn from(m: MinDetectable) -> Self {
        Self { g1: m.g1, g2: m.g2, d: m.d, phi: m.phi }
    }
}

#[pymethods]
impl PyMinDetectable {
    fn __repr__(&self) -> String {
        format!("MinDetectable(g1={:e}, g2={:e}, d={:e}, phi={:e})", self.g1, self.g2, self.d, self.phi)
    }
}

/// Shot-noise-limited minimum detectable values for mode `n`.
#[pyfunction]
fn min_detectable(config: &PyConfig, n: usize) -> PyResult<PyMinDetectable> {
    Ok(shot_noise::analytic_min_detectable(&config.inner, n).map_err(py_err)?.into())
}

fn parse_channel(name: &str) -> PyResult<Channel> {
    match name {
        "g1" => Ok(Channel::G1),
        "g2" => Ok(Channel::G2),
        other => Err(QmetError::new_err(format!("unknown channel {other:?}; expected g1 or g2"))),
    }
}

/// Analytic SNR of the `channel` (`"g1"` or `"g2"`) line for coupling `g`.
#[pyfunction]
fn analytic_snr(n: usize, nu: f64, epsilon: f64, sigma0: f64, channel: &str, g: f64) -> PyResult<f64> {
    shot_noise::analytic_snr(n, nu, epsilon, sigma0, parse_channel(channel)?, g).map_err(py_err)
}

/// Magnitude of the weak value used by the readout model (`"small_angle"` or
/// `"exact"`).
#[pyfunction]
fn weak_value_magnitude(model: &str, epsilon: f64) -> PyResult<f64> {
    let model: WeakValueModel = model.parse().map_err(py_err)?;
    Ok(model.magnitude(epsilon))
}

/// Monte Carlo threshold at one channel.
#[pyclass(name = "Threshold", module = "qmet", frozen, get_all)]
struct PyThreshold {
    volts: f64,
    volts_se: f64,
    value: f64,
    value_se: f64,
    evaluations: usize,
}

impl From<Threshold> for PyThreshold {
    fn from(t: Threshold) -> Self {
        Self { volts: t.volts, volts_se: t.volts_se, value: t.value, value_se: t.value_se, evaluations: t.evaluations }
    }
}

/// Result of the photon-counting Monte Carlo for one mode.
#[pyclass(name = "SimResult", module = "qmet", frozen, get_all)]
struct PySimResult {
    n: usize,
    snr1: f64,
    snr1_se: f64,
    snr2: f64,
    snr2_se: f64,
    analytic_snr1: f64,
    analytic_snr2: f64,
    min_detectable: Py<PyMinDetectable>,
    analytic_min_detectable: Py<PyMinDetectable>,
    threshold1: Py<PyThreshold>,
    threshold2: Py<PyThreshold>,
    spectrum_peaks: (f64, f64),
    trials_used: usize,
    seed: u64,
}

impl PySimResult {
    fn new(py: Python<'_>, r: SimResult) -> PyResult<Self> {
        Ok(Self {
            n: r.n,
            snr1: r.snr1,
            snr1_se: r.snr1_se,
            snr2: r.snr2,
            snr2_se: r.snr2_se,
            analytic_snr1: r.analytic_snr1,
            analytic_snr2: r.analytic_snr2,
            min_detectable: Py::new(py, PyMinDetectable::from(r.min_detectable))?,
            analytic_min_detectable: Py::new(py, PyMinDetectable::from(r.analytic_min_detectable))?,
            threshold1: Py::new(py, PyThreshold::from(r.threshold1))?,
            threshold2: Py::new(py, PyThreshold::from(r.threshold2))?,
            spectrum_peaks: r.spectrum_peaks,
            trials_used: r.trials_used,
            seed: r.seed,
        })
    }
}

#[pymethods]
impl PySimResult {
    fn __repr__(&self) -> String {
        format!("SimResult(n={}, snr1={}, snr2={}, trials={}, seed={})", self.n, self.snr1, self.snr2, self.trials_used, self.seed)
    }
}

/// Monte Carlo SNR and detection thresholds for mode `n`.
#[pyfunction]
fn monte_carlo(py: Python<'_>, config: &PyConfig, n: usize) -> PyResult<PySimResult> {
    let inner = config.inner.clone();
    let result = py.detach(move || shot_noise::monte_carlo_snr(&inner, n)).map_err(py_err)?;
    PySimResult::new(py, result)
}

/// One row of the minimum-detectable table reproduction.
#[pyclass(name = "Table1Row", module = "qmet", frozen, get_all)]
struct PyTable1Row {
    n: usize,
    analytic: Py<PyMinDetectable>,
    reference: Py<PyMinDetectable>,
    reference_volts: (f64, f64),
    voltage_g1: f64,
    voltage_g2: f64,
    implied_d: f64,
    implied_phi: f64,
    analytic_deviation: f64,
    voltage_deviation: f64,
    monte_carlo: Option<Py<PySimResult>>,
}

impl PyTable1Row {
    fn new(py: Python<'_>, row: Table1Row) -> PyResult<Self> {
        let analytic_deviation = row.analytic_deviation();
        let voltage_deviation = row.voltage_deviation();
        let monte_carlo = match row.monte_carlo {
            Some(r) => Some(Py::new(py, PySimResult::new(py, r)?)?),
            None => None,
        };
        Ok(Self {
            n: row.n,
            analytic: Py::new(py, PyMinDetectable::from(row.analytic))?,
            reference: Py::new(py, PyMinDetectable::from(row.reference.values))?,
            reference_volts: (row.reference.volts1, row.reference.volts2),
            voltage_g1: row.voltage_g1,
            voltage_g2: row.voltage_g2,
            implied_d: row.implied_d,
            implied_phi: row.implied_phi,
            analytic_deviation,
            voltage_deviation,
            monte_carlo,
        })
    }
}

/// Reproduction of the measured minimum-detectable table, optionally with the
/// Monte Carlo columns.
#[pyfunction]
#[pyo3(signature = (config, with_monte_carlo = false))]
fn table1(py: Python<'_>, config: &PyConfig, with_monte_carlo: bool) -> PyResult<Vec<PyTable1Row>> {
    let inner = config.inner.clone();
    let rows = py.detach(move || shot_noise::table1_reproduction(&inner, with_monte_carlo)).map_err(py_err)?;
    rows.into_iter().map(|row| PyTable1Row::new(py, row)).collect()
}

/// Outcome of one named group of checks.
#[pyclass(name = "Criterion", module = "qmet", frozen, get_all)]
struct PyCriterion {
    id: String,
    title: String,
    passed: bool,
    /// `(name, value, tolerance, passed)` per check.
    checks: Vec<(String, f64, f64, bool)>,
}

impl From<Criterion> for PyCriterion {
    fn from(c: Criterion) -> Self {
        let passed = c.passed();
        let checks = c.checks.into_iter().map(|k| (k.name, k.value, k.tolerance, k.passed)).collect();
        Self { id: c.id, title: c.title, passed, checks }
    }
}

#[pymethods]
impl PyCriterion {
    fn __repr__(&self) -> String {
        format!("Criterion({}, passed={})", self.id, if self.passed { "True" } else { "False" })
    }
}

/// Run the invariant suite: the acceptance criteria plus supporting checks.
#[pyfunction]
fn validate_suite(py: Python<'_>, config: &PyConfig) -> PyResult<Vec<PyCriterion>> {
    let inner = config.inner.clone();
    let suite = py.detach(move || validate::invariant_suite(&inner)).map_err(py_err)?;
    Ok(suite.into_iter().map(PyCriterion::from).collect())
}

#[pymodule]
fn qmet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("QmetError", m.py().get_type::<QmetError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyCfim>()?;
    m.add_class::<PyCfimReport>()?;
    m.add_class::<PyMinDetectable>()?;
    m.add_class::<PyThreshold>()?;
    m.add_class::<PySimResult>()?;
    m.add_class::<PyTable1Row>()?;
    m.add_class::<PyCriterion>()?;
    m.add_function(wrap_pyfunction!(mode_geometry, m)?)?;
    m.add_function(wrap_pyfunction!(hermite_wavefunction, m)?)?;
    m.add_function(wrap_pyfunction!(weak_value, m)?)?;
    m.add_function(wrap_pyfunction!(weak_value_magnitude, m)?)?;
    m.add_function(wrap_pyfunction!(tradeoff_curve, m)?)?;
    m.add_function(wrap_pyfunction!(tradeoff_endpoints, m)?)?;
    m.add_function(wrap_pyfunction!(holevo_bound, m)?)?;
    m.add_function(wrap_pyfunction!(cfim, m)?)?;
    m.add_function(wrap_pyfunction!(min_detectable, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_snr, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(table1, m)?)?;
    m.add_function(wrap_pyfunction!(validate_suite, m)?)?;
    Ok(())
}
