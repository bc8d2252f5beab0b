//! Python bindings: rate sets, drive configurations, the steady state, the
//! gain formulas, the lasing solver and scenario runs.

use std::path::PathBuf;

use lwi_core::bloch::{validate_rates, CoherenceVector, DriveConfig, RateSet};
use lwi_core::cavity::{self, Branch, GainModel};
use lwi_core::config::{apply_assignment, resolve, user_table, Scenario};
use lwi_core::constants::Constants;
use lwi_core::gain;
use lwi_core::scenario::run_scenario as run_core;
use lwi_core::steady;
use lwi_core::vapor::{self, VaporConditions};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Decay rates (MHz) and branching fraction.
#[pyclass(name = "RateSet", module = "lwi", from_py_object)]
#[derive(Clone)]
struct PyRateSet {
    inner: RateSet,
}

#[pymethods]
impl PyRateSet {
    #[new]
    #[pyo3(signature = (gamma_a, f, gamma_b, gamma_c, gamma_bc, gamma_ba, gamma_ac))]
    fn new(
        gamma_a: f64,
        f: f64,
        gamma_b: f64,
        gamma_c: f64,
        gamma_bc: f64,
        gamma_ba: f64,
        gamma_ac: f64,
    ) -> Self {
        Self {
            inner: RateSet {
                gamma_a,
                gamma_b,
                gamma_c,
                gamma_bc,
                gamma_ba,
                gamma_ac,
                f,
            },
        }
    }

    /// The rubidium preset.
    #[staticmethod]
    fn preset() -> Self {
        Self {
            inner: lwi_core::config::preset(Scenario::SinglePoint).rates,
        }
    }

    /// Every violated constraint, as text; empty when valid.
    fn violations(&self) -> Vec<String> {
        validate_rates(&self.inner)
            .iter()
            .map(|v| v.to_string())
            .collect()
    }

    fn coherence_floor(&self) -> f64 {
        self.inner.coherence_floor()
    }

    #[getter]
    fn gamma_a(&self) -> f64 {
        self.inner.gamma_a
    }
    #[getter]
    fn f(&self) -> f64 {
        self.inner.f
    }
    #[getter]
    fn gamma_b(&self) -> f64 {
        self.inner.gamma_b
    }
    #[getter]
    fn gamma_c(&self) -> f64 {
        self.inner.gamma_c
    }
    #[getter]
    fn gamma_bc(&self) -> f64 {
        self.inner.gamma_bc
    }
    #[getter]
    fn gamma_ba(&self) -> f64 {
        self.inner.gamma_ba
    }
    #[getter]
    fn gamma_ac(&self) -> f64 {
        self.inner.gamma_ac
    }

    fn __repr__(&self) -> String {
        let r = &self.inner;
        format!(
            "RateSet(gamma_a={}, f={}, gamma_b={}, gamma_c={}, gamma_bc={}, gamma_ba={}, gamma_ac={})",
            r.gamma_a, r.f, r.gamma_b, r.gamma_c, r.gamma_bc, r.gamma_ba, r.gamma_ac
        )
    }
}

/// Coupling Rabi frequency, cavity amplitude and atom-field coupling.
#[pyclass(name = "DriveConfig", module = "lwi", from_py_object)]
#[derive(Clone)]
struct PyDriveConfig {
    inner: DriveConfig,
}

#[pymethods]
impl PyDriveConfig {
    /// Built from the collective coupling `g_sqrt_n` (MHz) and density (m^-3).
    #[new]
    #[pyo3(signature = (omega, g_sqrt_n, n_density, a = 0.0))]
    fn new(omega: f64, g_sqrt_n: f64, n_density: f64, a: f64) -> Self {
        Self {
            inner: DriveConfig::from_collective(omega, a, g_sqrt_n, n_density),
        }
    }

    fn with_amplitude(&self, a: f64) -> Self {
        Self {
            inner: self.inner.with_amplitude(a),
        }
    }

    fn with_omega(&self, omega: f64) -> Self {
        Self {
            inner: self.inner.with_omega(omega),
        }
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }
    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }
    #[getter]
    fn g(&self) -> f64 {
        self.inner.g
    }
    #[getter]
    fn n_density(&self) -> f64 {
        self.inner.n_density
    }
    #[getter]
    fn g_sqrt_n(&self) -> f64 {
        self.inner.collective_coupling()
    }

    fn __repr__(&self) -> String {
        let d = &self.inner;
        format!(
            "DriveConfig(omega={}, g_sqrt_n={}, n_density={}, a={})",
            d.omega,
            d.collective_coupling(),
            d.n_density,
            d.a
        )
    }
}

fn state_dict<'py>(py: Python<'py>, s: &CoherenceVector) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rho_aa", s.rho_aa)?;
    d.set_item("rho_bb", s.rho_bb)?;
    d.set_item("rho_cc", s.rho_cc())?;
    d.set_item("i_rho_ab", s.u)?;
    d.set_item("rho_cb", s.v)?;
    d.set_item("i_rho_ca", s.w)?;
    d.set_item("inversion", s.inversion())?;
    Ok(d)
}

fn model_from(name: &str) -> PyResult<GainModel> {
    match name {
        "full" => Ok(GainModel::Full),
        "large-omega" => Ok(GainModel::LargeOmega),
        other => Err(value_err(format!(
            "unknown gain model `{other}` (full or large-omega)"
        ))),
    }
}

/// Steady state from the linear solve, as a dict of density-matrix entries.
#[pyfunction]
fn steady_state<'py>(
    py: Python<'py>,
    rates: &PyRateSet,
    drive: &PyDriveConfig,
) -> PyResult<Bound<'py, PyDict>> {
    let s = steady::steady_state(&rates.inner, &drive.inner).map_err(value_err)?;
    state_dict(py, &s)
}

/// Steady state reached by time integration from the unpumped ground state.
#[pyfunction]
#[pyo3(signature = (rates, drive, tolerance = 1e-12, t_max = 1e8))]
fn integrate_to_steady<'py>(
    py: Python<'py>,
    rates: &PyRateSet,
    drive: &PyDriveConfig,
    tolerance: f64,
    t_max: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = steady::integrate_to_steady(&rates.inner, &drive.inner, tolerance, t_max)
        .map_err(runtime_err)?;
    let d = state_dict(py, &r.final_state)?;
    d.set_item("converged", r.converged)?;
    d.set_item("residual_norm", r.residual_norm)?;
    d.set_item("elapsed_model_time", r.elapsed_model_time)?;
    Ok(d)
}

/// Small-signal gain from the closed form (MHz).
#[pyfunction]
fn linear_gain(rates: &PyRateSet, drive: &PyDriveConfig) -> f64 {
    gain::linear_gain_closed(&rates.inner, &drive.inner).value
}

/// Small-signal gain extracted from steady states at vanishing amplitude (MHz).
#[pyfunction]
fn linear_gain_numeric(rates: &PyRateSet, drive: &PyDriveConfig) -> PyResult<f64> {
    let probe = gain::default_probe_amplitude(&rates.inner, &drive.inner);
    gain::linear_gain_numeric(&rates.inner, &drive.inner, probe).map_err(value_err)
}

/// Saturated gain at the drive's amplitude from the full steady state (MHz).
#[pyfunction]
fn saturated_gain(rates: &PyRateSet, drive: &PyDriveConfig) -> PyResult<f64> {
    gain::saturated_gain_full(&rates.inner, &drive.inner).map_err(value_err)
}

/// Large-Ω closed-form saturated gain (MHz).
#[pyfunction]
fn saturated_gain_approx(rates: &PyRateSet, drive: &PyDriveConfig) -> f64 {
    gain::saturated_gain_approx(&rates.inner, &drive.inner)
}

/// `2 g²N γ_b / Ω²` (MHz).
#[pyfunction]
fn rough_gain(rates: &PyRateSet, drive: &PyDriveConfig) -> f64 {
    gain::rough_gain(&rates.inner, &drive.inner)
}

/// `ρ_aa − ρ_bb` at vanishing cavity field.
#[pyfunction]
fn inversion(rates: &PyRateSet, omega: f64) -> f64 {
    gain::inversion_closed(&rates.inner, omega)
}

/// Which leg of the lambda system can show gain.
#[pyfunction]
fn classify_legs(rates: &PyRateSet) -> PyResult<&'static str> {
    if !validate_rates(&rates.inner).is_empty() {
        return Err(value_err("rates violate their constraints"));
    }
    Ok(gain::classify_legs(&rates.inner).as_str())
}

/// Ω = calibration·√P, with the default calibration through 148 MHz at 21.8 mW.
#[pyfunction]
#[pyo3(signature = (power_mw, calibration = None))]
fn power_to_rabi(power_mw: f64, calibration: Option<f64>) -> PyResult<f64> {
    cavity::power_to_rabi(
        power_mw,
        calibration.unwrap_or_else(cavity::reference_rabi_calibration),
    )
    .map_err(value_err)
}

/// Steady lasing solution for cavity amplitude decay rate `loss` (MHz).
#[pyfunction]
#[pyo3(signature = (rates, drive, loss, model = "full"))]
fn steady_intensity<'py>(
    py: Python<'py>,
    rates: &PyRateSet,
    drive: &PyDriveConfig,
    loss: f64,
    model: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let s = cavity::steady_intensity(&rates.inner, &drive.inner, loss, model_from(model)?)
        .map_err(runtime_err)?;
    let d = PyDict::new(py);
    d.set_item("intensity", s.intensity)?;
    d.set_item("amplitude", s.amplitude)?;
    d.set_item("gain_at_solution", s.gain_at_solution)?;
    d.set_item(
        "branch",
        match s.branch {
            Branch::Stable => "stable",
            Branch::Unstable => "unstable",
            Branch::None => "none",
        },
    )?;
    Ok(d)
}

/// Ω intervals where the small-signal gain exceeds `loss`.
#[pyfunction]
fn lasing_window_omega(
    rates: &PyRateSet,
    drive: &PyDriveConfig,
    loss: f64,
    omega_min: f64,
    omega_max: f64,
) -> Vec<(f64, f64)> {
    cavity::lasing_window_omega(&rates.inner, &drive.inner, loss, (omega_min, omega_max))
}

/// Rb D1 Doppler FWHM at temperature `t` (K), MHz.
#[pyfunction]
fn doppler_fwhm(t: f64) -> f64 {
    let c = Constants::embedded();
    vapor::doppler_fwhm(&VaporConditions::rb87_d1(t, c), c)
}

/// Saturated Rb density at temperature `t` (K), m^-3.
#[pyfunction]
fn vapor_density(t: f64) -> PyResult<f64> {
    vapor::vapor_density(t, Constants::embedded()).map_err(value_err)
}

/// Resonant optical depth of the 7 cm cell at temperature `t` (K).
#[pyfunction]
fn optical_depth(t: f64) -> PyResult<f64> {
    let c = Constants::embedded();
    vapor::optical_depth_at_temperature(&VaporConditions::rb87_d1(t, c), c)
        .map(|p| p.optical_depth)
        .map_err(value_err)
}

/// Runs a scenario preset with `key=value` overrides; returns the files written.
#[pyfunction]
#[pyo3(signature = (scenario, out_dir, overrides = Vec::new()))]
fn run_scenario(
    scenario: &str,
    out_dir: PathBuf,
    overrides: Vec<String>,
) -> PyResult<Vec<PathBuf>> {
    let mut table = user_table(&format!("scenario = \"{scenario}\"")).map_err(value_err)?;
    for o in &overrides {
        apply_assignment(&mut table, o).map_err(value_err)?;
    }
    let cfg = resolve(table, Constants::embedded()).map_err(value_err)?;
    run_core(&cfg, &out_dir)
        .map(|o| o.files)
        .map_err(runtime_err)
}

/// The resolved preset of a scenario as TOML.
#[pyfunction]
fn preset_config(scenario: &str) -> PyResult<String> {
    let sc: Scenario = scenario.parse().map_err(value_err)?;
    Ok(lwi_core::config::preset(sc).to_toml())
}

#[pymodule]
fn lwi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRateSet>()?;
    m.add_class::<PyDriveConfig>()?;
    m.add_function(wrap_pyfunction!(steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_to_steady, m)?)?;
    m.add_function(wrap_pyfunction!(linear_gain, m)?)?;
    m.add_function(wrap_pyfunction!(linear_gain_numeric, m)?)?;
    m.add_function(wrap_pyfunction!(saturated_gain, m)?)?;
    m.add_function(wrap_pyfunction!(saturated_gain_approx, m)?)?;
    m.add_function(wrap_pyfunction!(rough_gain, m)?)?;
    m.add_function(wrap_pyfunction!(inversion, m)?)?;
    m.add_function(wrap_pyfunction!(classify_legs, m)?)?;
    m.add_function(wrap_pyfunction!(power_to_rabi, m)?)?;
    m.add_function(wrap_pyfunction!(steady_intensity, m)?)?;
    m.add_function(wrap_pyfunction!(lasing_window_omega, m)?)?;
    m.add_function(wrap_pyfunction!(doppler_fwhm, m)?)?;
    m.add_function(wrap_pyfunction!(vapor_density, m)?)?;
    m.add_function(wrap_pyfunction!(optical_depth, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    Ok(())
}
