//! Hot-vapor context: Doppler width, saturated vapor density, optical depth,
//! thermal velocities and the exchange-collision rate estimate, plus the
//! template that scales the collisional rates with density.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloch::{DriveConfig, RateSet};
use crate::constants::Constants;
use crate::roots::bisect;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VaporError {
    #[error(
        "temperature {temperature} K is outside the vapor-pressure fit range [{t_min}, {t_max}] K"
    )]
    TemperatureOutOfRange {
        temperature: f64,
        t_min: f64,
        t_max: f64,
    },
    #[error("density {0:e} m^-3 is outside the range covered by the vapor-pressure fit")]
    DensityOutOfRange(f64),
    #[error("exchange cross-section {0:e} m^2 is outside the plausible window [1e-19, 1e-16] m^2")]
    ImplausibleCrossSection(f64),
    #[error("invalid vapor conditions: {0}")]
    Invalid(String),
}

/// Cell and transition parameters for one temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaporConditions {
    /// K
    pub temperature: f64,
    /// m
    pub wavelength: f64,
    /// kg
    pub atomic_mass: f64,
    /// m
    pub cell_length: f64,
    pub refractive_index: f64,
    /// Upper-level decay rate used in the cross-section (MHz).
    pub natural_linewidth: f64,
}

impl VaporConditions {
    /// ⁸⁷Rb D1 line in a 7 cm cell with unit refractive index.
    pub fn rb87_d1(temperature: f64, constants: &Constants) -> Self {
        Self {
            temperature,
            wavelength: constants.rb87.d1_wavelength,
            atomic_mass: constants.rb87.mass,
            cell_length: 0.07,
            refractive_index: 1.0,
            natural_linewidth: constants.rb87.d1_natural_linewidth,
        }
    }

    pub fn at_temperature(self, temperature: f64) -> Self {
        Self {
            temperature,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), VaporError> {
        let mut bad = Vec::new();
        if !(self.temperature > 0.0) {
            bad.push(format!("temperature must be > 0, got {}", self.temperature));
        }
        if !(self.cell_length > 0.0) {
            bad.push(format!("cell_length must be > 0, got {}", self.cell_length));
        }
        if !(self.refractive_index >= 1.0) {
            bad.push(format!(
                "refractive_index must be >= 1, got {}",
                self.refractive_index
            ));
        }
        if !(self.wavelength > 0.0 && self.atomic_mass > 0.0 && self.natural_linewidth > 0.0) {
            bad.push("wavelength, atomic_mass and natural_linewidth must be > 0".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(VaporError::Invalid(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityConvention {
    /// `√(2kT/m)`
    MostProbable,
    /// `√(8kT/πm)`
    Mean,
    /// `√2` times the mean speed.
    MeanRelative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionModel {
    /// Spin-exchange cross-section (m²).
    pub cross_section: f64,
    pub velocity_convention: VelocityConvention,
}

impl CollisionModel {
    pub fn validate(&self) -> Result<(), VaporError> {
        if (1e-19..=1e-16).contains(&self.cross_section) {
            Ok(())
        } else {
            Err(VaporError::ImplausibleCrossSection(self.cross_section))
        }
    }
}

/// Doppler FWHM in MHz.
pub fn doppler_fwhm(cond: &VaporConditions, constants: &Constants) -> f64 {
    let c = constants.physical.speed_of_light;
    let k = constants.physical.boltzmann;
    let nu = c / cond.wavelength;
    nu * (8.0 * k * cond.temperature * std::f64::consts::LN_2 / (cond.atomic_mass * c * c)).sqrt()
        / 1e6
}

/// Saturated number density (m⁻³) from the vapor-pressure fit and the ideal gas law.
pub fn vapor_density(temperature: f64, constants: &Constants) -> Result<f64, VaporError> {
    let fit = &constants.rb87.vapor_pressure;
    if !(temperature > fit.t_min && temperature < fit.t_max) {
        return Err(VaporError::TemperatureOutOfRange {
            temperature,
            t_min: fit.t_min,
            t_max: fit.t_max,
        });
    }
    let pressure = fit.pressure_torr(temperature) * constants.physical.torr;
    Ok(pressure / (constants.physical.boltzmann * temperature))
}

/// Temperature (K) at which the saturated density equals `density`.
pub fn temperature_for_density(density: f64, constants: &Constants) -> Result<f64, VaporError> {
    let fit = &constants.rb87.vapor_pressure;
    // stay strictly inside the open range
    let lo = fit.t_min + 1e-9;
    let hi = fit.t_max - 1e-9;
    let n_lo = vapor_density(lo, constants)?;
    let n_hi = vapor_density(hi, constants)?;
    if !(density >= n_lo && density <= n_hi) {
        return Err(VaporError::DensityOutOfRange(density));
    }
    // log density is smooth and monotone in T
    let target = density.ln();
    let t = bisect(
        |t| vapor_density(t, constants).map(f64::ln).unwrap_or(f64::NAN) - target,
        lo,
        hi,
        1e-12,
        200,
    )
    .ok_or(VaporError::DensityOutOfRange(density))?;
    Ok(t)
}

/// Resonant optical depth `N·(3λ²/8πn²)·(γ/Δ_D)·l`, with `doppler` in MHz.
pub fn optical_depth(cond: &VaporConditions, density: f64, doppler: f64) -> f64 {
    let n2 = cond.refractive_index * cond.refractive_index;
    let sigma = 3.0 * cond.wavelength * cond.wavelength / (8.0 * std::f64::consts::PI * n2)
        * (cond.natural_linewidth / doppler);
    density * sigma * cond.cell_length
}

/// Saturated density, Doppler width and optical depth at the temperature of `cond`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpticalDepthPoint {
    pub temperature_k: f64,
    pub n_density: f64,
    pub doppler_fwhm_mhz: f64,
    pub optical_depth: f64,
}

pub fn optical_depth_at_temperature(
    cond: &VaporConditions,
    constants: &Constants,
) -> Result<OpticalDepthPoint, VaporError> {
    let n = vapor_density(cond.temperature, constants)?;
    let doppler = doppler_fwhm(cond, constants);
    Ok(OpticalDepthPoint {
        temperature_k: cond.temperature,
        n_density: n,
        doppler_fwhm_mhz: doppler,
        optical_depth: optical_depth(cond, n, doppler),
    })
}

/// Like [`optical_depth_at_temperature`], but for the temperature at which
/// the saturated vapor reaches `density`.
pub fn optical_depth_at_density(
    cond: &VaporConditions,
    density: f64,
    constants: &Constants,
) -> Result<OpticalDepthPoint, VaporError> {
    let t = temperature_for_density(density, constants)?;
    let c = cond.at_temperature(t);
    let doppler = doppler_fwhm(&c, constants);
    Ok(OpticalDepthPoint {
        temperature_k: t,
        n_density: density,
        doppler_fwhm_mhz: doppler,
        optical_depth: optical_depth(&c, density, doppler),
    })
}

/// Thermal speed (m/s) under the chosen convention.
pub fn thermal_velocity(
    temperature: f64,
    mass: f64,
    convention: VelocityConvention,
    constants: &Constants,
) -> f64 {
    let kt_m = constants.physical.boltzmann * temperature / mass;
    match convention {
        VelocityConvention::MostProbable => (2.0 * kt_m).sqrt(),
        VelocityConvention::Mean => (8.0 * kt_m / std::f64::consts::PI).sqrt(),
        VelocityConvention::MeanRelative => {
            std::f64::consts::SQRT_2 * (8.0 * kt_m / std::f64::consts::PI).sqrt()
        }
    }
}

/// Exchange-collision rate `N·σ·v` in MHz.
pub fn collision_rate(
    density: f64,
    model: &CollisionModel,
    cond: &VaporConditions,
    constants: &Constants,
) -> f64 {
    let v = thermal_velocity(
        cond.temperature,
        cond.atomic_mass,
        model.velocity_convention,
        constants,
    );
    density * model.cross_section * v / 1e6
}

/// Scales the collisional rates linearly with density and the collective
/// coupling with its square root, keeping everything else fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityTemplate {
    pub n_ref: f64,
    pub rates_ref: RateSet,
    /// `g√N` at `n_ref` (MHz).
    pub g_sqrt_n_ref: f64,
}

impl DensityTemplate {
    pub fn new(n_ref: f64, rates_ref: RateSet, g_sqrt_n_ref: f64) -> Self {
        Self {
            n_ref,
            rates_ref,
            g_sqrt_n_ref,
        }
    }

    /// Rates and `g√N` at density `n`.
    pub fn at(&self, n: f64) -> (RateSet, f64) {
        let s = n / self.n_ref;
        let r = self.rates_ref;
        (
            RateSet {
                gamma_b: r.gamma_b * s,
                gamma_c: r.gamma_c * s,
                gamma_bc: r.gamma_bc * s,
                ..r
            },
            self.g_sqrt_n_ref * s.sqrt(),
        )
    }

    /// Single-atom coupling `g`, which does not change with density.
    pub fn g(&self) -> f64 {
        self.g_sqrt_n_ref / self.n_ref.sqrt()
    }

    pub fn drive_at(&self, n: f64, omega: f64) -> DriveConfig {
        DriveConfig {
            omega,
            a: 0.0,
            g: self.g(),
            n_density: n,
        }
    }
}

/// Convenience constructor for [`DensityTemplate`].
pub fn density_template(n_ref: f64, rates_ref: RateSet, g_sqrt_n_ref: f64) -> DensityTemplate {
    DensityTemplate::new(n_ref, rates_ref, g_sqrt_n_ref)
}
