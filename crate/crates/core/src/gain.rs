//! Closed-form and numerically extracted gain and inversion, plus the
//! classification of which leg of the lambda system can show gain.
//!
//! Gain is `−g·N·(iρ_ab)_ss / a`: positive values amplify the cavity field.
//! The linear gain is the `a → 0` limit of that ratio.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloch::{DriveConfig, RateSet};
use crate::steady::{steady_state, SteadyError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GainError {
    #[error(transparent)]
    Steady(#[from] SteadyError),
    #[error("cavity amplitude must be positive, got {0}")]
    NonPositiveAmplitude(f64),
    #[error(
        "numeric gain did not become probe-independent before the probe underflowed \
         (omega = {omega}, last estimates {g_full} / {g_half})"
    )]
    ProbeUnderflow {
        omega: f64,
        g_full: f64,
        g_half: f64,
    },
}

/// Linear gain with its intermediate factors kept apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainBreakdown {
    /// Gain (MHz).
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// Coefficient multiplying Ω² in the numerator.
    pub omega2_coefficient: f64,
}

/// Closed-form steady-state linear gain. `drive.a` is ignored.
pub fn linear_gain_closed(rates: &RateSet, drive: &DriveConfig) -> GainBreakdown {
    let RateSet {
        gamma_a: ga,
        gamma_b: gb,
        gamma_c: gc,
        gamma_bc: gbc,
        gamma_ba: gba,
        gamma_ac: gac,
        f,
    } = *rates;
    let om2 = drive.omega * drive.omega;
    let omega2_coefficient = ga * (gb - 2.0 * f * gbc) + 2.0 * gbc * (gb - gc);
    let numerator = om2 * omega2_coefficient - 4.0 * ga * gac * gbc * gc;
    let denominator =
        (om2 + 4.0 * gba * gbc) * (om2 * (f * ga + 2.0 * gb + gc) + 2.0 * ga * gac * (gb + gc));
    GainBreakdown {
        value: 2.0 * drive.collective_squared() * numerator / denominator,
        numerator,
        denominator,
        omega2_coefficient,
    }
}

/// `−g·N·u_ss(a)/a` from the full steady state at amplitude `a > 0`.
pub fn saturated_gain_full(rates: &RateSet, drive: &DriveConfig) -> Result<f64, GainError> {
    if !(drive.a > 0.0) {
        return Err(GainError::NonPositiveAmplitude(drive.a));
    }
    let ss = steady_state(rates, drive)?;
    Ok(-drive.g * drive.n_density * ss.u / drive.a)
}

/// Default probe amplitude: `g·ε` at a thousandth of the slowest rate.
pub fn default_probe_amplitude(rates: &RateSet, drive: &DriveConfig) -> f64 {
    let slow = rates.smallest_positive_rate().unwrap_or(1.0);
    1e-3 * slow / drive.g
}

/// Linear gain extracted from the steady state at small probe amplitudes.
///
/// Evaluates at `ε` and `ε/2`, halving `ε` until the two agree to 1e-4
/// relative. The steady coherence is odd in `a`, so the two estimates differ
/// at `O(ε²)`; the returned value is their Richardson combination.
pub fn linear_gain_numeric(
    rates: &RateSet,
    drive: &DriveConfig,
    probe_amplitude: f64,
) -> Result<f64, GainError> {
    let mut eps = probe_amplitude;
    let mut last = (f64::NAN, f64::NAN);
    while drive.g * eps > f64::MIN_POSITIVE * 1e10 {
        let g_full = saturated_gain_full(rates, &drive.with_amplitude(eps))?;
        let g_half = saturated_gain_full(rates, &drive.with_amplitude(0.5 * eps))?;
        if (g_full - g_half).abs() <= 1e-4 * g_full.abs().max(g_half.abs()) {
            return Ok((4.0 * g_half - g_full) / 3.0);
        }
        last = (g_full, g_half);
        eps *= 0.5;
    }
    Err(GainError::ProbeUnderflow {
        omega: drive.omega,
        g_full: last.0,
        g_half: last.1,
    })
}

/// Large-Ω estimate `2·g²N·γ_b/Ω²`.
pub fn rough_gain(rates: &RateSet, drive: &DriveConfig) -> f64 {
    2.0 * drive.collective_squared() * rates.gamma_b / (drive.omega * drive.omega)
}

/// Closed-form steady inversion `ρ_aa − ρ_bb` to lowest order in the cavity field.
pub fn inversion_closed(rates: &RateSet, omega: f64) -> f64 {
    let RateSet {
        gamma_a: ga,
        gamma_b: gb,
        gamma_c: gc,
        gamma_ac: gac,
        f,
        ..
    } = *rates;
    let om2 = omega * omega;
    let num = 2.0 * ga * gc * gac + om2 * (f * ga + gc - gb);
    let den = 2.0 * ga * gac * (gb + gc) + om2 * (f * ga + 2.0 * gb + gc);
    -num / den
}

/// Large-Ω approximation of the saturated gain at amplitude `drive.a`.
pub fn saturated_gain_approx(rates: &RateSet, drive: &DriveConfig) -> f64 {
    let om2 = drive.omega * drive.omega;
    let x = drive.field_coupling().powi(2);
    let f = rates.f;
    let num = om2 * (rates.gamma_b - 2.0 * f * rates.gamma_bc) - 4.0 * x * rates.gamma_c;
    let den = f * om2 * om2 + 4.0 * x * om2 + 16.0 * x * x * (1.0 - f);
    2.0 * drive.collective_squared() * num / den
}

/// Which leg of the lambda system admits gain at large Ω.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LegClassification {
    /// `γ_b > 2f·γ_bc`: gain on `|a⟩ → |b⟩` with the pump on `|c⟩ → |a⟩`.
    GainOnThisLeg,
    /// `γ_c > 2(1−f)·γ_bc`: gain only with the roles of `|b⟩`, `|c⟩` swapped.
    GainOnSwappedLeg,
    NoGainEitherLeg,
}

impl LegClassification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GainOnThisLeg => "gain-on-this-leg",
            Self::GainOnSwappedLeg => "gain-on-swapped-leg",
            Self::NoGainEitherLeg => "no-gain-either-leg",
        }
    }
}

impl fmt::Display for LegClassification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Leg gain conditions. Expects rates that satisfy the coherence floor.
///
/// # Panics
///
/// If both conditions hold, which the coherence floor rules out.
pub fn classify_legs(rates: &RateSet) -> LegClassification {
    let this = rates.gamma_b > 2.0 * rates.f * rates.gamma_bc;
    let swapped = rates.gamma_c > 2.0 * (1.0 - rates.f) * rates.gamma_bc;
    assert!(
        !(this && swapped),
        "both legs satisfy the gain condition; coherence floor violated: {rates:?}"
    );
    if this {
        LegClassification::GainOnThisLeg
    } else if swapped {
        LegClassification::GainOnSwappedLeg
    } else {
        LegClassification::NoGainEitherLeg
    }
}
