//! Laser self-consistency: the medium gain must equal the cavity amplitude
//! decay rate in steady state. Provides derived cavity figures, the steady
//! intracavity intensity, lasing windows and thresholds, and the sweeps
//! behind the pump-power and density curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloch::{DriveConfig, RateSet};
use crate::constants::Constants;
use crate::gain::{
    classify_legs, linear_gain_closed, saturated_gain_approx, saturated_gain_full, GainError,
    LegClassification,
};
use crate::roots::{grid, refine, Spacing};
use crate::steady::{check_rates, steady_state, SteadyError};
use crate::vapor::{optical_depth_at_density, DensityTemplate, VaporConditions, VaporError};

/// Points in the amplitude scan of the full model.
const AMPLITUDE_SCAN_POINTS: usize = 400;
/// Points in the Ω and density scans.
const WINDOW_SCAN_POINTS: usize = 400;
/// Gain-clamping tolerance (MHz).
pub const CLAMP_TOL: f64 = 1e-6;
/// Resolution of lasing-window edges (MHz).
pub const WINDOW_EDGE_TOL: f64 = 1e-3;
/// Relative resolution of density thresholds.
pub const DENSITY_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CavityError {
    #[error("pump power must be >= 0, got {0} mW")]
    NegativePower(f64),
    #[error("the large-omega gain model needs omega > 0, got {0}")]
    NonPositiveOmega(f64),
    #[error(
        "no gain/loss crossing bracketed in the amplitude scan up to g*a = {:e} MHz ({} points scanned)",
        .grid.last().map(|p| p.0).unwrap_or(0.0), .grid.len()
    )]
    BracketFailure {
        /// Scanned `(g·a, gain − loss)` pairs.
        grid: Vec<(f64, f64)>,
    },
    #[error("invalid cavity: {0}")]
    InvalidCavity(String),
    #[error("sweep values must be strictly increasing")]
    UnorderedSweep,
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Steady(#[from] SteadyError),
    #[error(transparent)]
    Vapor(#[from] VaporError),
}

/// Ring-cavity geometry and losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySpec {
    /// m
    pub round_trip_length: f64,
    pub transmissivity_m1: f64,
    pub transmissivity_m2: f64,
    /// Intensity FWHM of the empty-cavity resonance (MHz).
    pub linewidth_fwhm: f64,
    /// Overrides the default `linewidth_fwhm / 2` (MHz).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_decay: Option<f64>,
}

/// Free spectral range, finesse and field decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavityDerived {
    /// MHz
    pub fsr: f64,
    pub finesse: f64,
    /// MHz
    pub amplitude_decay: f64,
}

impl CavitySpec {
    /// 37 cm ring with 3 % and 1.4 % output couplers and a 17 MHz linewidth.
    pub fn reference() -> Self {
        Self {
            round_trip_length: 0.37,
            transmissivity_m1: 0.03,
            transmissivity_m2: 0.014,
            linewidth_fwhm: 17.0,
            amplitude_decay: None,
        }
    }

    pub fn validate(&self) -> Result<(), CavityError> {
        let mut bad = Vec::new();
        for (name, t) in [
            ("transmissivity_m1", self.transmissivity_m1),
            ("transmissivity_m2", self.transmissivity_m2),
        ] {
            if !(t > 0.0 && t < 1.0) {
                bad.push(format!("{name} must lie in (0, 1), got {t}"));
            }
        }
        if !(self.linewidth_fwhm > 0.0) {
            bad.push(format!(
                "linewidth_fwhm must be > 0, got {}",
                self.linewidth_fwhm
            ));
        }
        if !(self.round_trip_length > 0.0) {
            bad.push(format!(
                "round_trip_length must be > 0, got {}",
                self.round_trip_length
            ));
        }
        if let Some(k) = self.amplitude_decay {
            if !(k > 0.0) {
                bad.push(format!("amplitude_decay must be > 0, got {k}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CavityError::InvalidCavity(bad.join("; ")))
        }
    }

    pub fn amplitude_decay(&self) -> f64 {
        self.amplitude_decay.unwrap_or(0.5 * self.linewidth_fwhm)
    }
}

pub fn cavity_derived(spec: &CavitySpec, constants: &Constants) -> CavityDerived {
    let fsr = constants.physical.speed_of_light / spec.round_trip_length / 1e6;
    CavityDerived {
        fsr,
        finesse: fsr / spec.linewidth_fwhm,
        amplitude_decay: spec.amplitude_decay(),
    }
}

/// Calibration through the reference pair 148 MHz at 21.8 mW (MHz/√mW).
pub fn reference_rabi_calibration() -> f64 {
    148.0 / 21.8f64.sqrt()
}

/// `Ω = calibration·√P`.
pub fn power_to_rabi(power_mw: f64, calibration: f64) -> Result<f64, CavityError> {
    if !(power_mw >= 0.0) {
        return Err(CavityError::NegativePower(power_mw));
    }
    Ok(calibration * power_mw.sqrt())
}

/// How the saturated gain is evaluated when solving for the intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainModel {
    /// Closed-form large-Ω saturated gain; the intensity is a quadratic root.
    LargeOmega,
    /// Steady state of the full equations at each amplitude.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// Gain falls through the loss with increasing intensity.
    Stable,
    /// Gain rises through the loss.
    Unstable,
    /// Below threshold.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LasingSolution {
    /// `a²`
    pub intensity: f64,
    pub amplitude: f64,
    /// Saturated gain at the solution (MHz); the small-signal gain when below threshold.
    pub gain_at_solution: f64,
    pub branch: Branch,
}

impl LasingSolution {
    fn off(gain: f64) -> Self {
        Self {
            intensity: 0.0,
            amplitude: 0.0,
            gain_at_solution: gain,
            branch: Branch::None,
        }
    }
}

/// Roots of the large-Ω gain-equals-loss condition in `s = g²a²`, solved as
/// `A·s² + B·s + C = 0`.
fn large_omega_intensity(rates: &RateSet, drive: &DriveConfig, loss: f64) -> Option<f64> {
    let om2 = drive.omega * drive.omega;
    let g2n = drive.collective_squared();
    let f = rates.f;
    let d = rates.gamma_b - 2.0 * f * rates.gamma_bc;
    let a = 16.0 * loss * (1.0 - f);
    let b = 4.0 * loss * om2 + 8.0 * g2n * rates.gamma_c;
    let c = loss * f * om2 * om2 - 2.0 * g2n * om2 * d;
    // a, b >= 0, so a positive root needs c < 0 and is unique
    if !(c < 0.0) {
        return None;
    }
    let s = if a == 0.0 {
        -c / b
    } else {
        let q = -0.5 * (b + (b * b - 4.0 * a * c).sqrt());
        c / q
    };
    (s > 0.0).then_some(s)
}

fn full_gain_at(rates: &RateSet, drive: &DriveConfig, x: f64) -> Result<f64, CavityError> {
    Ok(saturated_gain_full(
        rates,
        &drive.with_amplitude(x / drive.g),
    )?)
}

/// A gain-equals-loss crossing of the full model, in `x = g·a` (MHz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub x: f64,
    pub gain: f64,
    pub branch: Branch,
}

/// All gain/loss crossings of the full model along the amplitude axis,
/// in increasing amplitude.
pub fn intensity_crossings(
    rates: &RateSet,
    drive: &DriveConfig,
    loss: f64,
) -> Result<Vec<Crossing>, CavityError> {
    check_rates(rates)?;
    let slow = rates.smallest_positive_rate().unwrap_or(1.0);
    let x_lo = 1e-4 * slow;
    // |u| <= 1/2 bounds |gain| by g²N/(2x), so the top of the scan is below loss
    let x_hi =
        10.0 * drive.collective_squared() / loss + 10.0 * (drive.omega + rates.largest_rate());
    let xs = grid(x_lo, x_hi, AMPLITUDE_SCAN_POINTS, Spacing::Log);
    let excess: Vec<f64> = xs
        .iter()
        .map(|&x| full_gain_at(rates, drive, x).map(|g| g - loss))
        .collect::<Result<_, _>>()?;
    if excess.last().is_some_and(|&h| h > 0.0) {
        return Err(CavityError::BracketFailure {
            grid: xs.into_iter().zip(excess).collect(),
        });
    }

    let mut out = Vec::new();
    for i in 0..xs.len() - 1 {
        let (h0, h1) = (excess[i], excess[i + 1]);
        let branch = if h0 > 0.0 && h1 <= 0.0 {
            Branch::Stable
        } else if h0 <= 0.0 && h1 > 0.0 {
            Branch::Unstable
        } else {
            continue;
        };
        let mut failure = None;
        let root = refine(
            |x| match full_gain_at(rates, drive, x) {
                Ok(g) => g - loss,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            xs[i],
            xs[i + 1],
            |_, _, fx| fx.abs() <= CLAMP_TOL,
            200,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        if let Some(r) = root {
            out.push(Crossing {
                x: r.x,
                gain: r.fx + loss,
                branch,
            });
        }
    }
    Ok(out)
}

/// Steady intracavity intensity for amplitude decay rate `loss` (MHz).
///
/// Returns the largest-intensity root, which is the stable one; below
/// threshold the intensity is exactly zero. `drive.a` is ignored.
pub fn steady_intensity(
    rates: &RateSet,
    drive: &DriveConfig,
    loss: f64,
    model: GainModel,
) -> Result<LasingSolution, CavityError> {
    check_rates(rates)?;
    let small_signal = linear_gain_closed(rates, drive).value;
    match model {
        GainModel::LargeOmega => {
            if !(drive.omega > 0.0) {
                return Err(CavityError::NonPositiveOmega(drive.omega));
            }
            Ok(match large_omega_intensity(rates, drive, loss) {
                Some(s) => {
                    let amplitude = s.sqrt() / drive.g;
                    LasingSolution {
                        intensity: amplitude * amplitude,
                        amplitude,
                        gain_at_solution: saturated_gain_approx(
                            rates,
                            &drive.with_amplitude(amplitude),
                        ),
                        branch: Branch::Stable,
                    }
                }
                None => LasingSolution::off(small_signal),
            })
        }
        GainModel::Full => {
            let crossings = intensity_crossings(rates, drive, loss)?;
            Ok(
                match crossings.iter().rev().find(|c| c.branch == Branch::Stable) {
                    Some(c) => {
                        let amplitude = c.x / drive.g;
                        LasingSolution {
                            intensity: amplitude * amplitude,
                            amplitude,
                            gain_at_solution: c.gain,
                            branch: Branch::Stable,
                        }
                    }
                    None => LasingSolution::off(small_signal),
                },
            )
        }
    }
}

/// Ω intervals in `omega_range` where the small-signal gain exceeds `loss`.
pub fn lasing_window_omega(
    rates: &RateSet,
    drive: &DriveConfig,
    loss: f64,
    omega_range: (f64, f64),
) -> Vec<(f64, f64)> {
    let excess = |om: f64| linear_gain_closed(rates, &drive.with_omega(om)).value - loss;
    let omegas = grid(
        omega_range.0,
        omega_range.1,
        WINDOW_SCAN_POINTS,
        Spacing::Log,
    );
    let values: Vec<f64> = omegas.iter().map(|&om| excess(om)).collect();

    let mut windows = Vec::new();
    let mut open = (values[0] > 0.0).then_some(omegas[0]);
    for i in 0..omegas.len() - 1 {
        let (h0, h1) = (values[i], values[i + 1]);
        if (h0 > 0.0) == (h1 > 0.0) {
            continue;
        }
        let edge = refine(
            excess,
            omegas[i],
            omegas[i + 1],
            |lo, hi, _| hi - lo <= WINDOW_EDGE_TOL,
            200,
        )
        .map_or(omegas[i], |r| r.x);
        match open.take() {
            Some(start) => windows.push((start, edge)),
            None => open = Some(edge),
        }
    }
    if let Some(start) = open {
        windows.push((start, *omegas.last().expect("non-empty grid")));
    }
    windows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "n_density")]
pub enum DensityThreshold {
    /// Smallest lasing density (m⁻³).
    At(f64),
    /// Gain already exceeds loss at the bottom of the range.
    AlwaysLasing,
    NoneInRange,
}

/// Smallest density in `range` where the small-signal gain reaches `loss`.
pub fn threshold_density(
    template: &DensityTemplate,
    omega: f64,
    loss: f64,
    range: (f64, f64),
) -> DensityThreshold {
    let excess = |n: f64| {
        let (rates, _) = template.at(n);
        linear_gain_closed(&rates, &template.drive_at(n, omega)).value - loss
    };
    let ns = grid(range.0, range.1, WINDOW_SCAN_POINTS, Spacing::Log);
    let Some(first) = ns.iter().position(|&n| excess(n) >= 0.0) else {
        return DensityThreshold::NoneInRange;
    };
    if first == 0 {
        return DensityThreshold::AlwaysLasing;
    }
    refine(
        excess,
        ns[first - 1],
        ns[first],
        |lo, hi, _| hi - lo <= DENSITY_REL_TOL * lo,
        200,
    )
    .map_or(DensityThreshold::At(ns[first]), |r| {
        DensityThreshold::At(r.hi)
    })
}

/// One sample of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_param: f64,
    pub omega_mhz: f64,
    /// Small-signal gain (MHz).
    pub linear_gain_mhz: f64,
    /// Steady `a²` (zero below threshold).
    pub intensity: f64,
    /// `ρ_aa − ρ_bb` at the operating point.
    pub inversion: f64,
    pub leg_class: LegClassification,
}

/// Rows ordered by the swept value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn column(&self, pick: impl Fn(&SweepRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(pick).collect()
    }

    pub fn peak_index(&self) -> Option<usize> {
        self.rows
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.intensity.total_cmp(&b.1.intensity))
            .map(|(i, _)| i)
    }
}

fn strictly_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] < w[1])
}

fn operating_point(
    rates: &RateSet,
    drive: &DriveConfig,
    loss: f64,
    model: GainModel,
) -> Result<(f64, f64, f64), CavityError> {
    let linear = linear_gain_closed(rates, drive).value;
    let sol = if drive.omega > 0.0 || model == GainModel::Full {
        steady_intensity(rates, drive, loss, model)?
    } else {
        LasingSolution::off(linear)
    };
    let state = steady_state(rates, &drive.with_amplitude(sol.amplitude))?;
    Ok((linear, sol.intensity, state.inversion()))
}

/// Sweep over pump power (mW) with `Ω = calibration·√P`.
pub fn sweep_pump(
    rates: &RateSet,
    drive: &DriveConfig,
    loss: f64,
    powers_mw: &[f64],
    calibration: f64,
    model: GainModel,
) -> Result<SweepResult, CavityError> {
    check_rates(rates)?;
    if !strictly_increasing(powers_mw) {
        return Err(CavityError::UnorderedSweep);
    }
    let leg = classify_legs(rates);
    let rows = powers_mw
        .par_iter()
        .map(|&p| {
            let omega = power_to_rabi(p, calibration)?;
            let (linear, intensity, inversion) =
                operating_point(rates, &drive.with_omega(omega), loss, model)?;
            Ok(SweepRow {
                sweep_param: p,
                omega_mhz: omega,
                linear_gain_mhz: linear,
                intensity,
                inversion,
                leg_class: leg,
            })
        })
        .collect::<Result<Vec<_>, CavityError>>()?;
    Ok(SweepResult {
        parameter: "pump_power_mw".into(),
        rows,
    })
}

/// Sweep over Ω at fixed density.
pub fn sweep_omega(
    rates: &RateSet,
    drive: &DriveConfig,
    loss: f64,
    omegas: &[f64],
    model: GainModel,
) -> Result<SweepResult, CavityError> {
    check_rates(rates)?;
    if !strictly_increasing(omegas) {
        return Err(CavityError::UnorderedSweep);
    }
    let leg = classify_legs(rates);
    let rows = omegas
        .par_iter()
        .map(|&omega| {
            let (linear, intensity, inversion) =
                operating_point(rates, &drive.with_omega(omega), loss, model)?;
            Ok(SweepRow {
                sweep_param: omega,
                omega_mhz: omega,
                linear_gain_mhz: linear,
                intensity,
                inversion,
                leg_class: leg,
            })
        })
        .collect::<Result<Vec<_>, CavityError>>()?;
    Ok(SweepResult {
        parameter: "omega_mhz".into(),
        rows,
    })
}

/// Sweep over atomic density (m⁻³) with rates scaled by `template`.
pub fn sweep_density(
    template: &DensityTemplate,
    omega: f64,
    loss: f64,
    densities: &[f64],
    model: GainModel,
) -> Result<SweepResult, CavityError> {
    check_rates(&template.rates_ref)?;
    if !strictly_increasing(densities) {
        return Err(CavityError::UnorderedSweep);
    }
    let rows = densities
        .par_iter()
        .map(|&n| {
            let (rates, _) = template.at(n);
            let drive = template.drive_at(n, omega);
            let (linear, intensity, inversion) = operating_point(&rates, &drive, loss, model)?;
            Ok(SweepRow {
                sweep_param: n,
                omega_mhz: omega,
                linear_gain_mhz: linear,
                intensity,
                inversion,
                leg_class: classify_legs(&rates),
            })
        })
        .collect::<Result<Vec<_>, CavityError>>()?;
    Ok(SweepResult {
        parameter: "n_density".into(),
        rows,
    })
}

/// Optical depth for every row of a density sweep.
pub fn optical_depth_column(
    sweep: &SweepResult,
    cond: &VaporConditions,
    constants: &Constants,
) -> Result<Vec<crate::vapor::OpticalDepthPoint>, CavityError> {
    sweep
        .rows
        .iter()
        .map(|r| Ok(optical_depth_at_density(cond, r.sweep_param, constants)?))
        .collect()
}

/// One cell of a small-signal gain map over (Ω, N).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainMapCell {
    pub omega_mhz: f64,
    pub n_density: f64,
    pub g_sqrt_n_mhz: f64,
    pub linear_gain_mhz: f64,
    /// Small-signal gain exceeds the loss.
    pub lasing: bool,
}

/// Small-signal gain over the grid `omegas × densities`, Ω varying fastest.
pub fn gain_map(
    template: &DensityTemplate,
    omegas: &[f64],
    densities: &[f64],
    loss: f64,
) -> Result<Vec<GainMapCell>, CavityError> {
    check_rates(&template.rates_ref)?;
    Ok(densities
        .iter()
        .flat_map(|&n| omegas.iter().map(move |&om| (n, om)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(n, om)| {
            let (rates, g_sqrt_n) = template.at(n);
            let g = linear_gain_closed(&rates, &template.drive_at(n, om)).value;
            GainMapCell {
                omega_mhz: om,
                n_density: n,
                g_sqrt_n_mhz: g_sqrt_n,
                linear_gain_mhz: g,
                lasing: g > loss,
            }
        })
        .collect())
}
