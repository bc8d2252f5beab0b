//! Parameter and state types of the resonant three-level lambda model, and the
//! right-hand side of its equations of motion.
//!
//! Levels: `|a⟩` is the excited state, `|b⟩` the lower lasing state (coupled to
//! `|a⟩` by the cavity field) and `|c⟩` the state driven by the coupling beam.
//! On resonance the coherences `iρ_ab`, `ρ_cb` and `iρ_ca` are real, so the
//! state is five real numbers. All rates are in MHz.

use std::fmt;

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

/// Relative slack on the coherence floor, absorbing rounding in rates that
/// were scaled together.
const FLOOR_SLACK: f64 = 1e-12;

/// Decay, exchange and branching parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSet {
    /// Total spontaneous decay rate of `|a⟩`.
    pub gamma_a: f64,
    /// Collisional population flow `|b⟩ → |c⟩`.
    pub gamma_b: f64,
    /// Collisional population flow `|c⟩ → |b⟩`.
    pub gamma_c: f64,
    /// Decay of the ground-state coherence `ρ_cb`.
    pub gamma_bc: f64,
    /// Decay of the lasing coherence `ρ_ab`.
    pub gamma_ba: f64,
    /// Decay of the pump coherence `ρ_ca`.
    pub gamma_ac: f64,
    /// Fraction of `|a⟩` decay that lands in `|b⟩`.
    pub f: f64,
}

impl RateSet {
    /// Coherence-decay floor `(γ_b + γ_c)/2` implied by the collisional rates.
    pub fn coherence_floor(&self) -> f64 {
        0.5 * (self.gamma_b + self.gamma_c)
    }

    fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("gamma_a", self.gamma_a),
            ("gamma_b", self.gamma_b),
            ("gamma_c", self.gamma_c),
            ("gamma_bc", self.gamma_bc),
            ("gamma_ba", self.gamma_ba),
            ("gamma_ac", self.gamma_ac),
            ("f", self.f),
        ]
    }

    /// Smallest strictly positive rate, used to pick probe amplitudes.
    pub fn smallest_positive_rate(&self) -> Option<f64> {
        self.named()[..6]
            .iter()
            .map(|&(_, v)| v)
            .filter(|&v| v > 0.0)
            .min_by(f64::total_cmp)
    }

    pub fn largest_rate(&self) -> f64 {
        self.named()[..6]
            .iter()
            .map(|&(_, v)| v)
            .fold(0.0, f64::max)
    }
}

/// A violated [`RateSet`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum RateViolation {
    NonFinite { name: &'static str, value: f64 },
    NegativeRate { name: &'static str, value: f64 },
    UpperDecayNotPositive { gamma_a: f64 },
    BranchingFraction { f: f64 },
    CoherenceFloor { gamma_bc: f64, floor: f64 },
}

impl fmt::Display for RateViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFinite { name, value } => write!(f, "{name} is not finite ({value})"),
            Self::NegativeRate { name, value } => {
                write!(f, "{name} must be non-negative, got {value}")
            }
            Self::UpperDecayNotPositive { gamma_a } => {
                write!(f, "gamma_a must be positive, got {gamma_a}")
            }
            Self::BranchingFraction { f: v } => {
                write!(f, "branching fraction f must lie in [0, 1], got {v}")
            }
            Self::CoherenceFloor { gamma_bc, floor } => write!(
                f,
                "coherence floor violated: gamma_bc = {gamma_bc} < (gamma_b + gamma_c)/2 = {floor}"
            ),
        }
    }
}

/// Every violated invariant of `rates`; empty means the set is usable.
pub fn validate_rates(rates: &RateSet) -> Vec<RateViolation> {
    let mut out = Vec::new();
    for (name, value) in rates.named() {
        if !value.is_finite() {
            out.push(RateViolation::NonFinite { name, value });
        } else if name != "f" && value < 0.0 {
            out.push(RateViolation::NegativeRate { name, value });
        }
    }
    // negative values were already reported above
    if rates.gamma_a == 0.0 {
        out.push(RateViolation::UpperDecayNotPositive {
            gamma_a: rates.gamma_a,
        });
    }
    if rates.f.is_finite() && !(0.0..=1.0).contains(&rates.f) {
        out.push(RateViolation::BranchingFraction { f: rates.f });
    }
    let floor = rates.coherence_floor();
    if rates.gamma_bc.is_finite()
        && floor.is_finite()
        && rates.gamma_bc < floor * (1.0 - FLOOR_SLACK)
    {
        out.push(RateViolation::CoherenceFloor {
            gamma_bc: rates.gamma_bc,
            floor,
        });
    }
    out
}

/// Coupling beam, cavity field and coupling strength.
///
/// `g` multiplies the field amplitude in the equations of motion; the gain
/// formulas only ever see the collective coupling `g·√N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveConfig {
    /// Coupling Rabi frequency Ω (MHz).
    pub omega: f64,
    /// Cavity field amplitude (dimensionless).
    pub a: f64,
    /// Single-atom coupling per unit amplitude (MHz).
    pub g: f64,
    /// Atomic density (m⁻³).
    pub n_density: f64,
}

impl DriveConfig {
    /// Builds a drive from the collective coupling `g√N` and the density.
    pub fn from_collective(omega: f64, a: f64, g_sqrt_n: f64, n_density: f64) -> Self {
        Self {
            omega,
            a,
            g: g_sqrt_n / n_density.sqrt(),
            n_density,
        }
    }

    /// `g√N` in MHz.
    pub fn collective_coupling(&self) -> f64 {
        self.g * self.n_density.sqrt()
    }

    /// `g²N` in MHz².
    pub fn collective_squared(&self) -> f64 {
        self.g * self.g * self.n_density
    }

    /// `g·a`, the cavity Rabi coupling entering the equations of motion.
    pub fn field_coupling(&self) -> f64 {
        self.g * self.a
    }

    pub fn with_amplitude(self, a: f64) -> Self {
        Self { a, ..self }
    }

    pub fn with_omega(self, omega: f64) -> Self {
        Self { omega, ..self }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            out.push(format!("omega must be finite and >= 0, got {}", self.omega));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            out.push(format!("a must be finite and >= 0, got {}", self.a));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            out.push(format!("g must be finite and > 0, got {}", self.g));
        }
        if !(self.n_density > 0.0 && self.n_density.is_finite()) {
            out.push(format!(
                "n_density must be finite and > 0, got {}",
                self.n_density
            ));
        }
        out
    }
}

/// The five real dynamical variables: populations of `|a⟩`, `|b⟩` and the
/// resonant coherences `u = iρ_ab`, `v = ρ_cb`, `w = iρ_ca`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CoherenceVector {
    pub rho_aa: f64,
    pub rho_bb: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl CoherenceVector {
    pub const DIM: usize = 5;

    pub fn new(rho_aa: f64, rho_bb: f64, u: f64, v: f64, w: f64) -> Self {
        Self {
            rho_aa,
            rho_bb,
            u,
            v,
            w,
        }
    }

    /// Population of `|c⟩` by closure.
    pub fn rho_cc(&self) -> f64 {
        rho_cc(self)
    }

    /// Inversion on the lasing transition, `ρ_aa − ρ_bb`.
    pub fn inversion(&self) -> f64 {
        self.rho_aa - self.rho_bb
    }

    /// Ordering is `[ρ_aa, ρ_bb, u, v, w]`.
    pub fn to_vector(&self) -> SVector<f64, 5> {
        SVector::from([self.rho_aa, self.rho_bb, self.u, self.v, self.w])
    }

    pub fn from_vector(x: &SVector<f64, 5>) -> Self {
        Self::new(x[0], x[1], x[2], x[3], x[4])
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    /// Whether populations sit in the physical window, with slack `tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        let cc = self.rho_cc();
        [self.rho_aa, self.rho_bb, cc]
            .iter()
            .all(|&p| p >= -tol && p <= 1.0 + tol)
    }
}

/// `ρ_cc = 1 − ρ_aa − ρ_bb`.
pub fn rho_cc(state: &CoherenceVector) -> f64 {
    1.0 - state.rho_aa - state.rho_bb
}

/// Time derivative of the state under the resonant lambda-system dynamics.
pub fn bloch_rhs(state: &CoherenceVector, rates: &RateSet, drive: &DriveConfig) -> CoherenceVector {
    let CoherenceVector {
        rho_aa,
        rho_bb,
        u,
        v,
        w,
    } = *state;
    let ga = drive.field_coupling();
    let half_omega = 0.5 * drive.omega;
    let r = rates;

    CoherenceVector {
        rho_aa: -drive.omega * w + 2.0 * ga * u - r.gamma_a * rho_aa,
        rho_bb: -2.0 * ga * u + r.f * r.gamma_a * rho_aa - r.gamma_b * rho_bb
            + r.gamma_c * (1.0 - rho_aa - rho_bb),
        u: -ga * (rho_aa - rho_bb) + half_omega * v - r.gamma_ba * u,
        v: ga * w - half_omega * u - r.gamma_bc * v,
        w: -half_omega * (1.0 - rho_bb - 2.0 * rho_aa) - ga * v - r.gamma_ac * w,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valid() -> RateSet {
        RateSet {
            gamma_a: 5.75,
            gamma_b: 0.013,
            gamma_c: 0.013,
            gamma_bc: 0.013,
            gamma_ba: 2.875,
            gamma_ac: 2.875,
            f: 0.3,
        }
    }

    #[test]
    fn floor_equality_is_valid() {
        assert!(validate_rates(&valid()).is_empty());
    }

    #[test]
    fn floor_violation_reported() {
        let r = RateSet {
            gamma_b: 0.02,
            gamma_c: 0.02,
            gamma_bc: 0.01,
            ..valid()
        };
        let v = validate_rates(&r);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], RateViolation::CoherenceFloor { .. }));
        assert!(v[0].to_string().contains("coherence floor"));
    }

    #[test]
    fn branching_fraction_out_of_range() {
        let v = validate_rates(&RateSet { f: 1.2, ..valid() });
        assert_eq!(v, vec![RateViolation::BranchingFraction { f: 1.2 }]);
    }

    #[test]
    fn reports_every_violation() {
        let r = RateSet {
            gamma_a: 0.0,
            gamma_ba: -1.0,
            f: -0.1,
            gamma_bc: 0.0,
            ..valid()
        };
        let v = validate_rates(&r);
        assert!(v.contains(&RateViolation::UpperDecayNotPositive { gamma_a: 0.0 }));
        assert!(v.contains(&RateViolation::NegativeRate {
            name: "gamma_ba",
            value: -1.0
        }));
        assert!(v.contains(&RateViolation::BranchingFraction { f: -0.1 }));
        assert!(v
            .iter()
            .any(|x| matches!(x, RateViolation::CoherenceFloor { .. })));
    }

    #[test]
    fn nan_is_flagged() {
        let v = validate_rates(&RateSet {
            gamma_c: f64::NAN,
            ..valid()
        });
        assert!(matches!(
            v[0],
            RateViolation::NonFinite {
                name: "gamma_c",
                ..
            }
        ));
    }

    #[test]
    fn rho_cc_closure() {
        assert_eq!(rho_cc(&CoherenceVector::default()), 1.0);
        assert_eq!(rho_cc(&CoherenceVector::new(0.2, 0.3, 0.0, 0.0, 0.0)), 0.5);
        assert_eq!(rho_cc(&CoherenceVector::new(0.5, 0.5, 0.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn origin_without_fields_only_repopulates_b() {
        let drive = DriveConfig {
            omega: 0.0,
            a: 0.0,
            g: 1.0,
            n_density: 1.0,
        };
        let d = bloch_rhs(&CoherenceVector::default(), &valid(), &drive);
        assert_eq!(d, CoherenceVector::new(0.0, 0.013, 0.0, 0.0, 0.0));
    }

    #[test]
    fn pure_decay_without_fields_or_collisions() {
        let r = RateSet {
            gamma_b: 0.0,
            gamma_c: 0.0,
            ..valid()
        };
        let drive = DriveConfig {
            omega: 0.0,
            a: 0.0,
            g: 1.0,
            n_density: 1.0,
        };
        let s = CoherenceVector::new(0.4, 0.1, 0.3, -0.2, 0.05);
        let d = bloch_rhs(&s, &r, &drive);
        assert_eq!(d.u, -r.gamma_ba * s.u);
        assert_eq!(d.v, -r.gamma_bc * s.v);
        assert_eq!(d.w, -r.gamma_ac * s.w);
        assert_eq!(d.rho_aa, -r.gamma_a * s.rho_aa);
        assert_eq!(d.rho_bb, r.f * r.gamma_a * s.rho_aa);
    }

    #[test]
    fn collective_coupling_round_trip() {
        let d = DriveConfig::from_collective(160.0, 0.0, 3000.0, 2.4e18);
        assert!((d.collective_coupling() - 3000.0).abs() < 1e-9);
        assert!((d.collective_squared() / 9e6 - 1.0).abs() < 1e-12);
    }
}
