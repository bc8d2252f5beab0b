//! Three-level lambda model of lasing without inversion.
//!
//! Optical Bloch equations for a Λ system with a strong drive on the
//! `a ↔ c` leg and a cavity field on `a ↔ b`, the small-signal and saturated
//! gain they imply, the cavity self-consistency condition, and the vapor-cell
//! physics used to tie the model to a warm rubidium experiment.

// negated comparisons are how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod cavity;
pub mod config;
pub mod constants;
pub mod gain;
pub mod ode;
pub mod output;
pub mod roots;
pub mod scenario;
pub mod steady;
pub mod vapor;

pub use bloch::{
    bloch_rhs, rho_cc, validate_rates, CoherenceVector, DriveConfig, RateSet, RateViolation,
};
pub use cavity::{
    cavity_derived, lasing_window_omega, power_to_rabi, steady_intensity, sweep_density,
    sweep_pump, threshold_density, Branch, CavityDerived, CavityError, CavitySpec,
    DensityThreshold, GainModel, LasingSolution, SweepResult, SweepRow,
};
pub use constants::Constants;
pub use gain::{
    classify_legs, inversion_closed, linear_gain_closed, linear_gain_numeric, rough_gain,
    saturated_gain_approx, saturated_gain_full, GainBreakdown, GainError, LegClassification,
};
pub use steady::{
    assemble_affine, integrate_to_steady, integrate_transient, solve_linear_steady, steady_state,
    AffineSystem, IntegrationReport, SteadyError, Trajectory,
};
pub use vapor::{
    collision_rate, doppler_fwhm, optical_depth, vapor_density, CollisionModel, DensityTemplate,
    VaporConditions, VaporError, VelocityConvention,
};
