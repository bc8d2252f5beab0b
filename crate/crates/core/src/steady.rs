//! Steady states of the lambda system by two independent routes: a direct
//! solve of the affine form `x' = M·x + c`, and time integration of the
//! equations of motion until the right-hand side vanishes.

use std::ops::ControlFlow;

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

use crate::bloch::{
    bloch_rhs, validate_rates, CoherenceVector, DriveConfig, RateSet, RateViolation,
};
use crate::ode::{self, OdeError, OdeSystem, StepControl};

const VARIABLES: [&str; 5] = ["rho_aa", "rho_bb", "i_rho_ab", "rho_cb", "i_rho_ca"];

/// Pivots below this fraction of the largest matrix entry count as zero.
const PIVOT_EPS: f64 = 1e-13;

/// First propagator step as a fraction of the inverse largest rate.
const FIRST_STEP_SCALE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteadyError {
    #[error("singular steady-state system: pivot for {variable} is {pivot:e} (degenerate rates?)")]
    Singular { variable: &'static str, pivot: f64 },
    #[error("invalid rates: {}", join(.0))]
    InvalidRates(Vec<RateViolation>),
    #[error("t_final must be positive and finite, got {0}")]
    InvalidTime(f64),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

fn join(v: &[RateViolation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn check_rates(rates: &RateSet) -> Result<(), SteadyError> {
    let v = validate_rates(rates);
    if v.is_empty() {
        Ok(())
    } else {
        Err(SteadyError::InvalidRates(v))
    }
}

/// Affine form of the equations of motion, in `[ρ_aa, ρ_bb, u, v, w]` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSystem {
    pub matrix: SMatrix<f64, 5, 5>,
    pub constant: SVector<f64, 5>,
}

impl AffineSystem {
    pub fn eval(&self, x: &CoherenceVector) -> CoherenceVector {
        CoherenceVector::from_vector(&(self.matrix * x.to_vector() + self.constant))
    }
}

pub fn assemble_affine(rates: &RateSet, drive: &DriveConfig) -> AffineSystem {
    let r = rates;
    let x = drive.field_coupling();
    let om = drive.omega;
    let h = 0.5 * om;
    #[rustfmt::skip]
    let matrix = SMatrix::<f64, 5, 5>::from_row_slice(&[
        -r.gamma_a,                 0.0,                      2.0 * x,     0.0,         -om,
        r.f * r.gamma_a - r.gamma_c, -r.gamma_b - r.gamma_c,  -2.0 * x,    0.0,         0.0,
        -x,                          x,                       -r.gamma_ba, h,           0.0,
        0.0,                         0.0,                     -h,          -r.gamma_bc, x,
        om,                          h,                       0.0,         -x,          -r.gamma_ac,
    ]);
    let constant = SVector::from([0.0, r.gamma_c, 0.0, 0.0, -h]);
    AffineSystem { matrix, constant }
}

/// Solves `M·x + c = 0` by LU with partial pivoting and one refinement pass.
pub fn solve_linear_steady(sys: &AffineSystem) -> Result<CoherenceVector, SteadyError> {
    let scale = sys.matrix.amax();
    let lu = sys.matrix.lu();
    let u = lu.u();
    for k in 0..5 {
        let pivot = u[(k, k)];
        if !(pivot.abs() > PIVOT_EPS * scale) {
            return Err(SteadyError::Singular {
                variable: VARIABLES[k],
                pivot,
            });
        }
    }
    let rhs = -sys.constant;
    let mut x = lu.solve(&rhs).ok_or(SteadyError::Singular {
        variable: VARIABLES[4],
        pivot: 0.0,
    })?;
    let r = rhs - sys.matrix * x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    Ok(CoherenceVector::from_vector(&x))
}

/// Validated direct steady state for `rates` and `drive`.
pub fn steady_state(rates: &RateSet, drive: &DriveConfig) -> Result<CoherenceVector, SteadyError> {
    check_rates(rates)?;
    solve_linear_steady(&assemble_affine(rates, drive))
}

/// Euclidean norm of the time derivative at `state` (MHz).
pub fn residual_norm(state: &CoherenceVector, rates: &RateSet, drive: &DriveConfig) -> f64 {
    bloch_rhs(state, rates, drive).norm()
}

/// Collisional equilibrium with no fields applied: everything in the ground
/// states, split by the exchange rates. With no exchange at all the split is
/// taken as even.
pub fn unpumped_equilibrium(rates: &RateSet) -> CoherenceVector {
    let total = rates.gamma_b + rates.gamma_c;
    let rho_bb = if total > 0.0 {
        rates.gamma_c / total
    } else {
        0.5
    };
    CoherenceVector::new(0.0, rho_bb, 0.0, 0.0, 0.0)
}

struct BlochSystem<'a> {
    rates: &'a RateSet,
    drive: &'a DriveConfig,
}

impl OdeSystem<5> for BlochSystem<'_> {
    fn rhs(&self, y: &SVector<f64, 5>) -> SVector<f64, 5> {
        bloch_rhs(&CoherenceVector::from_vector(y), self.rates, self.drive).to_vector()
    }
}

/// Time-ordered samples of a transient, one per accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<(f64, CoherenceVector)>,
    /// Residual norm at the last point (MHz).
    pub final_residual: f64,
}

impl Trajectory {
    pub fn last(&self) -> &(f64, CoherenceVector) {
        self.points
            .last()
            .expect("trajectory always holds the initial point")
    }

    /// First time at which the residual drops to `threshold`, if it does.
    pub fn time_to_residual(
        &self,
        rates: &RateSet,
        drive: &DriveConfig,
        threshold: f64,
    ) -> Option<f64> {
        self.points
            .iter()
            .find(|(_, s)| residual_norm(s, rates, drive) <= threshold)
            .map(|&(t, _)| t)
    }
}

pub fn integrate_transient(
    rates: &RateSet,
    drive: &DriveConfig,
    initial: CoherenceVector,
    t_final: f64,
    control: &StepControl,
) -> Result<Trajectory, SteadyError> {
    check_rates(rates)?;
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(SteadyError::InvalidTime(t_final));
    }
    let sys = BlochSystem { rates, drive };
    let mut points = Vec::new();
    ode::integrate(&sys, initial.to_vector(), t_final, control, |t, y| {
        points.push((t, CoherenceVector::from_vector(y)));
        ControlFlow::Continue(())
    })?;
    let final_residual = residual_norm(&points.last().expect("initial point").1, rates, drive);
    Ok(Trajectory {
        points,
        final_residual,
    })
}

/// Outcome of integrating towards the fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationReport {
    pub final_state: CoherenceVector,
    /// Model time elapsed, in 1/MHz (µs-equivalent).
    pub elapsed_model_time: f64,
    pub converged: bool,
    /// Residual norm at `final_state` (MHz).
    pub residual_norm: f64,
    pub steps: usize,
}

/// Integrates from the unpumped equilibrium until the residual norm falls to
/// `tolerance` or `t_max` is reached.
pub fn integrate_to_steady(
    rates: &RateSet,
    drive: &DriveConfig,
    tolerance: f64,
    t_max: f64,
) -> Result<IntegrationReport, SteadyError> {
    integrate_to_steady_from(rates, drive, unpumped_equilibrium(rates), tolerance, t_max)
}

/// With the fields held fixed the equations are affine, so each step applies
/// the exact propagator `exp(A·h)` of the system augmented with a constant
/// unit component. The step doubles every time by squaring the propagator,
/// which reaches weakly damped fast oscillations without resolving them.
pub fn integrate_to_steady_from(
    rates: &RateSet,
    drive: &DriveConfig,
    initial: CoherenceVector,
    tolerance: f64,
    t_max: f64,
) -> Result<IntegrationReport, SteadyError> {
    check_rates(rates)?;
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(SteadyError::InvalidTime(t_max));
    }
    let sys = assemble_affine(rates, drive);
    let mut generator = SMatrix::<f64, 6, 6>::zeros();
    generator
        .fixed_view_mut::<5, 5>(0, 0)
        .copy_from(&sys.matrix);
    generator
        .fixed_view_mut::<5, 1>(0, 5)
        .copy_from(&sys.constant);
    let propagator = |h: f64| (generator * h).exp();

    let mut y = initial.to_vector().push(1.0);
    let mut h = FIRST_STEP_SCALE / sys.matrix.amax().max(1.0);
    let mut phi = propagator(h);
    let mut t = 0.0;
    let mut steps = 0;
    let state =
        |y: &SVector<f64, 6>| CoherenceVector::from_vector(&y.fixed_rows::<5>(0).into_owned());
    while residual_norm(&state(&y), rates, drive) > tolerance && t < t_max {
        if t + h >= t_max {
            y = propagator(t_max - t) * y;
            t = t_max;
        } else {
            y = phi * y;
            t += h;
            phi = phi * phi;
            h *= 2.0;
        }
        steps += 1;
    }
    let final_state = state(&y);
    let residual = residual_norm(&final_state, rates, drive);
    Ok(IntegrationReport {
        final_state,
        elapsed_model_time: t,
        converged: residual <= tolerance,
        residual_norm: residual,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset() -> RateSet {
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

    fn drive(omega: f64, a: f64) -> DriveConfig {
        DriveConfig {
            omega,
            a,
            g: 1.0,
            n_density: 9e6,
        }
    }

    #[test]
    fn constant_vector_without_fields() {
        let sys = assemble_affine(&preset(), &drive(0.0, 0.0));
        assert_eq!(sys.constant, SVector::from([0.0, 0.013, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn constant_vector_pump_term() {
        let sys = assemble_affine(&preset(), &drive(160.0, 0.0));
        assert_eq!(sys.constant[4], -80.0);
    }

    #[test]
    fn unpumped_steady_state_is_even_split() {
        let s = steady_state(&preset(), &drive(0.0, 0.0)).unwrap();
        let expect = [0.0, 0.5, 0.0, 0.0, 0.0];
        for (got, want) in s.to_vector().iter().zip(expect) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn unpumped_steady_state_uneven_exchange() {
        let r = RateSet {
            gamma_b: 0.01,
            gamma_c: 0.03,
            gamma_bc: 0.03,
            ..preset()
        };
        let s = steady_state(&r, &drive(0.0, 0.0)).unwrap();
        assert!((s.rho_bb - 0.75).abs() < 1e-13);
    }

    #[test]
    fn degenerate_rates_are_singular() {
        let r = RateSet {
            gamma_b: 0.0,
            gamma_c: 0.0,
            ..preset()
        };
        let err = solve_linear_steady(&assemble_affine(&r, &drive(0.0, 0.0))).unwrap_err();
        assert!(
            matches!(
                err,
                SteadyError::Singular {
                    variable: "rho_bb",
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn linear_solve_residual_is_tiny() {
        let d = drive(160.0, 0.01);
        let sys = assemble_affine(&preset(), &d);
        let s = solve_linear_steady(&sys).unwrap();
        assert!(residual_norm(&s, &preset(), &d) <= 1e-10);
    }

    #[test]
    fn preset_dual_route_agreement() {
        let d = drive(160.0, 0.01);
        let direct = steady_state(&preset(), &d).unwrap();
        let rep = integrate_to_steady(&preset(), &d, 1e-10, 1e6).unwrap();
        assert!(rep.converged);
        assert!(rep.residual_norm <= 1e-10);
        for (a, b) in direct
            .to_vector()
            .iter()
            .zip(rep.final_state.to_vector().iter())
        {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn unpumped_converges_immediately() {
        let rep = integrate_to_steady(&preset(), &drive(0.0, 0.0), 1e-12, 100.0).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.elapsed_model_time, 0.0);
        assert_eq!(
            rep.final_state,
            CoherenceVector::new(0.0, 0.5, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn settling_takes_tens_of_microseconds() {
        let d = drive(160.0, 0.0);
        let r = preset();
        let traj = integrate_transient(
            &r,
            &d,
            unpumped_equilibrium(&r),
            300.0,
            &StepControl::default(),
        )
        .unwrap();
        let coarse = traj.time_to_residual(&r, &d, 1e-3).unwrap();
        let fine = traj.time_to_residual(&r, &d, 1e-6).unwrap();
        assert!((5.0..50.0).contains(&coarse), "{coarse}");
        assert!((10.0..50.0).contains(&fine), "{fine}");
    }

    #[test]
    fn stiff_rates_still_converge() {
        let r = RateSet {
            gamma_b: 1e-5,
            gamma_c: 1e-5,
            gamma_bc: 1e-5,
            ..preset()
        };
        let d = drive(160.0, 0.01);
        let rep = integrate_to_steady(&r, &d, 1e-12, 1e9).unwrap();
        assert!(rep.converged);
        let direct = steady_state(&r, &d).unwrap();
        assert!((rep.final_state.to_vector() - direct.to_vector()).amax() < 1e-8);
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let rep = integrate_to_steady(&preset(), &drive(160.0, 0.0), 1e-12, 1.0).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.elapsed_model_time, 1.0);
    }

    #[test]
    fn fixed_point_trajectory_stays_put() {
        let d = drive(160.0, 0.0);
        let ss = steady_state(&preset(), &d).unwrap();
        let traj = integrate_transient(&preset(), &d, ss, 50.0, &StepControl::default()).unwrap();
        for (_, s) in &traj.points {
            assert!((s.to_vector() - ss.to_vector()).amax() < 1e-9);
        }
    }

    #[test]
    fn upper_level_decays_exponentially() {
        let r = preset();
        let d = drive(0.0, 0.0);
        let init = CoherenceVector::new(1.0, 0.0, 0.0, 0.0, 0.0);
        let traj = integrate_transient(&r, &d, init, 2.0, &StepControl::default()).unwrap();
        assert!(traj.points.len() > 3);
        for &(t, s) in &traj.points {
            let exact = (-r.gamma_a * t).exp();
            assert!((s.rho_aa / exact - 1.0).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn transient_rejects_bad_time() {
        let err = integrate_transient(
            &preset(),
            &drive(1.0, 0.0),
            CoherenceVector::default(),
            0.0,
            &StepControl::default(),
        )
        .unwrap_err();
        assert_eq!(err, SteadyError::InvalidTime(0.0));
    }
}
