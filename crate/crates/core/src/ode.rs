//! Adaptive integrators for small autonomous systems.
//!
//! Two steppers share one driver:
//!
//! * [`Method::DormandPrince`]: explicit Runge-Kutta 5(4) with FSAL and the
//!   usual embedded error estimate. Cheap per step but stability-limited.
//! * [`Method::Rosenbrock`]: the linearly implicit, L-stable 2(3) pair of
//!   Shampine and Reichelt. One LU per step; step size is limited only by
//!   accuracy, which is what the slow collisional manifold needs.
//!
//! A fixed point `f(y) = 0` is a fixed point of both steppers for any step
//! size, so a steady state reached by either is a zero of the supplied
//! right-hand side regardless of how the Jacobian is obtained.

use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DormandPrince,
    Rosenbrock,
}

/// Tolerances and limits for the step-size controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; estimated from the problem when `None`.
    pub h_init: Option<f64>,
    /// Steps shorter than this abort the integration.
    pub h_min: f64,
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            method: Method::DormandPrince,
            rtol: 1e-9,
            atol: 1e-12,
            h_init: None,
            h_min: 1e-14,
            h_max: None,
            max_steps: 2_000_000,
        }
    }
}

impl StepControl {
    pub fn rosenbrock() -> Self {
        Self {
            method: Method::Rosenbrock,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error(
        "step size underflow at t = {t} (h = {h:e}); the problem is too stiff for the controller"
    )]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("step budget of {steps} exhausted at t = {t}")]
    MaxStepsExceeded { t: f64, steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("singular iteration matrix at t = {t}")]
    SingularIteration { t: f64 },
}

/// Autonomous system `y' = f(y)`.
pub trait OdeSystem<const D: usize> {
    fn rhs(&self, y: &SVector<f64, D>) -> SVector<f64, D>;

    /// Central-difference Jacobian. Exact up to rounding for affine systems.
    fn jacobian(&self, y: &SVector<f64, D>) -> SMatrix<f64, D, D> {
        let mut jac = SMatrix::<f64, D, D>::zeros();
        for j in 0..D {
            let delta = 1e-4 * y[j].abs().max(1.0);
            let mut yp = *y;
            let mut ym = *y;
            yp[j] += delta;
            ym[j] -= delta;
            let col = (self.rhs(&yp) - self.rhs(&ym)) / (2.0 * delta);
            jac.set_column(j, &col);
        }
        jac
    }
}

/// End state of an integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Finish<const D: usize> {
    pub t: f64,
    pub y: SVector<f64, D>,
    pub accepted: usize,
    pub rejected: usize,
    /// The observer asked to stop before `t_end`.
    pub stopped_early: bool,
}

fn error_norm<const D: usize>(
    err: &SVector<f64, D>,
    y0: &SVector<f64, D>,
    y1: &SVector<f64, D>,
    rtol: f64,
    atol: f64,
) -> f64 {
    let sum: f64 = (0..D)
        .map(|i| {
            let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
            (err[i] / sc).powi(2)
        })
        .sum();
    (sum / D as f64).sqrt()
}

fn scaled_norm<const D: usize>(x: &SVector<f64, D>, y: &SVector<f64, D>, c: &StepControl) -> f64 {
    let sum: f64 = (0..D)
        .map(|i| (x[i] / (c.atol + c.rtol * y[i].abs())).powi(2))
        .sum();
    (sum / D as f64).sqrt()
}

/// Starting step heuristic from Hairer, Nørsett and Wanner.
fn initial_step<S: OdeSystem<D>, const D: usize>(
    sys: &S,
    y0: &SVector<f64, D>,
    f0: &SVector<f64, D>,
    order: i32,
    c: &StepControl,
) -> f64 {
    let d0 = scaled_norm(y0, y0, c);
    let d1 = scaled_norm(f0, y0, c);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1 = y0 + f0 * h0;
    let f1 = sys.rhs(&y1);
    let d2 = scaled_norm(&(f1 - f0), y0, c) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(1.0 / f64::from(order + 1))
    };
    (100.0 * h0).min(h1)
}

struct Trial<const D: usize> {
    y: SVector<f64, D>,
    err: f64,
    /// Derivative at the new point, reusable on acceptance (FSAL).
    f_new: Option<SVector<f64, D>>,
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn dopri_trial<S: OdeSystem<D>, const D: usize>(
    sys: &S,
    y: &SVector<f64, D>,
    k1: &SVector<f64, D>,
    h: f64,
    c: &StepControl,
) -> Trial<D> {
    let k2 = sys.rhs(&(y + k1 * (h * A21)));
    let k3 = sys.rhs(&(y + (k1 * A31 + k2 * A32) * h));
    let k4 = sys.rhs(&(y + (k1 * A41 + k2 * A42 + k3 * A43) * h));
    let k5 = sys.rhs(&(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h));
    let k6 = sys.rhs(&(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h));
    let y_new = y + (k1 * B1 + k3 * B3 + k4 * B4 + k5 * B5 + k6 * B6) * h;
    let k7 = sys.rhs(&y_new);
    let err_vec = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
    Trial {
        err: error_norm(&err_vec, y, &y_new, c.rtol, c.atol),
        y: y_new,
        f_new: Some(k7),
    }
}

fn rosenbrock_trial<S: OdeSystem<D>, const D: usize>(
    sys: &S,
    y: &SVector<f64, D>,
    f0: &SVector<f64, D>,
    jac: &SMatrix<f64, D, D>,
    h: f64,
    c: &StepControl,
) -> Option<Trial<D>> {
    let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
    let e32 = 6.0 + std::f64::consts::SQRT_2;
    let w = SMatrix::<f64, D, D>::identity() - jac * (h * d);
    let lu = DMatrix::from_column_slice(D, D, w.as_slice()).lu();
    let solve = |b: &SVector<f64, D>| {
        lu.solve(&DVector::from_column_slice(b.as_slice()))
            .map(|x| SVector::<f64, D>::from_column_slice(x.as_slice()))
    };
    let k1 = solve(f0)?;
    let f1 = sys.rhs(&(y + k1 * (0.5 * h)));
    let k2 = solve(&(f1 - k1))? + k1;
    let y_new = y + k2 * h;
    let f2 = sys.rhs(&y_new);
    let k3 = solve(&(f2 - (k2 - f1) * e32 - (k1 - f0) * 2.0))?;
    let err_vec = (k1 - k2 * 2.0 + k3) * (h / 6.0);
    Some(Trial {
        err: error_norm(&err_vec, y, &y_new, c.rtol, c.atol),
        y: y_new,
        f_new: Some(f2),
    })
}

/// Integrates `sys` from `y0` at `t = 0` to `t_end`.
///
/// `observer` sees the initial point and every accepted step; returning
/// `ControlFlow::Break` stops the integration at that point.
pub fn integrate<S, F, const D: usize>(
    sys: &S,
    y0: SVector<f64, D>,
    t_end: f64,
    control: &StepControl,
    mut observer: F,
) -> Result<Finish<D>, OdeError>
where
    S: OdeSystem<D>,
    F: FnMut(f64, &SVector<f64, D>) -> ControlFlow<()>,
{
    let (order, err_exp) = match control.method {
        Method::DormandPrince => (5, 1.0 / 5.0),
        Method::Rosenbrock => (3, 1.0 / 3.0),
    };
    let mut t = 0.0;
    let mut y = y0;
    let mut f = sys.rhs(&y);
    let mut accepted = 0;
    let mut rejected = 0;

    if observer(t, &y).is_break() {
        return Ok(Finish {
            t,
            y,
            accepted,
            rejected,
            stopped_early: true,
        });
    }

    let h_max = control.h_max.unwrap_or(t_end).min(t_end);
    let mut h = control
        .h_init
        .unwrap_or_else(|| initial_step(sys, &y, &f, order, control))
        .min(h_max);
    let mut last_rejected = false;

    while t < t_end {
        if accepted + rejected >= control.max_steps {
            return Err(OdeError::MaxStepsExceeded {
                t,
                steps: accepted + rejected,
            });
        }
        let h_floor = control.h_min.max(16.0 * f64::EPSILON * t.abs());
        if h < h_floor {
            return Err(OdeError::StepSizeUnderflow { t, h });
        }
        if t + h > t_end {
            h = t_end - t;
        }

        let trial = match control.method {
            Method::DormandPrince => dopri_trial(sys, &y, &f, h, control),
            Method::Rosenbrock => {
                let jac = sys.jacobian(&y);
                rosenbrock_trial(sys, &y, &f, &jac, h, control)
                    .ok_or(OdeError::SingularIteration { t })?
            }
        };

        if !trial.err.is_finite() || !trial.y.iter().all(|v| v.is_finite()) {
            if h <= h_floor {
                return Err(OdeError::NonFinite { t });
            }
            h *= 0.1;
            rejected += 1;
            last_rejected = true;
            continue;
        }

        let fac = if trial.err == 0.0 {
            5.0
        } else {
            (0.9 * trial.err.powf(-err_exp)).clamp(0.2, 5.0)
        };

        if trial.err <= 1.0 {
            t = if t_end - t <= h { t_end } else { t + h };
            y = trial.y;
            f = trial.f_new.unwrap_or_else(|| sys.rhs(&y));
            accepted += 1;
            if observer(t, &y).is_break() {
                return Ok(Finish {
                    t,
                    y,
                    accepted,
                    rejected,
                    stopped_early: true,
                });
            }
            let grow = if last_rejected { fac.min(1.0) } else { fac };
            h = (h * grow).min(h_max);
            last_rejected = false;
        } else {
            rejected += 1;
            h *= fac.min(1.0);
            last_rejected = true;
        }
    }

    Ok(Finish {
        t,
        y,
        accepted,
        rejected,
        stopped_early: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);
    impl OdeSystem<1> for Decay {
        fn rhs(&self, y: &SVector<f64, 1>) -> SVector<f64, 1> {
            y * -self.0
        }
    }

    struct Oscillator;
    impl OdeSystem<2> for Oscillator {
        fn rhs(&self, y: &SVector<f64, 2>) -> SVector<f64, 2> {
            SVector::from([y[1], -y[0]])
        }
    }

    fn run<S: OdeSystem<D>, const D: usize>(
        sys: &S,
        y0: SVector<f64, D>,
        t_end: f64,
        c: &StepControl,
    ) -> Finish<D> {
        integrate(sys, y0, t_end, c, |_, _| ControlFlow::Continue(())).unwrap()
    }

    #[test]
    fn dopri_exponential() {
        let fin = run(
            &Decay(2.0),
            SVector::from([1.0]),
            3.0,
            &StepControl::default(),
        );
        assert_eq!(fin.t, 3.0);
        assert!((fin.y[0] / (-6.0f64).exp() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn dopri_harmonic_oscillator() {
        let two_pi = 2.0 * std::f64::consts::PI;
        let fin = run(
            &Oscillator,
            SVector::from([1.0, 0.0]),
            two_pi,
            &StepControl::default(),
        );
        assert!((fin.y[0] - 1.0).abs() < 1e-8);
        assert!(fin.y[1].abs() < 1e-8);
    }

    #[test]
    fn rosenbrock_exponential() {
        let c = StepControl {
            rtol: 1e-8,
            atol: 1e-12,
            ..StepControl::rosenbrock()
        };
        let fin = run(&Decay(2.0), SVector::from([1.0]), 3.0, &c);
        assert!((fin.y[0] / (-6.0f64).exp() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rosenbrock_takes_long_steps_on_stiff_decay() {
        // fast mode at 1e4, observe at t = 100: explicit steps would need ~3e5
        let fin = run(
            &Decay(1e4),
            SVector::from([1.0]),
            100.0,
            &StepControl::rosenbrock(),
        );
        assert!(fin.y[0].abs() < 1e-12);
        assert!(fin.accepted < 10_000, "{} steps", fin.accepted);
    }

    #[test]
    fn step_budget_is_reported() {
        let c = StepControl {
            max_steps: 10,
            ..StepControl::default()
        };
        let err = integrate(&Decay(1e4), SVector::from([1.0]), 100.0, &c, |_, _| {
            ControlFlow::Continue(())
        })
        .unwrap_err();
        assert!(matches!(err, OdeError::MaxStepsExceeded { steps: 10, .. }));
    }

    #[test]
    fn underflow_is_reported_with_time() {
        let c = StepControl {
            h_min: 1.0,
            h_init: Some(0.5),
            ..StepControl::default()
        };
        let err = integrate(&Decay(1.0), SVector::from([1.0]), 10.0, &c, |_, _| {
            ControlFlow::Continue(())
        })
        .unwrap_err();
        assert_eq!(err, OdeError::StepSizeUnderflow { t: 0.0, h: 0.5 });
    }

    #[test]
    fn observer_can_stop() {
        let fin = integrate(
            &Decay(1.0),
            SVector::from([1.0]),
            10.0,
            &StepControl::default(),
            |t, _| {
                if t > 1.0 {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            },
        )
        .unwrap();
        assert!(fin.stopped_early);
        assert!(fin.t > 1.0 && fin.t < 10.0);
    }
}
