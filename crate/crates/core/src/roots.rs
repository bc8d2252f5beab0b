//! Bracketing root refinement and sample grids.

use serde::{Deserialize, Serialize};

/// Result of [`refine`]: the last midpoint and the final bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Bisects a sign change of `f` on `[lo, hi]` until `stop(lo, hi, f(mid))`
/// holds or `max_iter` halvings are done. `None` if the ends do not bracket
/// a sign change or `f` is not finite at an end.
pub fn refine<F, S>(mut f: F, lo: f64, hi: f64, mut stop: S, max_iter: usize) -> Option<Root>
where
    F: FnMut(f64) -> f64,
    S: FnMut(f64, f64, f64) -> bool,
{
    let (mut lo, mut hi) = (lo, hi);
    let f_lo = f(lo);
    let f_hi = f(hi);
    if !f_lo.is_finite() || !f_hi.is_finite() {
        return None;
    }
    if f_lo == 0.0 {
        return Some(Root {
            x: lo,
            fx: 0.0,
            lo,
            hi: lo,
        });
    }
    if f_hi == 0.0 {
        return Some(Root {
            x: hi,
            fx: 0.0,
            lo: hi,
            hi,
        });
    }
    if f_lo.signum() == f_hi.signum() {
        return None;
    }
    let lo_sign = f_lo.signum();
    let mut x = 0.5 * (lo + hi);
    let mut fx = f(x);
    for _ in 0..max_iter {
        if fx == 0.0 || stop(lo, hi, fx) {
            break;
        }
        if fx.signum() == lo_sign {
            lo = x;
        } else {
            hi = x;
        }
        let next = 0.5 * (lo + hi);
        if next == x {
            break;
        }
        x = next;
        fx = f(x);
    }
    Some(Root { x, fx, lo, hi })
}

/// Bisection to an absolute bracket width `xtol`.
pub fn bisect<F: FnMut(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    xtol: f64,
    max_iter: usize,
) -> Option<f64> {
    refine(f, lo, hi, |l, h, _| (h - l).abs() <= xtol, max_iter).map(|r| r.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Linear,
    Log,
}

/// `points` samples from `min` to `max` inclusive. Endpoints are exact.
pub fn grid(min: f64, max: f64, points: usize, spacing: Spacing) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![min],
        n => {
            let last = (n - 1) as f64;
            (0..n)
                .map(|i| {
                    if i == 0 {
                        return min;
                    }
                    if i == n - 1 {
                        return max;
                    }
                    let s = i as f64 / last;
                    match spacing {
                        Spacing::Linear => min + (max - min) * s,
                        Spacing::Log => (min.ln() + (max.ln() - min.ln()) * s).exp(),
                    }
                })
                .collect()
        }
    }
}
