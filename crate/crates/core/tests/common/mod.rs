//! Seeded parameter sampling shared by the integration tests.

#![allow(dead_code)]

use lwi_core::bloch::{validate_rates, DriveConfig, RateSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const N_REF: f64 = 2.4e18;

pub fn preset_rates() -> RateSet {
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

pub fn preset_drive(omega: f64) -> DriveConfig {
    DriveConfig::from_collective(omega, 0.0, 3000.0, N_REF)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Rates log-uniform over [1e-3, 10] MHz with `f` uniform on [0, 1],
/// redrawn until they pass validation.
pub fn random_rates(rng: &mut ChaCha8Rng) -> RateSet {
    loop {
        let mut r = || log_uniform(rng, 1e-3, 10.0);
        let rates = RateSet {
            gamma_a: r(),
            gamma_b: r(),
            gamma_c: r(),
            gamma_bc: r(),
            gamma_ba: r(),
            gamma_ac: r(),
            f: 0.0,
        };
        let rates = RateSet {
            f: rng.random_range(0.0..=1.0),
            ..rates
        };
        if validate_rates(&rates).is_empty() {
            return rates;
        }
    }
}

/// A valid tuple: rates as above, Ω on [0, 500] MHz, g·a on [0, 50] MHz and
/// g√N log-uniform on [10, 3000] MHz.
pub fn random_tuple(rng: &mut ChaCha8Rng) -> (RateSet, DriveConfig) {
    let rates = random_rates(rng);
    let omega = rng.random_range(0.0..=500.0);
    let ga = rng.random_range(0.0..=50.0);
    let g_sqrt_n = log_uniform(rng, 10.0, 3000.0);
    let d = DriveConfig::from_collective(omega, 0.0, g_sqrt_n, N_REF);
    (rates, d.with_amplitude(ga / d.g))
}

pub fn tuples(seed: u64, n: usize) -> Vec<(RateSet, DriveConfig)> {
    let mut r = rng(seed);
    (0..n).map(|_| random_tuple(&mut r)).collect()
}
