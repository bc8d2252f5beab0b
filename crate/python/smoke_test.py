"""Smoke test for the `lwi` extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import math
import sys
import tempfile
from pathlib import Path

import lwi


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    rates = lwi.RateSet.preset()
    assert rates.violations() == [], rates.violations()
    drive = lwi.DriveConfig(omega=160.0, g_sqrt_n=3000.0, n_density=2.4e18)

    state = lwi.steady_state(rates, drive)
    total = state["rho_aa"] + state["rho_bb"] + state["rho_cc"]
    assert math.isclose(total, 1.0, abs_tol=1e-12), total

    gain = lwi.linear_gain(rates, drive)
    assert close(lwi.linear_gain_numeric(rates, drive), gain, 1e-6)
    assert close(lwi.rough_gain(rates, drive), 9.140625, 1e-12)
    assert gain > 0 and lwi.inversion(rates, 160.0) < 0
    assert lwi.classify_legs(rates) == "gain-on-this-leg"

    ode = lwi.integrate_to_steady(rates, drive)
    assert ode["converged"]
    for key in ("rho_aa", "rho_bb", "i_rho_ab", "rho_cb", "i_rho_ca"):
        assert math.isclose(ode[key], state[key], abs_tol=1e-6), key

    sol = lwi.steady_intensity(rates, drive, 8.5)
    assert sol["branch"] == "stable"
    assert math.isclose(sol["gain_at_solution"], 8.5, abs_tol=1e-6)

    assert math.isclose(lwi.power_to_rabi(21.8), 148.0, rel_tol=1e-12)
    assert abs(lwi.doppler_fwhm(363.15) - 552.0) < 2.0
    assert close(lwi.optical_depth(363.15), 139.0, 0.10)

    bad = lwi.RateSet(5.75, 0.3, 0.013, 0.013, 0.001, 2.875, 2.875)
    assert any("coherence floor" in v for v in bad.violations())
    try:
        lwi.steady_state(bad, drive)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid rates accepted")

    with tempfile.TemporaryDirectory() as tmp:
        files = lwi.run_scenario("single-point", tmp, ["output.formats=[\"json\"]"])
        names = sorted(Path(f).name for f in files)
        assert names == ["resolved-config.toml", "single-point.json"], names

    print("lwi smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
