"""Acceptance suite: eleven criteria at their stated tolerances.

Each test records one ``PASS``/``FAIL`` line, printed at the end of the
session, then asserts the verdict.
"""

import time

import pytest

from fracspde import checks
from fracspde.bernstein import Power

from conftest import ACCEPTANCE_LINES


def verdict(tag, title, ok, detail, elapsed):
    line = f"[{'PASS' if ok else 'FAIL'}] {tag} {title}: {detail} ({elapsed:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_c01_mittag_leffler_identities():
    r, dt = timed(checks.ml_check, tol_exp=1e-10, tol_cos=1e-8, tol_erfc=1e-8)
    m = r.metrics
    ok = r.passed and dt < 1.0
    verdict("C1", "Mittag-Leffler identities", ok,
            f"exp {m['max_rel_err_exp']:.1e}, cos {m['max_abs_err_cos']:.1e}, erfc {m['rel_err_erfc']:.1e}", dt)


def test_c02_kernel_mass():
    r, dt = timed(checks.kernel_check, checks.MASS_CASES, (0.1, 1.0), d=1, n=1024, mass_tol=1e-6)
    ok = r.metrics["max_mass_rel_err"] <= 1e-6 and dt < 10.0
    verdict("C2", "kernel mass", ok, f"max rel err {r.metrics['max_mass_rel_err']:.1e} over 18 cases", dt)


def test_c03_l1_scaling():
    r, dt = timed(checks.kernel_check, checks.L1_CASES, checks.T_SWEEP, d=1, n=1024, slope_tol=0.05)
    dev = r.metrics["max_slope_deviation"]
    verdict("C3", "L1 scaling", r.passed, f"max slope deviation {dev:.2%} (tol 5%)", dt)


@pytest.mark.slow
def test_c04_lp_bound():
    t0 = time.perf_counter()
    devs = []
    for d, p, s, a, sig in checks.LP_CASES:
        r = checks.kernel_check([(a, sig, Power(s))], checks.T_SWEEP, d=d, n=1024 if d == 1 else 256,
                                p=p, slope_tol=0.10)
        devs.append(r.metrics["max_slope_deviation"])
    dt = time.perf_counter() - t0
    verdict("C4", "Lp bound", max(devs) <= 0.10,
            "slope deviations " + ", ".join(f"{x:.2%}" for x in devs) + " (tol 10%)", dt)


def test_c05_band_estimate():
    r, dt = timed(checks.band_check, slope_tol=0.10)
    m = r.metrics
    verdict("C5", "band estimate", r.passed,
            f"max measured/bound {m['max_measured_over_bound']:.3f}, slope deviations "
            + ", ".join(f"{k} {v:.2%}" for k, v in m["deviations"].items()), dt)


def test_c06_square_function():
    r, dt = timed(checks.square_check, ps=(2.0, 3.0, 4.0), n_samples=20, spread_tol=5.0, oracle_tol=1e-6)
    m = r.metrics
    spread = max(m["max_over_median"].values())
    verdict("C6", "square function strong-(p,p)", r.passed,
            f"max/median {spread:.2f} (tol 5), Fourier oracle {m['fourier_oracle_rel_err']:.1e}", dt)


@pytest.mark.slow
def test_c07_compensated_poisson_isometry():
    r, dt = timed(checks.noise_check, n_ens=10_000, rates=(1.0, 10.0, 100.0), ps=(1.0, 1.5), n_se=5.0)
    m = r.metrics
    ok = r.passed and dt < 30.0
    ratios = ", ".join(f"{k}: {v:.3f}" for k, v in m["ratios"].items())
    verdict("C7", "compensated-Poisson isometry", ok,
            f"p=2 ratio {m['isometry_ratio']:.4f} ({m['isometry_z']:.2f} SE); {ratios}", dt)


@pytest.mark.slow
def test_c08_solver_zero_noise_identities():
    r, dt = timed(checks.solver_identity_check, n_t_const=256, tol_free=1e-8, tol_const=1e-4, slope_tol=0.3)
    m = r.metrics
    verdict("C8", "solver zero-noise identities", r.passed,
            f"free {m['free_evolution_max_err']:.1e}, constant {m['constant_forcing_max_err']:.1e}, "
            f"dt slope {m['dt_slope']:.2f}", dt)


@pytest.mark.slow
def test_c09_contraction():
    cfg = checks.default_solver_config(n_paths=64, vartheta=80.0)
    r, dt = timed(checks.contraction_check, cfg, varthetas=(0.0, 5.0, 20.0, 80.0))
    ok = r.passed and dt < 300.0
    rs = r.metrics["ratios"]
    verdict("C9", "contraction", ok, "ratios over vartheta 0,5,20,80: " + ", ".join(f"{x:.3f}" for x in rs), dt)


@pytest.mark.slow
def test_c10_stopped_moments():
    r, dt = timed(checks.stopped_moment_check, n_small=32, n_nest=16, n_se=3.0)
    m = r.metrics
    verdict("C10", "stopped moments", r.passed,
            f"doubling drift {m['max_drift_in_se']:.2f} SE (tol 3), nesting {m['nesting_max_diff']:.1e} "
            f"(tol {m['picard_tol']:.0e})", dt)


def test_c11_solvability_gate():
    r, dt = timed(checks.gate_check)
    verdict("C11", "solvability gate", r.passed, "violating and boundary configs rejected, admissible accepted", dt)
    by_case = {row["case"]: row for row in r.rows}
    assert by_case["violating"]["rejected"] and by_case["boundary"]["rejected"]
    assert not by_case["admissible"]["rejected"]
    print(by_case["boundary"]["message"])
