import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracspde import _backend, _pycore

core = pytest.importorskip("fracspde._core")


def test_backend_selected():
    assert _backend.BACKEND in ("cython", "python")


def test_env_forces_fallback():
    code = "from fracspde import BACKEND; print(BACKEND)"
    env = {**os.environ, "FRACSPDE_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 40), st.integers(1, 9))
def test_causal_convolve_agrees(seed, n, nf):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((n + 1, nf))
    g = rng.standard_normal((n, nf)) + 1j * rng.standard_normal((n, nf))
    a = core.causal_convolve(q, g)
    b = _pycore.causal_convolve(q, g)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)
    assert np.all(a[0] == 0)


def test_causal_convolve_direct_sum():
    q = np.arange(1.0, 6.0)[:, None]
    g = np.array([[1.0], [10.0], [100.0], [1000.0]])
    r = core.causal_convolve(q, g)[:, 0].real
    # r[3] = q[3] g[0] + q[2] g[1] + q[1] g[2]
    assert r[3] == 4 + 30 + 200


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 30))
def test_atom_accumulate_agrees(seed, na):
    rng = np.random.default_rng(seed)
    amp = rng.standard_normal(na)
    amp[::3] = 0.0
    table = rng.standard_normal((na, 5, 7)) + 1j * rng.standard_normal((na, 5, 7))
    assert np.allclose(core.atom_accumulate(amp, table), _pycore.atom_accumulate(amp, table), rtol=1e-13, atol=1e-13)


def test_rational_and_cubic_agree():
    rng = np.random.default_rng(3)
    w = rng.uniform(0.01, 10, 64)
    wt = rng.standard_normal(64)
    x = rng.uniform(0, 50, 700)
    assert np.allclose(core.ml_rational_sum(w, wt, x, 0.3, -0.7, 0.2), _pycore.ml_rational_sum(w, wt, x, 0.3, -0.7, 0.2),
                       rtol=1e-12, atol=1e-14)
    coef = rng.standard_normal((4, 50))
    s = rng.uniform(-1, 12, 300)
    assert np.allclose(core.cubic_eval_uniform(0.5, 0.2, coef, s), _pycore.cubic_eval_uniform(0.5, 0.2, coef, s),
                       rtol=1e-13, atol=1e-13)


def test_series_sum_agrees():
    from fracspde.mittag_leffler import _series_coefficients

    lcoef, csign = _series_coefficients(0.6, 1.0)[:2]
    # inside the series switch |z| <= 7^alpha; beyond it cancellation dominates
    z = np.linspace(-3, 3, 101)
    kmin = np.zeros(z.size, dtype=np.int64)
    a, na = core.ml_series_sum(z, lcoef, csign, kmin, 1e-17)
    b, nb = _pycore.ml_series_sum(z, lcoef, csign, kmin, 1e-17)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-15)
    assert np.array_equal(na, nb)
