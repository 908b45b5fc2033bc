import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from fracspde import bernstein as bf
from fracspde.errors import AliasingWarning, GridMismatchError, ParameterError
from fracspde.kernels import (
    Field,
    FractionalExponents,
    SpectralGrid,
    auto_half_width,
    bessel_potential,
    circular_convolve_direct,
    convolve,
    kernel_grid,
    l1_norm,
    lag_symbols,
    lp_norm,
    mass_identity,
    plane_wave,
    pointwise_bound,
    slab_symbol,
    sobolev_norm,
    symbol_S,
    symbol_S_zeta,
)

pytestmark = pytest.mark.filterwarnings("ignore::fracspde.errors.AliasingWarning")

HALF = bf.Power(0.5)
HEAT = bf.Power(1.0)


# --- exponents ---------------------------------------------------------------


def test_exponent_derived_quantities():
    e = FractionalExponents(alpha=0.5, sigma1=0.6, sigma2=0.8, p=2.0)
    assert e.delta0 == pytest.approx(0.4)
    assert e.delta1 == pytest.approx((1.6 - 1.0) / 0.5)
    assert e.delta0_tilde == pytest.approx(1.6)
    assert e.delta1_tilde == pytest.approx(2.0 - 1.2)
    assert e.theta == pytest.approx(min(0.5, 1.0, 2 * (0.5 - 0.6) + 1, 2 * (0.5 - 0.8) + 2))


def test_exponent_boundary_cases_use_kappa():
    e = FractionalExponents(alpha=0.5, sigma1=0.5, sigma2=0.5, p=2.0, kappa_small=1e-2)
    assert e.delta0 == 1e-2 and e.delta1 == 1e-2


@pytest.mark.parametrize(
    "kw",
    [
        dict(alpha=1.0, sigma1=0.6, sigma2=0.6, p=2.0),
        dict(alpha=0.5, sigma1=1.0, sigma2=0.6, p=2.0),
        dict(alpha=0.5, sigma1=0.6, sigma2=1.0, p=2.0),
        dict(alpha=0.5, sigma1=0.6, sigma2=0.6, p=0.5),
        dict(alpha=0.5, sigma1=0.3, sigma2=0.6, p=2.0),  # delta0_tilde > 2
    ],
)
def test_exponent_validation(kw):
    with pytest.raises(ParameterError):
        FractionalExponents(**kw)


# --- grid and fields ---------------------------------------------------------


def test_grid_validation():
    with pytest.raises(ParameterError):
        SpectralGrid(1, 12, 1.0)
    with pytest.raises(ParameterError):
        SpectralGrid(1, 8, 1.0)
    with pytest.raises(ParameterError):
        SpectralGrid(4, 16, 1.0)
    with pytest.raises(ParameterError):
        SpectralGrid(3, 512, 1.0)
    with pytest.raises(ParameterError):
        SpectralGrid(1, 16, 0.0)


def test_grid_lattice():
    g = SpectralGrid(2, 16, math.pi)
    assert g.dx == pytest.approx(2 * math.pi / 16)
    assert g.xi_sq.shape == (16, 9)
    assert g.xi_sq[3, 4] == pytest.approx(25.0)
    assert g.xi_sq[-3, 4] == pytest.approx(25.0)
    assert g.hermitian_weight.sum() == 16 * 16


def test_field_validation():
    g = SpectralGrid(1, 16, 1.0)
    with pytest.raises(GridMismatchError):
        Field(g, np.zeros(15))
    with pytest.raises(ParameterError):
        Field(g, np.full(16, np.nan))
    f = Field(g, np.ones(16))
    with pytest.raises(ValueError):
        f.values[0] = 2.0


# --- symbols -----------------------------------------------------------------


def test_symbol_examples():
    assert symbol_S(0.4, 0.4, 3.0, 0.0, HALF) == pytest.approx(1.0)
    assert symbol_S(0.5, 1.0, 0.5, 0.0, HALF) == pytest.approx(0.5 ** -0.5 / math.sqrt(math.pi))
    xs = np.array([0.0, 0.3, 2.0, 10.0])
    assert np.allclose(symbol_S(1.0, 1.0, 0.7, xs, HEAT), np.exp(-0.7 * xs), rtol=1e-13)


def test_symbol_zeta_examples():
    assert symbol_S_zeta(0.5, 0.5, 0.3, 1.0, 0.0, HALF) == 0.0
    xs = np.array([0.5, 2.0, 7.0])
    got = symbol_S_zeta(1.0, 1.0, 1.0, 0.4, xs, HEAT)
    assert np.allclose(got, -xs * np.exp(-0.4 * xs), rtol=1e-13)
    with pytest.raises(ParameterError):
        symbol_S_zeta(0.5, 0.5, 0.0, 1.0, xs, HALF)


def test_symbol_requires_positive_time():
    with pytest.raises(ParameterError):
        symbol_S(0.5, 0.5, 0.0, 1.0, HALF)


@pytest.mark.parametrize("alpha,sigma", [(0.5, 0.5), (0.3, 1.0), (0.8, 1.2)])
def test_slab_symbol_is_time_integral(alpha, sigma):
    xs = np.array([0.0, 0.5, 4.0])
    got = slab_symbol(alpha, sigma, 0.2, 0.9, xs, HALF)
    for x, g in zip(xs, got):
        ref = integrate.quad(lambda u: symbol_S(alpha, sigma, u, x, HALF), 0.2, 0.9, epsrel=1e-12)[0]
        assert g == pytest.approx(ref, rel=1e-9)


def test_slab_symbol_from_zero_mass():
    a = 0.6
    got = slab_symbol(a, 1.0, 0.0, 0.5, np.array([0.0]), HALF)[0]
    assert got == pytest.approx(0.5 ** a / special.gamma(1 + a), rel=1e-13)


def test_lag_symbols_match_direct():
    lags = np.array([0.01, 0.3, 2.0])
    xs = np.array([0.0, 1.0, 100.0, 1e4])
    phi_vals = bf.eval0(HALF, xs)
    got = lag_symbols(0.5, 0.8, lags, phi_vals)
    for i, t in enumerate(lags):
        assert np.allclose(got[i], symbol_S(0.5, 0.8, t, xs, HALF), rtol=1e-9)


# --- kernel snapshots --------------------------------------------------------


def test_heat_kernel_closed_form():
    g = SpectralGrid(1, 1024, 20.0)
    t = 0.5
    k = kernel_grid(1.0, 1.0, t, g, HEAT)
    x = g.axis
    exact = np.exp(-x * x / (4 * t)) / math.sqrt(4 * math.pi * t)
    inner = np.abs(x) <= g.L / 2
    assert np.max(np.abs(k.values - exact)[inner]) < 1e-6


@pytest.mark.parametrize("alpha", [0.3, 0.6, 0.9])
@pytest.mark.parametrize("phi", [HALF, bf.Power(0.75), HEAT, bf.LogPower(1.0, 1.0)])
def test_density_nonnegative_unit_mass(alpha, phi):
    L = auto_half_width(alpha, alpha, 1.0, phi, 1, 1024)
    k = kernel_grid(alpha, alpha, 1.0, SpectralGrid(1, 1024, L), phi)
    assert k.values.min() >= -1e-8
    assert k.mass == pytest.approx(1.0, abs=1e-12)
    assert l1_norm(k) == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(alpha=st.floats(0.1, 1.0), sigma=st.floats(0.0, 1.5), t=st.floats(0.01, 10.0))
def test_mass_identity(alpha, sigma, t):
    g = SpectralGrid(1, 64, 10.0)
    k = kernel_grid(alpha, sigma, t, g, HALF)
    ref = mass_identity(alpha, sigma, t)
    assert k.mass == pytest.approx(ref, rel=1e-10, abs=1e-14)


@settings(max_examples=15, deadline=None)
@given(alpha=st.floats(0.1, 1.0), sigma=st.floats(0.0, 1.5), zeta=st.floats(0.05, 1.0))
def test_roundtrip(alpha, sigma, zeta):
    g = SpectralGrid(2, 32, 5.0)
    assert kernel_grid(alpha, sigma, 0.7, g, HALF).roundtrip_residual() < 1e-12
    assert kernel_grid(alpha, sigma, 0.7, g, HALF, zeta=zeta).roundtrip_residual() < 1e-12


def test_zeta_kernel_has_zero_mass():
    k = kernel_grid(0.5, 0.7, 1.0, SpectralGrid(1, 256, 20.0), HALF, zeta=0.4)
    assert abs(k.mass) < 1e-12


def test_aliasing_warning():
    with pytest.warns(AliasingWarning):
        kernel_grid(0.5, 0.5, 1.0, SpectralGrid(1, 64, 100.0), HALF)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        kernel_grid(1.0, 1.0, 1.0, SpectralGrid(1, 256, 20.0), HEAT)


@pytest.mark.parametrize(
    "alpha,sigma,phi",
    [(0.5, 0.5, HALF), (0.8, 1.0, bf.Power(0.75)), (0.3, 1.2, HALF)],
)
def test_tail_bound_constant_is_stable(alpha, sigma, phi):
    # jump-type phi: S(t, x) ~ C t^(2a - s) phi(|x|^-2) / |x|^d in the far field
    g = SpectralGrid(1, 4096, 64.0)
    t = 1.0
    k = kernel_grid(alpha, sigma, t, g, phi)
    r = np.maximum(np.abs(g.axis), g.dx)
    far = (t ** alpha * bf.eval(phi, r ** -2.0) < 1) & (r > 2) & (r < g.L / 4)
    ratio = np.abs(k.values[far]) / pointwise_bound(alpha, sigma, t, r[far], phi, 1)
    assert ratio.max() / ratio.min() < 10


def test_heat_semigroup_and_fractional_negative_control():
    g = SpectralGrid(1, 512, 20.0)
    f = Field(g, np.exp(-g.axis ** 2))
    a = convolve(kernel_grid(1.0, 1.0, 0.3, g, HEAT), convolve(kernel_grid(1.0, 1.0, 0.5, g, HEAT), f))
    b = convolve(kernel_grid(1.0, 1.0, 0.8, g, HEAT), f)
    assert np.max(np.abs(a.values - b.values)) < 1e-8
    a = convolve(kernel_grid(0.5, 0.5, 0.3, g, HALF), convolve(kernel_grid(0.5, 0.5, 0.5, g, HALF), f))
    b = convolve(kernel_grid(0.5, 0.5, 0.8, g, HALF), f)
    assert np.max(np.abs(a.values - b.values)) > 1e-3


# --- convolution and norms ---------------------------------------------------


def test_convolve_constant_and_mode():
    g = SpectralGrid(1, 128, 10.0)
    k = kernel_grid(0.5, 0.5, 0.8, g, HALF)
    out = convolve(k, Field(g, np.full(128, 2.5)))
    assert np.allclose(out.values, 2.5, atol=1e-12)
    mode = plane_wave(g, [5])
    out = convolve(k, mode)
    scale = symbol_S(0.5, 0.5, 0.8, (5 * g.xi_unit) ** 2, HALF)
    assert np.allclose(out.values, scale * mode.values, atol=1e-12)


def test_convolve_matches_direct_sum():
    g = SpectralGrid(1, 16, 3.0)
    k = kernel_grid(0.5, 0.9, 0.6, g, HALF)
    rng = np.random.default_rng(1)
    f = Field(g, rng.standard_normal(16))
    direct = circular_convolve_direct(k.values, f.values, g.cell)
    assert np.max(np.abs(convolve(k, f).values - direct)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2 ** 32 - 1))
def test_convolve_linear(a, b, seed):
    g = SpectralGrid(1, 64, 4.0)
    k = kernel_grid(0.7, 1.0, 0.5, g, HALF)
    rng = np.random.default_rng(seed)
    f, h = (Field(g, rng.standard_normal(64)) for _ in range(2))
    lhs = convolve(k, a * f + b * h).values
    rhs = a * convolve(k, f).values + b * convolve(k, h).values
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * (1 + abs(a) + abs(b)) * 10


def test_convolve_grid_mismatch():
    k = kernel_grid(0.5, 0.5, 1.0, SpectralGrid(1, 32, 1.0), HALF)
    with pytest.raises(GridMismatchError):
        convolve(k, Field(SpectralGrid(1, 32, 2.0), np.zeros(32)))


def test_lp_norms_of_constant():
    g = SpectralGrid(2, 16, 1.0)
    f = Field(g, np.full(g.shape, 3.0))
    assert f.lp_norm(2) == pytest.approx(3.0 * 2.0)
    assert f.lp_norm(np.inf) == 3.0


def test_lp_norm_power_scaling():
    phi = bf.Power(0.75)
    a, s, p = 0.5, 0.5, 2.0
    ts = 2.0 ** np.arange(-6, 1)
    norms = []
    for t in ts:
        L = auto_half_width(a, s, t, phi, 1, 1024)
        norms.append(lp_norm(kernel_grid(a, s, t, SpectralGrid(1, 1024, L), phi), p))
    slope = np.polyfit(np.log(ts), np.log(norms), 1)[0]
    assert slope == pytest.approx((a - s) - a / (2 * 0.75) * (p - 1) / p, rel=0.1)


def test_sobolev():
    g = SpectralGrid(1, 128, 5.0)
    rng = np.random.default_rng(0)
    f = Field(g, rng.standard_normal(128))
    assert sobolev_norm(f, 0.0, 3.0, HALF) == pytest.approx(f.lp_norm(3.0), rel=1e-13)
    back = bessel_potential(bessel_potential(f, -2.0, HALF), 2.0, HALF)
    assert np.max(np.abs(back.values - f.values)) < 1e-10
    mode = plane_wave(g, [7])
    lam = HALF((7 * g.xi_unit) ** 2)
    assert sobolev_norm(mode, 1.5, 2.0, HALF) == pytest.approx((1 + lam) ** 0.75 * mode.lp_norm(2), rel=1e-12)


def test_auto_half_width_respects_resolution_cap():
    for phi in (HALF, HEAT):
        L = auto_half_width(0.5, 0.5, 1.0, phi, 1, 1024)
        ell = 1.0 / math.sqrt(bf.inverse(phi, 1.0))
        assert 2 * L / 1024 <= ell / 32 * (1 + 1e-12)
