import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracspde import bernstein as bf
from fracspde.errors import BracketError, DomainError, ParameterError


def test_power_values():
    assert bf.eval(bf.Power(0.5), 4.0) == pytest.approx(2.0, rel=1e-15)
    assert bf.Power(1.0)(3.0) == 3.0


def test_logpower_values():
    phi = bf.LogPower(1.0, 2.0)
    assert phi(math.e - 1) == pytest.approx(2.0, rel=1e-15)


def test_domain():
    with pytest.raises(DomainError):
        bf.eval(bf.Power(0.5), 0.0)
    with pytest.raises(DomainError):
        bf.eval(bf.Power(0.5), np.array([1.0, -1.0]))
    with pytest.raises(DomainError):
        bf.inverse(bf.Power(0.5), 0.0)


def test_eval0_origin():
    out = bf.eval0(bf.Power(0.3), np.array([0.0, 1.0]))
    assert out[0] == 0.0 and out[1] == 1.0


def test_parameter_validation():
    with pytest.raises(ParameterError):
        bf.Power(1.5)
    with pytest.raises(ParameterError):
        bf.LogPower(0.5, -1.0)
    with pytest.raises(ParameterError):
        bf.Mixture(terms=((-1.0, bf.Power(0.5)),))
    with pytest.raises(ParameterError):
        bf.from_dict({"kind": "stable"})


def test_inverse_closed_form():
    assert bf.inverse(bf.Power(0.5), 3.0) == pytest.approx(9.0, rel=1e-11)


@settings(max_examples=60, deadline=None)
@given(s=st.floats(0.05, 1.0), y=st.floats(1e-6, 1e6))
def test_inverse_power(s, y):
    phi = bf.Power(s)
    x = bf.inverse(phi, y)
    assert abs(phi(x) - y) <= 1e-11 * y
    assert x == pytest.approx(phi.inverse_closed(y), rel=1e-9 / s)


@settings(max_examples=40, deadline=None)
@given(y=st.floats(1e-8, 300.0))
def test_inverse_logpower(y):
    # log(1 + sqrt(x)) = 300 still has its root below 2^1024
    phi = bf.LogPower(0.5, 1.0)
    x = bf.inverse(phi, y)
    assert abs(phi(x) - y) <= 1e-11 * y


def test_inverse_bracket_failure():
    # c log(1 + x) never reaches 1e6 below 2^1024
    with pytest.raises(BracketError):
        bf.inverse(bf.LogPower(1.0, 1.0), 1e6)


def test_roundtrip_dicts():
    specs = [
        bf.Power(0.5),
        bf.LogPower(0.7, 2.0),
        bf.Mixture(terms=((1.0, bf.Power(0.3)), (2.0, bf.Power(0.9)))),
    ]
    for s in specs:
        assert bf.from_dict(s.to_dict()) == s


@pytest.mark.parametrize("s", [0.25, 0.5, 0.7, 1.0])
def test_power_scaling_exponent(s):
    rep = bf.scaling_exponents(bf.Power(s))
    assert rep.kappa0_est == pytest.approx(s, abs=1e-12)
    assert rep.c1_est == pytest.approx(1.0, abs=1e-10)
    assert rep.holds(bf.Power(s))


def test_mixture_exponent_is_smallest_power():
    phi = bf.Mixture(terms=((1.0, bf.Power(0.3)), (1.0, bf.Power(0.9))))
    rep = bf.scaling_exponents(phi, bf.default_ratio_grid(64, -30, 30))
    assert 0.3 <= rep.kappa0_est < 0.32
    assert rep.holds(phi)


def test_logpower_exponent_small_on_wide_range():
    phi = bf.LogPower(1.0, 1.0)
    grid = bf.default_ratio_grid(16, 0.0, math.log2(1e3))
    assert bf.scaling_exponents(phi, grid).kappa0_est < 0.2


def test_empty_grid():
    with pytest.raises(ParameterError):
        bf.scaling_exponents(bf.Power(0.5), [])


def test_tail_integral_power():
    # int_{1/rho}^inf t^{-1-2s} dt = rho^{2s} / (2s), which is exactly the bound
    for s in (0.3, 0.5, 1.0):
        lhs, rhs = bf.tail_integral_check(bf.Power(s), 2.0)
        assert lhs == pytest.approx(2.0 ** (2 * s) / (2 * s), rel=1e-10)
        assert lhs <= rhs * (1 + 1e-9)


@settings(max_examples=20, deadline=None)
@given(rho=st.floats(1e-3, 1e3))
def test_tail_integral_mixture(rho):
    phi = bf.Mixture(terms=((1.0, bf.Power(0.4)), (0.5, bf.Power(0.8))))
    # the ratio grid must cover every scale the tail integral visits
    rep = bf.scaling_exponents(phi, bf.default_ratio_grid(128, -80, 80))
    lhs, rhs = bf.tail_integral_check(phi, rho, rep)
    assert 0 < lhs <= rhs * (1 + 1e-9)
