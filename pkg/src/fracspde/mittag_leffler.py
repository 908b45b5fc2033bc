"""Two-parameter Mittag-Leffler function on the real axis.

Three evaluation routes:

* ``ml_series``: the defining power series, Kahan-compensated;
* ``ml_neg_integral``: the real-line integral representation for
  ``E_{a,b}(-x)``, ``x > 0``, ``0 < a <= 1``, ``b < 1 + a``;
* ``ml``: dispatch between the two.

``MLTable`` tabulates ``x -> E_{a,b}(-x)`` on a log grid for the kernel
code, which needs millions of evaluations at fixed ``(a, b)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from . import _backend
from .errors import NonconvergenceError, ParameterError, QuadratureError, UnsupportedArgumentError

MAX_TERMS = 10_000
SERIES_TOL = 1e-16
# The alternating series for E_{a,b}(-x) carries terms up to ~exp(x**(1/a));
# capping x**(1/a) at 7 bounds the cancellation loss to about three digits.
_SAFE_SERIES_EXP = 7.0
_U_TOP_EXP = 6  # integrand carries exp(-u); nothing survives past u = 64
_JACOBI_NODES = 32
# beyond this many sub-panels per octave the shared rule gives way to
# per-point adaptive quadrature around the near-real pole
_MAX_SPLIT = 16


@dataclass(frozen=True)
class MLParams:
    alpha: float
    beta: float
    series_cutoff: float = 5.0
    quad_nodes: int = 64

    def __post_init__(self):
        if not 0.0 < self.alpha <= 2.0:
            raise ParameterError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.series_cutoff > 0:
            raise ParameterError("series_cutoff must be positive")
        if self.quad_nodes < 64:
            raise ParameterError("quad_nodes must be at least 64")

    @property
    def integral_ok(self) -> bool:
        return 0.0 < self.alpha <= 1.0 and self.beta < 1.0 + self.alpha

    @property
    def series_switch(self) -> float:
        """|z| below which ``ml`` uses the series for negative arguments."""
        return min(self.series_cutoff, _SAFE_SERIES_EXP ** self.alpha)


# ----------------------------------------------------------------------------
# power series


@lru_cache(maxsize=64)
def _series_coefficients(alpha, beta):
    k = np.arange(MAX_TERMS, dtype=float)
    arg = k * alpha + beta
    pole = (arg <= 0) & (arg == np.round(arg))
    safe = np.where(pole, 1.0, arg)
    lcoef = np.where(pole, 0.0, -special.gammaln(safe))
    csign = np.where(pole, 0.0, special.gammasgn(safe))
    lcoef.setflags(write=False)
    csign.setflags(write=False)
    return lcoef, csign


def _series_values(alpha, beta, z):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    lcoef, csign = _series_coefficients(float(alpha), float(beta))
    # terms |z|^k / Gamma(k a + b) decrease once (k a + b)^a exceeds |z|
    with np.errstate(over="ignore"):
        kmin = np.ceil((np.abs(z) ** (1.0 / alpha) - beta) / alpha) + 1.0
    kmin = np.clip(kmin, 1, MAX_TERMS).astype(np.int64)
    vals, nterms = _backend.ml_series_sum(z, lcoef, csign, kmin, SERIES_TOL)
    return vals, nterms


def ml_series(params: MLParams, z):
    """Sum the power series ``sum_k z^k / Gamma(k*alpha + beta)``.

    Accepts a scalar or an array. Raises ``ParameterError`` when
    ``|z| > params.series_cutoff`` and ``NonconvergenceError`` if the term
    budget runs out.
    """
    za = np.asarray(z, dtype=float)
    if np.any(np.abs(za) > params.series_cutoff):
        raise ParameterError(
            f"|z| exceeds series_cutoff={params.series_cutoff}; use ml() or raise the cutoff"
        )
    vals, nterms = _series_values(params.alpha, params.beta, za.ravel())
    if np.any(nterms >= MAX_TERMS):
        bad = za.ravel()[nterms >= MAX_TERMS]
        raise NonconvergenceError(f"series did not converge in {MAX_TERMS} terms at z={bad[:3]}")
    out = vals.reshape(za.shape)
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------------
# integral representation


def _octave_split(alpha):
    """Sub-panels per octave so the near-pole of the integrand stays resolved."""
    if alpha <= 0.5:
        return 1
    angle = math.pi * (1.0 - alpha) / alpha
    return max(1, math.ceil(1.0 / (3.0 * angle)))


@lru_cache(maxsize=256)
def _integral_rule(alpha, beta, lo_exp, quad_nodes):
    """Nodes ``w`` and weights so that E_{a,b}(-x) = sum wt*(w s1 + x s2)/(...)."""
    m = _octave_split(alpha)
    n_sub = max(16, quad_nodes // m)
    gx, gw = np.polynomial.legendre.leggauss(n_sub)
    edges = 2.0 ** (lo_exp + np.arange((_U_TOP_EXP - lo_exp) * m + 1) / m)
    a = edges[:-1, None]
    b = edges[1:, None]
    u = (a + (b - a) * (gx + 1.0) / 2.0).ravel()
    du = ((b - a) / 2.0 * gw).ravel()
    wt_u = du * u ** (alpha - beta) * np.exp(-u) / math.pi
    w_u = u ** alpha

    # innermost panel [0, u_lo] in the original variable r = u**alpha, with
    # the algebraic factor r**gamma absorbed by a Gauss-Jacobi rule
    gamma = (1.0 - beta) / alpha
    jx, jw = special.roots_jacobi(_JACOBI_NODES, 0.0, gamma)
    r_lo = edges[0] ** alpha
    r = r_lo * (jx + 1.0) / 2.0
    wt_r = jw * (r_lo / 2.0) ** (gamma + 1.0) * np.exp(-r ** (1.0 / alpha)) / (math.pi * alpha)

    w = np.concatenate([r, w_u])
    wt = np.concatenate([wt_r, wt_u])
    w.setflags(write=False)
    wt.setflags(write=False)
    return w, wt


def _lo_exp(alpha, x_min):
    # keep the Jacobi panel far inside the pole radius |r| = x
    bound = math.floor((math.log2(x_min) - 20.0) / alpha)
    return int(min(-40, bound))


def _near_one(alpha, beta, x):
    """Integral representation for alpha just below 1, one point at a time.

    The rational factor has poles at ``r_c +- i h`` with ``r_c = -x cos(pi a)``
    and ``h = x sin(pi a)``, so they pinch the real axis as ``a -> 1``. Its
    numerator splits as ``s1 (r - r_c) + h cos(pi (1 - b))``; subtracting
    the smooth factor at ``r_c`` leaves bounded integrands plus closed-form
    arctan and log terms, which stay well conditioned down to ``h = 0``.
    """
    gamma = (1.0 - beta) / alpha
    gap = 1.0 - alpha  # exact for alpha near 1
    s1 = math.sin(math.pi * (1.0 - beta))
    cb = math.cos(math.pi * (1.0 - beta))
    c, s = -math.cos(math.pi * gap), math.sin(math.pi * gap)
    s2 = s1 * c + cb * s  # sin(pi (1 - b + a)) without rounding pi a first
    inv = 1.0 / alpha
    r_top = 80.0 ** alpha  # exp(-r^(1/alpha)) < 1e-34 beyond

    def smooth(r):
        return r ** gamma * math.exp(-r ** inv)

    out = np.empty_like(x)
    for i, xi in enumerate(x):
        rc, h = -c * xi, s * xi

        def rational(r):
            return (r * s1 + xi * s2) / ((r - rc) ** 2 + h * h) * math.exp(-r ** inv)

        head, err = integrate.quad(rational, 0.0, 1.0, weight="alg", wvar=(gamma, 0.0),
                                   epsabs=0.0, epsrel=1e-13, limit=200)
        if not 1.0 < rc < r_top:
            tail, e1 = integrate.quad(lambda r: r ** gamma * rational(r), 1.0, r_top,
                                      epsabs=0.0, epsrel=1e-13, limit=500)
        else:
            k0, rc_pow = smooth(rc), rc ** inv
            k1 = k0 * (gamma / rc - inv * rc_pow / rc)  # derivative of smooth at rc

            def residual(r):
                dr = r - rc
                # smooth(r) - smooth(rc) - k1 dr, free of cancellation near rc
                lr = math.log1p(dr / rc)
                dk = k0 * math.expm1(gamma * lr - rc_pow * math.expm1(inv * lr)) - k1 * dr
                return dk * (s1 * dr + h * cb) / (dr * dr + h * h) if dr != 0.0 else 0.0

            offs = (-0.1 * rc, 0.0, 0.1 * rc) + ((-h, h) if h > 1e-9 * rc else ())  # skip ulp-wide panels
            pts = sorted({min(max(rc + k, 1.0), r_top) for k in offs} - {1.0, r_top})
            body, e1 = integrate.quad(residual, 1.0, r_top, points=pts, epsabs=0.0, epsrel=1e-13, limit=500)
            a, b = 1.0 - rc, r_top - rc
            lorentz = math.atan2(b, h) - math.atan2(a, h)  # pi when h = 0
            log_part = 0.5 * math.log((b * b + h * h) / (a * a + h * h))
            tail = (body + k0 * (s1 * log_part + cb * lorentz)
                    + k1 * (s1 * (b - a - h * lorentz) + cb * h * log_part))
        err += e1
        val = (head + tail) / (math.pi * alpha)
        if err / (math.pi * alpha) > 1e-10 * abs(val) + 1e-300:
            raise QuadratureError(f"adaptive quadrature did not settle at x={xi:.6g}")
        out[i] = val
    return out


def _integral_values(alpha, beta, x, quad_nodes=64):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return np.empty(0)
    if _octave_split(alpha) > _MAX_SPLIT:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            return _near_one(alpha, beta, x.ravel()).reshape(x.shape)
    w, wt = _integral_rule(alpha, beta, _lo_exp(alpha, float(x.min())), quad_nodes)
    s1 = math.sin(math.pi * (1.0 - beta))
    s2 = math.sin(math.pi * (1.0 - beta + alpha))
    c = math.cos(math.pi * alpha)
    return _backend.ml_rational_sum(w, wt, x, s1, s2, c)


def _alpha_one(beta, x):
    """E_{1,b}(-x) for x > 0 in closed or one-dimensional integral form."""
    x = np.asarray(x, dtype=float)
    if beta == 1.0:
        return np.exp(-x)
    if beta == 2.0:
        return -np.expm1(-x) / x
    if beta > 1.0:
        scale = 1.0 / special.gamma(beta - 1.0)
        out = np.empty_like(x)
        for i, xi in enumerate(x.ravel()):
            val, _ = integrate.quad(
                lambda s: math.exp(-xi * s), 0.0, 1.0, weight="alg", wvar=(0.0, beta - 2.0),
                epsabs=0.0, epsrel=1e-13, limit=200,
            )
            out.flat[i] = scale * val
        return out
    # lift b through E_{1,b}(z) = 1/Gamma(b) + z E_{1,b+1}(z)
    return special.rgamma(beta) - x * _alpha_one(beta + 1.0, x)


def ml_neg_integral(params: MLParams, x, check: bool = True):
    """E_{alpha,beta}(-x) for ``x > 0`` from the real-line integral.

    The variable change ``u = r**(1/alpha)`` turns the stretched exponential
    into ``exp(-u)``; the integral is then summed on dyadic Gauss-Legendre
    panels with a Gauss-Jacobi panel at the origin. For alpha close to 1,
    where the integrand's poles approach the real axis, each point is instead
    integrated adaptively with the pole part split off in closed form. With
    ``check`` the sum is
    repeated on a half-density rule and a ``QuadratureError`` is raised if
    the two disagree beyond 1e-9 relative.
    """
    if not params.integral_ok:
        raise ParameterError(
            f"integral path needs 0 < alpha <= 1 and beta < 1 + alpha (alpha={params.alpha}, beta={params.beta})"
        )
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise ParameterError("ml_neg_integral requires x > 0")
    flat = xa.ravel()
    if params.alpha == 1.0:
        out = _alpha_one(params.beta, flat)
    else:
        out = _integral_values(params.alpha, params.beta, flat, params.quad_nodes)
        if check:
            coarse = _integral_values(params.alpha, params.beta, flat, params.quad_nodes // 2)
            err = np.abs(out - coarse)
            if np.any(err > 1e-9 * np.abs(out) + 1e-300):
                raise QuadratureError(f"quadrature self-check failed, max error {err.max():.3e}")
    out = out.reshape(xa.shape)
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------------
# dispatch


def _neg_values(alpha, beta, x, params=None):
    """E_{a,b}(-x) for x >= 0 (vectorised, no pre-checks)."""
    params = params or MLParams(alpha, beta)
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= params.series_switch
    if small.any():
        out[small], _ = _series_values(alpha, beta, -x[small])
    big = ~small
    if big.any():
        xb = x[big]
        if beta >= 1.0 + alpha:
            lower = _neg_values(alpha, beta - alpha, xb, params)
            out[big] = (special.rgamma(beta - alpha) - lower) / xb
        elif alpha == 1.0:
            out[big] = _alpha_one(beta, xb)
        else:
            out[big] = _integral_values(alpha, beta, xb, params.quad_nodes)
    return out


def ml(params: MLParams, z):
    """E_{alpha,beta}(z) for real ``z <= series_cutoff``.

    Series for ``|z|`` below the switch point, integral representation for
    more negative ``z``. When ``beta >= 1 + alpha`` the integral is reached
    through ``E_{a,b}(-x) = (1/Gamma(b-a) - E_{a,b-a}(-x)) / x``. Positive
    ``z`` beyond the cutoff raises ``UnsupportedArgumentError``.
    """
    za = np.asarray(z, dtype=float)
    if np.any(za > params.series_cutoff):
        raise UnsupportedArgumentError(f"z > series_cutoff={params.series_cutoff} is not supported")
    flat = za.ravel()
    out = np.empty_like(flat)
    pos = flat >= 0
    if pos.any():
        out[pos], nterms = _series_values(params.alpha, params.beta, flat[pos])
        if np.any(nterms >= MAX_TERMS):
            raise NonconvergenceError("series did not converge")
    neg = ~pos
    if neg.any():
        if params.alpha > 1.0 and np.any(-flat[neg] > params.series_switch):
            raise UnsupportedArgumentError("alpha > 1 is series-only; |z| beyond the switch point")
        out[neg] = _neg_values(params.alpha, params.beta, -flat[neg], params)
    out = out.reshape(za.shape)
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------------
# tabulation


class MLTable:
    """Cubic-spline table of ``x -> E_{alpha,beta}(-x)`` in ``log x``.

    Small ``x`` falls back to three Taylor terms, huge ``x`` to three terms
    of the algebraic expansion ``sum_k (-1)^(k+1) x^-k / Gamma(beta - k alpha)``.
    """

    def __init__(self, alpha, beta, per_decade=512, x_lo=1e-6, x_hi=1e14):
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.x_lo = x_lo
        self.x_hi = x_hi
        n = int(round(per_decade * math.log10(x_hi / x_lo))) + 1
        s = np.linspace(math.log(x_lo), math.log(x_hi), n)
        vals = _neg_values(self.alpha, self.beta, np.exp(s))
        spline = CubicSpline(s, vals)
        self._s0 = float(s[0])
        self._h = float(s[1] - s[0])
        self._coef = np.ascontiguousarray(spline.c)
        self._taylor = special.rgamma(self.beta + self.alpha * np.arange(3))
        self._asym = special.rgamma(self.beta - self.alpha * np.arange(1, 4))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        lo = x < self.x_lo
        hi = x > self.x_hi
        mid = ~(lo | hi)
        if lo.any():
            xl = x[lo]
            t = self._taylor
            out[lo] = t[0] - xl * t[1] + xl * xl * t[2]
        if hi.any():
            inv = 1.0 / x[hi]
            a = self._asym
            out[hi] = inv * (a[0] - inv * (a[1] - inv * a[2]))
        if mid.any():
            out[mid] = _backend.cubic_eval_uniform(self._s0, self._h, self._coef, np.log(x[mid]))
        return out


@lru_cache(maxsize=32)
def ml_table(alpha: float, beta: float) -> MLTable:
    """Shared, cached table for ``(alpha, beta)``."""
    return MLTable(alpha, beta)
