"""Closed-form Bernstein functions with zero drift and their scaling data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import BracketError, DomainError, ParameterError, QuadratureError

DEFAULT_EVAL_TOL = 1e-12
_MAX_BISECT = 60
_MAX_EXPAND = 1024


@dataclass(frozen=True)
class BernsteinSpec:
    """Base class. Subclasses implement ``_phi`` on positive arrays."""

    eval_tolerance: float = field(default=DEFAULT_EVAL_TOL, kw_only=True)

    def __call__(self, x):
        return eval(self, x)

    def _phi(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Power(BernsteinSpec):
    """phi(x) = x**s, 0 < s <= 1."""

    s: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.s <= 1.0:
            raise ParameterError(f"Power exponent must lie in (0, 1], got {self.s}")

    def _phi(self, x):
        return x ** self.s

    def inverse_closed(self, y):
        return y ** (1.0 / self.s)

    def to_dict(self):
        return {"kind": "power", "s": self.s}


@dataclass(frozen=True)
class LogPower(BernsteinSpec):
    """phi(x) = c * log(1 + x**s), 0 < s <= 1, c > 0."""

    s: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.s <= 1.0:
            raise ParameterError(f"LogPower exponent must lie in (0, 1], got {self.s}")
        if not self.c > 0:
            raise ParameterError("LogPower scale c must be positive")

    def _phi(self, x):
        return self.c * np.log1p(x ** self.s)

    def to_dict(self):
        return {"kind": "logpower", "s": self.s, "c": self.c}


@dataclass(frozen=True)
class Mixture(BernsteinSpec):
    """phi(x) = sum_i weight_i * x**s_i."""

    terms: tuple = ((1.0, Power(0.5)),)

    def __post_init__(self):
        if not self.terms:
            raise ParameterError("Mixture needs at least one term")
        for w, p in self.terms:
            if not w > 0:
                raise ParameterError("Mixture weights must be positive")
            if not isinstance(p, Power):
                raise ParameterError("Mixture components must be Power specs")

    def _phi(self, x):
        return sum(w * p._phi(x) for w, p in self.terms)

    def to_dict(self):
        return {"kind": "mixture", "terms": [{"weight": w, "s": p.s} for w, p in self.terms]}


def from_dict(d: dict) -> BernsteinSpec:
    """Build a spec from its config-file table, e.g. ``{kind="power", s=0.5}``."""
    kind = str(d.get("kind", "")).lower()
    tol = d.get("eval_tolerance", DEFAULT_EVAL_TOL)
    if kind == "power":
        return Power(s=float(d["s"]), eval_tolerance=tol)
    if kind == "logpower":
        return LogPower(s=float(d.get("s", 1.0)), c=float(d.get("c", 1.0)), eval_tolerance=tol)
    if kind == "mixture":
        terms = tuple((float(t["weight"]), Power(float(t["s"]))) for t in d["terms"])
        return Mixture(terms=terms, eval_tolerance=tol)
    raise ParameterError(f"unknown Bernstein kind {d.get('kind')!r}")


def eval(spec: BernsteinSpec, x):  # noqa: A001 - mirrors the operation name
    """phi(x) for x > 0 (scalar or array)."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise DomainError("Bernstein functions are evaluated at x > 0 only")
    out = spec._phi(xa)
    return float(out) if np.ndim(out) == 0 else out


def eval0(spec: BernsteinSpec, x):
    """phi with phi(0) = 0, for frequency lattices that contain the origin."""
    xa = np.asarray(x, dtype=float)
    out = np.zeros(xa.shape)
    pos = xa > 0
    out[pos] = spec._phi(xa[pos])
    return out


def inverse(spec: BernsteinSpec, y: float) -> float:
    """Solve phi(x) = y by bisection on a geometrically expanded bracket."""
    if not y > 0:
        raise DomainError("inverse requires y > 0")
    phi = spec._phi
    lo, hi = 1.0, 1.0
    k = 0
    while phi(lo) > y:
        lo *= 0.5
        k += 1
        if k > _MAX_EXPAND:
            raise BracketError(f"no lower bracket for y={y}")
    k = 0
    while phi(hi) < y:
        hi *= 2.0
        k += 1
        if k > _MAX_EXPAND or not math.isfinite(hi):
            raise BracketError(f"no upper bracket for y={y}")
    # bisect in log x: the bracket may span hundreds of octaves
    a, b = math.log(lo), math.log(hi)
    x = hi
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (a + b)
        x = math.exp(mid)
        v = phi(x)
        if abs(v - y) <= spec.eval_tolerance * y:
            return x
        if v < y:
            a = mid
        else:
            b = mid
    return x


@dataclass(frozen=True)
class ScalingReport:
    kappa0_est: float
    c1_est: float
    grid: tuple

    def holds(self, spec: BernsteinSpec, tol: float = 1e-12) -> bool:
        """Check c1 (M/m)^k0 <= phi(M)/phi(m) <= M/m on every grid pair."""
        for m, M in self.grid:
            r = spec._phi(M) / spec._phi(m)
            lower = self.c1_est * (M / m) ** self.kappa0_est
            if r < lower * (1 - tol) or r > (M / m) * (1 + tol):
                return False
        return True


def default_ratio_grid(n: int = 64, lo_exp: float = -20.0, hi_exp: float = 20.0):
    """Consecutive pairs of ``n`` log-spaced points plus the full-span pair."""
    pts = 2.0 ** np.linspace(lo_exp, hi_exp, n)
    pairs = list(zip(pts[:-1], pts[1:]))
    pairs.append((pts[0], pts[-1]))
    return tuple((float(a), float(b)) for a, b in pairs)


def scaling_exponents(spec: BernsteinSpec, ratio_grid=None) -> ScalingReport:
    """Empirical lower-scaling exponent kappa0 and constant c1 on a grid."""
    grid = default_ratio_grid() if ratio_grid is None else tuple(ratio_grid)
    if not grid:
        raise ParameterError("ratio grid is empty")
    m = np.array([p[0] for p in grid], dtype=float)
    M = np.array([p[1] for p in grid], dtype=float)
    if np.any(~(m > 0)) or np.any(~(M > m)):
        raise ParameterError("ratio grid pairs must satisfy 0 < m < M")
    ratio = spec._phi(M) / spec._phi(m)
    local = np.log(ratio) / np.log(M / m)
    kappa = float(np.clip(local.min(), np.finfo(float).tiny, 1.0))
    c1 = float(np.min(ratio / (M / m) ** kappa))
    return ScalingReport(kappa0_est=kappa, c1_est=c1, grid=grid)


def tail_integral_check(spec: BernsteinSpec, rho: float, report: ScalingReport | None = None):
    """Integral of t^-1 phi(t^-2) over (1/rho, inf) against C phi(rho^2).

    Returns ``(lhs, rhs_bound)`` with ``rhs_bound = phi(rho^2) / (2 k0 c1)``,
    the constant that the lower scaling condition delivers.
    """
    if not rho > 0:
        raise DomainError("rho must be positive")
    report = report or scaling_exponents(spec)
    if not report.kappa0_est > 0:
        raise ParameterError("kappa0 estimate must be positive")
    ref = float(spec._phi(rho * rho))
    # t = exp(v): integrand becomes phi(exp(-2 v)) on (-log rho, inf)
    a = -math.log(rho)
    b = a + 1.0
    while spec._phi(math.exp(-2.0 * b)) >= 1e-14 * ref:
        b = a + 2.0 * (b - a)
        if b - a > 1e6:
            raise QuadratureError("tail truncation point not found")
    val, err, info = integrate.quad(
        lambda v: spec._phi(math.exp(-2.0 * v)), a, b, epsabs=0.0, epsrel=1e-12, limit=400, full_output=True
    )[:3]
    if err > 1e-8 * abs(val) + 1e-300:
        raise QuadratureError(f"tail integral did not converge (err={err:.2e})")
    rhs = ref / (2.0 * report.kappa0_est * report.c1_est)
    return float(val), float(rhs)
