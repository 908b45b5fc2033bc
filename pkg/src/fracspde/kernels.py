"""Fundamental solutions on a periodic spectral grid.

The kernels are built from their Fourier symbols,

    F S_{a,s}(t, xi)   = t^(a-s) E_{a,1-s+a}(-t^a phi(|xi|^2))
    F S^z_{a,s}(t, xi) = -phi(|xi|^2)^z F S_{a,s}(t, xi),

sampled on the lattice of a torus ``[-L, L)^d`` and inverted with FFTs.
Fields live on the node set ``x_j = -L + j dx``; kernels are stored centred
(origin at index ``n//2`` on each axis) and their symbols in ``rfftn``
layout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import special

from . import bernstein
from .bernstein import BernsteinSpec
from .errors import AliasingWarning, GridMismatchError, ParameterError
from .mittag_leffler import _neg_values, ml_table

MAX_POINTS = 2 ** 24
DEFAULT_N = {1: 1024, 2: 256, 3: 64}


# ----------------------------------------------------------------------------
# exponents


@dataclass(frozen=True)
class FractionalExponents:
    """Time/noise exponents and the derived quantities used by the estimates."""

    alpha: float
    sigma1: float
    sigma2: float
    p: float
    kappa_small: float = 1e-3

    def __post_init__(self):
        a, s1, s2, p = self.alpha, self.sigma1, self.sigma2, self.p
        if not 0 < a < 1:
            raise ParameterError(f"alpha must lie in (0, 1), got {a}")
        if not p >= 1:
            raise ParameterError(f"p must be >= 1, got {p}")
        if not s1 < a + 0.5:
            raise ParameterError(f"sigma1 < alpha + 1/2 violated: {s1} >= {a + 0.5}")
        if not s2 < a + 1.0 / p:
            raise ParameterError(f"sigma2 < alpha + 1/p violated: {s2} >= {a + 1.0 / p}")
        if not self.kappa_small > 0:
            raise ParameterError("kappa_small must be positive")
        for name, lo, hi, lo_open, val in (
            ("delta0", 0.0, 2.0, False, self.delta0),
            ("delta1", 0.0, 2.0, False, self.delta1),
            ("delta0_tilde", 0.0, 2.0, True, self.delta0_tilde),
            ("delta1_tilde", 0.0, 2.0, True, self.delta1_tilde),
        ):
            ok_lo = val > lo if lo_open else val >= lo
            ok_hi = val <= hi if lo_open else val < hi
            if not (ok_lo and ok_hi):
                raise ParameterError(f"{name}={val:.6g} outside its admissible range")

    @property
    def delta0(self) -> float:
        s1, a = self.sigma1, self.alpha
        if s1 > 0.5:
            return (2 * s1 - 1) / a
        return self.kappa_small if s1 == 0.5 else 0.0

    @property
    def delta1(self) -> float:
        s2, a, p = self.sigma2, self.alpha, self.p
        if s2 > 1.0 / p:
            return (2 * s2 - 2.0 / p) / a
        return self.kappa_small if s2 == 1.0 / p else 0.0

    @property
    def delta0_tilde(self) -> float:
        return 2.0 - (2 * self.sigma1 - 1) / self.alpha

    @property
    def delta1_tilde(self) -> float:
        return 2.0 - (2 * self.sigma2 - 2.0 / self.p) / self.alpha

    @property
    def theta(self) -> float:
        a, s1, s2, p = self.alpha, self.sigma1, self.sigma2, self.p
        return min(a, 1.0, 2 * (a - s1) + 1, p * (a - s2) + 2)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "sigma1": self.sigma1, "sigma2": self.sigma2,
                "p": self.p, "kappa_small": self.kappa_small}


# ----------------------------------------------------------------------------
# grid and fields


@dataclass(frozen=True)
class SpectralGrid:
    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ParameterError("d must be 1, 2 or 3")
        if self.n < 16 or self.n & (self.n - 1):
            raise ParameterError(f"n must be a power of two >= 16, got {self.n}")
        if not self.L > 0:
            raise ParameterError("half width L must be positive")
        if self.n ** self.d > MAX_POINTS:
            raise ParameterError(f"n^d = {self.n ** self.d} exceeds the 2^24 point cap")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def cell(self) -> float:
        """Volume element dx^d."""
        return self.dx ** self.d

    @property
    def volume(self) -> float:
        return (2.0 * self.L) ** self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n)

    def coords(self):
        """Coordinate arrays, one per axis, broadcastable to ``shape``."""
        return np.meshgrid(*([self.axis] * self.d), indexing="ij", sparse=True)

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords()))

    @cached_property
    def k_sq(self) -> np.ndarray:
        """Integer |k|^2 on the ``rfftn`` half lattice."""
        full = np.fft.fftfreq(self.n, 1.0 / self.n)
        half = np.arange(self.n // 2 + 1, dtype=float)
        axes = [full] * (self.d - 1) + [half]
        ks = np.meshgrid(*axes, indexing="ij", sparse=True)
        out = sum(k * k for k in ks)
        out = np.broadcast_to(out, self.half_shape).astype(np.int64)
        out.setflags(write=False)
        return out

    @property
    def half_shape(self) -> tuple:
        return (self.n,) * (self.d - 1) + (self.n // 2 + 1,)

    @property
    def xi_unit(self) -> float:
        """Lattice spacing pi / L in frequency."""
        return math.pi / self.L

    @cached_property
    def xi_sq(self) -> np.ndarray:
        out = self.k_sq * self.xi_unit ** 2
        out.setflags(write=False)
        return out

    @cached_property
    def _unique_ksq(self):
        return np.unique(self.k_sq, return_inverse=True)

    def lattice_map(self, func):
        """Evaluate ``func(xi_sq_values)`` once per distinct |xi|^2 and scatter."""
        uniq, inv = self._unique_ksq
        vals = func(uniq * self.xi_unit ** 2)
        return np.asarray(vals)[inv].reshape(self.half_shape)

    @property
    def hermitian_weight(self) -> np.ndarray:
        """Multiplicity of each half-lattice entry in the full lattice."""
        w = np.full(self.half_shape, 2.0)
        w[..., 0] = 1.0
        if self.n % 2 == 0:
            w[..., self.n // 2] = 1.0
        return w

    def fft(self, values):
        return np.fft.rfftn(values, axes=tuple(range(-self.d, 0)))

    def ifft(self, coeffs):
        return np.fft.irfftn(coeffs, s=self.shape, axes=tuple(range(-self.d, 0)))

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n, "L": self.L}


@dataclass(frozen=True)
class Field:
    grid: SpectralGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.n ** self.grid.d:
            raise GridMismatchError("field length does not match the grid")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ParameterError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __add__(self, other):
        _same_grid(self.grid, other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self.grid, other.grid)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c):
        return Field(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def lp_norm(self, p: float) -> float:
        return lp_values(self.values, self.grid, p)


def _same_grid(a: SpectralGrid, b: SpectralGrid):
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


def lp_values(values, grid: SpectralGrid, p: float) -> float:
    v = np.abs(np.asarray(values))
    if p == np.inf:
        return float(v.max())
    return float((np.sum(v ** p) * grid.cell) ** (1.0 / p))


def plane_wave(grid: SpectralGrid, k) -> Field:
    """Real mode cos(xi_k . (x + L)) for an integer lattice vector ``k``."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    phase = sum(ki * grid.xi_unit * (c + grid.L) for ki, c in zip(k, grid.coords()))
    return Field(grid, np.broadcast_to(np.cos(phase), grid.shape).copy())


# ----------------------------------------------------------------------------
# symbols


def _phi_lattice(phi: BernsteinSpec, xi_sq):
    return bernstein.eval0(phi, xi_sq)


def symbol_S(alpha, sigma, t, xi_sq, phi: BernsteinSpec):
    """t^(alpha-sigma) E_{alpha,1-sigma+alpha}(-t^alpha phi(|xi|^2)); phi(0) = 0."""
    if not t > 0:
        raise ParameterError("t must be positive")
    xs = np.asarray(xi_sq, dtype=float)
    arg = t ** alpha * _phi_lattice(phi, xs.ravel())
    vals = t ** (alpha - sigma) * _neg_values(alpha, 1.0 - sigma + alpha, arg)
    vals = vals.reshape(xs.shape)
    return float(vals) if vals.ndim == 0 else vals


def symbol_S_zeta(alpha, sigma, zeta, t, xi_sq, phi: BernsteinSpec):
    """-phi(|xi|^2)^zeta times ``symbol_S``."""
    if not 0 < zeta <= 1:
        raise ParameterError("zeta must lie in (0, 1]")
    xs = np.asarray(xi_sq, dtype=float)
    ph = _phi_lattice(phi, xs)
    vals = -(ph ** zeta) * symbol_S(alpha, sigma, t, xs, phi)
    return float(vals) if np.ndim(vals) == 0 else vals


def slab_symbol(alpha, sigma, u_lo, u_hi, xi_sq, phi: BernsteinSpec):
    """Exact time integral of ``symbol_S`` over lags ``[u_lo, u_hi]``.

    Uses d/du [u^(1+a-s) E_{a,2-s+a}(-u^a lam)] = u^(a-s) E_{a,1-s+a}(-u^a lam).
    """
    xs = np.asarray(xi_sq, dtype=float)
    ph = _phi_lattice(phi, xs.ravel())
    beta = 2.0 - sigma + alpha
    expo = 1.0 + alpha - sigma
    if expo <= 0:
        raise ParameterError("slab integral needs sigma < 1 + alpha")

    def prim(u):
        if u == 0:
            return np.zeros_like(ph)
        return u ** expo * _neg_values(alpha, beta, u ** alpha * ph)

    return (prim(u_hi) - prim(u_lo)).reshape(xs.shape)


def lag_symbols(alpha, sigma, lags, phi_vals, zeta=None):
    """Symbols at many lags at once through the cached Mittag-Leffler table.

    ``lags`` has any shape, ``phi_vals`` is ``phi(|xi|^2)`` on the lattice;
    the result has shape ``lags.shape + phi_vals.shape``.
    """
    lags = np.asarray(lags, dtype=float)
    table = ml_table(float(alpha), float(1.0 - sigma + alpha))
    la = lags.reshape(lags.shape + (1,) * phi_vals.ndim)
    vals = la ** (alpha - sigma) * table(la ** alpha * phi_vals)
    if zeta is not None:
        vals = -(phi_vals ** zeta) * vals
    return vals


# ----------------------------------------------------------------------------
# kernel snapshots


@dataclass(frozen=True)
class KernelSnapshot:
    grid: SpectralGrid
    t: float
    alpha: float
    sigma: float
    zeta: float | None
    values: np.ndarray = field(repr=False)
    symbol: np.ndarray = field(repr=False)

    def roundtrip_residual(self) -> float:
        """max |DFT(values) dx^d - symbol| relative to max |symbol|."""
        back = self.grid.fft(np.fft.ifftshift(self.values)) * self.grid.cell
        scale = max(np.abs(self.symbol).max(), 1e-300)
        return float(np.abs(back - self.symbol).max() / scale)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell)


def kernel_grid(alpha, sigma, t, grid: SpectralGrid, phi: BernsteinSpec, zeta=None) -> KernelSnapshot:
    """Sample S_{alpha,sigma}(t, .) (or S^zeta) on ``grid`` from its symbol.

    Emits ``AliasingWarning`` when the symbol at the Nyquist frequency is
    above 1e-8 of its peak.
    """
    if not t > 0:
        raise ParameterError("t must be positive")
    if zeta is None:
        sym = grid.lattice_map(lambda xs: symbol_S(alpha, sigma, t, xs, phi))
    else:
        sym = grid.lattice_map(lambda xs: symbol_S_zeta(alpha, sigma, zeta, t, xs, phi))
    peak = np.abs(sym).max()
    nyq = abs(sym[(0,) * (grid.d - 1) + (grid.n // 2,)])
    if nyq > 1e-8 * peak:
        warnings.warn(
            f"kernel symbol at Nyquist is {nyq / max(peak, 1e-300):.1e} of its peak; grid too coarse",
            AliasingWarning,
            stacklevel=2,
        )
    vals = np.fft.fftshift(grid.ifft(sym)) / grid.cell
    vals.setflags(write=False)
    sym.setflags(write=False)
    return KernelSnapshot(grid, float(t), float(alpha), float(sigma), zeta, vals, sym)


def l1_norm(snapshot: KernelSnapshot) -> float:
    return lp_values(snapshot.values, snapshot.grid, 1.0)


def lp_norm(snapshot: KernelSnapshot, p: float) -> float:
    return lp_values(snapshot.values, snapshot.grid, p)


def convolve(snapshot: KernelSnapshot, f: Field) -> Field:
    """Circular convolution S(t) * f, computed as a symbol multiplication."""
    _same_grid(snapshot.grid, f.grid)
    g = snapshot.grid
    return Field(g, g.ifft(snapshot.symbol * g.fft(f.values)))


def circular_convolve_direct(kernel_values, f_values, cell):
    """Brute-force circular convolution of a centred kernel with a field (1-D)."""
    k = np.asarray(kernel_values, dtype=float)
    f = np.asarray(f_values, dtype=float)
    n = k.shape[0]
    c = n // 2
    out = np.zeros(n)
    for j in range(n):
        for m in range(n):
            out[j] += k[(j - m + c) % n] * f[m]
    return out * cell


def bessel_potential(f: Field, gamma: float, phi: BernsteinSpec) -> Field:
    """(I - phi(Delta))^(gamma/2) f, i.e. multiplier (1 + phi(|xi|^2))^(gamma/2)."""
    g = f.grid
    mult = (1.0 + _phi_lattice(phi, g.xi_sq)) ** (gamma / 2.0)
    return Field(g, g.ifft(mult * g.fft(f.values)))


def sobolev_norm(f: Field, gamma: float, p: float, phi: BernsteinSpec) -> float:
    """|| (I - phi(Delta))^(gamma/2) f ||_{L_p}."""
    return bessel_potential(f, gamma, phi).lp_norm(p)


# ----------------------------------------------------------------------------
# bounds and grid sizing


def length_scale(alpha, t, phi: BernsteinSpec) -> float:
    """(phi^{-1}(t^-alpha))^(-1/2), the spatial scale of S(t, .)."""
    return bernstein.inverse(phi, t ** (-alpha)) ** -0.5


def pointwise_bound(alpha, sigma, t, r, phi: BernsteinSpec, d: int):
    """t^(2 alpha - sigma) phi(r^-2) / r^d."""
    r = np.asarray(r, dtype=float)
    return t ** (2 * alpha - sigma) * bernstein.eval(phi, r ** -2.0) / r ** d


def auto_half_width(alpha, sigma, t, phi: BernsteinSpec, d: int, n: int, resolution: float = 32.0) -> float:
    """Torus half width for S(t, .): doubled until the tail bound at L/2 drops
    below 1e-6 of its value at the kernel scale, but never so wide that the
    kernel scale is covered by fewer than ``resolution`` cells.
    """
    ell = length_scale(alpha, t, phi)
    L = 4.0 * ell
    L_max = n * ell / (2.0 * resolution)
    ref = float(pointwise_bound(alpha, sigma, t, ell, phi, d))
    while L < L_max and pointwise_bound(alpha, sigma, t, L / 2.0, phi, d) >= 1e-6 * ref:
        L *= 2.0
    return float(min(L, max(L_max, 4.0 * ell)))


def mass_identity(alpha, sigma, t) -> float:
    """Integral of S_{alpha,sigma}(t, .) over space: t^(alpha-sigma)/Gamma(1+alpha-sigma)."""
    return t ** (alpha - sigma) * special.rgamma(1.0 + alpha - sigma)
