"""Littlewood-Paley bands, the square function and the band kernel estimate.

The bank is built from a radial cutoff ``chi`` equal to 1 on ``r <= 1`` and
0 on ``r >= 1.4``, with a degree-7 smoothstep in ``log r`` in between.
The band profile ``psi(eta) = chi(eta) - chi(2 eta)`` is supported in
``(1/2, 1.4)`` and equals 1 on ``[0.7, 1]``; ``psi(2^-j xi)`` telescopes, so
the low cap ``psi_0 = chi`` completes an exact partition of unity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend, bernstein
from .bernstein import BernsteinSpec
from .errors import ParameterError
from .kernels import Field, FractionalExponents, SpectralGrid, lag_symbols, symbol_S

CHI_EDGE = 1.4
_LOG_EDGE = math.log(CHI_EDGE)


def smoothstep7(u):
    """C^3 ramp from 0 to 1 on [0, 1], clamped outside."""
    u = np.clip(u, 0.0, 1.0)
    return u ** 4 * (35.0 + u * (-84.0 + u * (70.0 - 20.0 * u)))


def chi(r):
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        u = np.log(np.where(r > 0, r, 1.0)) / _LOG_EDGE
    out = 1.0 - smoothstep7(u)
    return np.where(r <= 1.0, 1.0, np.where(r >= CHI_EDGE, 0.0, out))


def psi(eta):
    """Band profile, exactly zero outside (1/2, 1.4)."""
    eta = np.asarray(eta, dtype=float)
    return chi(eta) - chi(2.0 * eta)


@dataclass(frozen=True)
class DyadicBank:
    """Bands ``j_min..j_max`` of a grid plus the low-frequency cap (j = 0)."""

    grid: SpectralGrid
    j_min: int = 1
    j_max: int | None = None

    def __post_init__(self):
        top = math.sqrt(float(self.grid.xi_sq.max()))
        j_top = max(self.j_min, math.ceil(math.log2(top)))
        if self.j_max is None:
            object.__setattr__(self, "j_max", j_top)
        if self.j_min < 1 or self.j_max < self.j_min:
            raise ParameterError("band range must satisfy 1 <= j_min <= j_max")

    @property
    def j_range(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def profile(self, j: int) -> np.ndarray:
        """Multiplier of band ``j`` (0 = low cap) on the rfft half lattice."""
        mod = np.sqrt(self.grid.xi_sq)
        if j == 0:
            return chi(mod * 2.0 ** (1 - self.j_min))
        if j not in self.j_range:
            raise ParameterError(f"band {j} outside [{self.j_min}, {self.j_max}]")
        return psi(mod * 2.0 ** -j)

    def high_cap(self) -> np.ndarray:
        """1 - chi(2^-j_max |xi|): frequencies beyond the top band."""
        return 1.0 - chi(np.sqrt(self.grid.xi_sq) * 2.0 ** -self.j_max)


def band_project(bank: DyadicBank, j: int, f: Field) -> Field:
    """Delta_j f, with j = 0 the low-frequency cap."""
    g = bank.grid
    if f.grid != g:
        raise ParameterError("field and bank live on different grids")
    return Field(g, g.ifft(bank.profile(j) * g.fft(f.values)))


# ----------------------------------------------------------------------------
# frequency-localised kernel estimate


def band_window_check(exponents: FractionalExponents, eps: float, delta: float):
    a, s2, p = exponents.alpha, exponents.sigma2, exponents.p
    problems = []
    if not eps > 0:
        problems.append(f"eps={eps} must be positive")
    if not 1.0 / p < s2 - a * eps / 2:
        problems.append(f"1/p < sigma2 - alpha*eps/2 fails: {1 / p:.6g} >= {s2 - a * eps / 2:.6g}")
    if not s2 - a + delta < 1.0 / p:
        problems.append(f"sigma2 - alpha + delta < 1/p fails: {s2 - a + delta:.6g} >= {1 / p:.6g}")
    if not delta < 1.0 / p:
        problems.append(f"delta < 1/p fails: {delta:.6g} >= {1 / p:.6g}")
    if not delta > 0:
        problems.append(f"delta={delta} must be positive")
    if problems:
        raise ParameterError("; ".join(problems))


def default_delta(exponents: FractionalExponents) -> float:
    """Centre of the admissible delta window."""
    return (1.0 / exponents.p - max(0.0, exponents.sigma2 - exponents.alpha)) / 2.0


def band_bound(j, t, eps, delta, exponents: FractionalExponents, phi: BernsteinSpec):
    """min(t^(-1/p - a eps/2), phi(2^2j)^(delta/a + eps/2) t^(-1/p + delta)), no constant."""
    a, p = exponents.alpha, exponents.p
    t = np.asarray(t, dtype=float)
    first = t ** (-1.0 / p - a * eps / 2)
    second = bernstein.eval(phi, 4.0 ** j) ** (delta / a + eps / 2) * t ** (-1.0 / p + delta)
    return np.minimum(first, second)


def _eta_grid(d: int) -> SpectralGrid:
    # psi lives in |eta| < 1.4; the band kernels decay like |x|^-4 or faster
    return {1: SpectralGrid(1, 1024, 128.0), 2: SpectralGrid(2, 256, 40.0), 3: SpectralGrid(3, 64, 12.0)}[d]


def band_kernel_l1_raw(j, t, eps, exponents: FractionalExponents, phi: BernsteinSpec, d: int = 1,
                       eta_grid: SpectralGrid | None = None) -> float:
    """|| Delta_j phi(-Delta)^((d1t + eps)/2) S_{a,sigma2}(t) ||_{L1}.

    The L1 norm is dilation invariant, so the band is evaluated on the
    rescaled frequency ``eta = 2^-j xi`` where its profile is ``psi(eta)``.
    """
    g = eta_grid or _eta_grid(d)
    a = (exponents.delta1_tilde + eps) / 2.0
    scale = 4.0 ** j

    def sym(eta_sq):
        out = np.zeros_like(eta_sq)
        live = (eta_sq > 0.25) & (eta_sq < CHI_EDGE ** 2)
        es = eta_sq[live]
        xs = scale * es
        out[live] = (
            psi(np.sqrt(es))
            * bernstein.eval(phi, xs) ** a
            * symbol_S(exponents.alpha, exponents.sigma2, t, xs, phi)
        )
        return out

    symbol = g.lattice_map(sym)
    values = g.ifft(symbol) / g.cell
    return float(np.abs(values).sum() * g.cell)


@dataclass(frozen=True)
class BandCalibration:
    """Constant C with measured <= C * min-form, fit once and then frozen."""

    constant: float
    eps: float
    delta: float
    j: int
    t_grid: tuple = field(repr=False)


def calibrate_band_constant(bank: DyadicBank, eps, delta, exponents, phi, t_grid) -> BandCalibration:
    """Fit C at the coarsest band over ``t_grid``."""
    band_window_check(exponents, eps, delta)
    j = bank.j_min
    ratios = [
        band_kernel_l1_raw(j, t, eps, exponents, phi, bank.grid.d) / float(band_bound(j, t, eps, delta, exponents, phi))
        for t in t_grid
    ]
    return BandCalibration(float(max(ratios)), eps, delta, j, tuple(float(t) for t in t_grid))


def band_kernel_l1(bank: DyadicBank, j, t, eps, delta, exponents: FractionalExponents, phi: BernsteinSpec,
                   calibration: BandCalibration | None = None):
    """Return ``(measured, bound)`` for band ``j`` at time ``t``.

    ``bound`` is the min-form times the frozen calibration constant (1 when
    no calibration is supplied).
    """
    band_window_check(exponents, eps, delta)
    if j not in bank.j_range:
        raise ParameterError(f"band {j} outside [{bank.j_min}, {bank.j_max}]")
    measured = band_kernel_l1_raw(j, t, eps, exponents, phi, bank.grid.d)
    c = 1.0 if calibration is None else calibration.constant
    return measured, c * float(band_bound(j, t, eps, delta, exponents, phi))


@dataclass(frozen=True)
class SegmentedFit:
    breakpoint: float
    slope_left: float
    slope_right: float
    sse: float


def segmented_regression(x, y, min_points: int = 3) -> SegmentedFit:
    """Continuous two-piece linear fit; the breakpoint is searched over ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 * min_points:
        raise ParameterError("too few samples for a two-segment fit")
    best = None
    for xb in np.linspace(x[min_points - 1], x[-min_points], 8 * x.size):
        A = np.column_stack([np.ones_like(x), np.minimum(x - xb, 0.0), np.maximum(x - xb, 0.0)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        sse = float(np.sum((A @ coef - y) ** 2))
        if best is None or sse < best.sse:
            best = SegmentedFit(float(xb), float(coef[1]), float(coef[2]), sse)
    return best


# ----------------------------------------------------------------------------
# square function


@dataclass(frozen=True)
class SquareFnConfig:
    exponents: FractionalExponents
    channels: int = 8
    T: float = 1.0
    n_t: int = 64
    tail_factor: float = 3.0

    def __post_init__(self):
        if self.channels < 1:
            raise ParameterError("channel count K must be >= 1")
        if self.n_t < 1:
            raise ParameterError("empty time grid")
        if not self.T > 0:
            raise ParameterError("T must be positive")
        if not 0.0 < self.zeta <= 1.0:
            raise ParameterError("delta0_tilde / 2 must lie in (0, 1]")

    @property
    def zeta(self) -> float:
        return self.exponents.delta0_tilde / 2.0

    @property
    def ds(self) -> float:
        return self.T / self.n_t


def _check_h(config: SquareFnConfig, h, grid: SpectralGrid):
    h = np.asarray(h, dtype=float)
    want = (config.n_t, config.channels) + grid.shape
    if h.shape != want:
        raise ParameterError(f"h must have shape {want}, got {h.shape}")
    if not np.all(np.isfinite(h)):
        raise ParameterError("h must be finite")
    return h


def _lag_table(config: SquareFnConfig, grid: SpectralGrid, phi: BernsteinSpec, n_lags: int):
    e = config.exponents
    phi_vals = bernstein.eval0(phi, grid.xi_sq.ravel())
    lags = config.ds * np.arange(1, n_lags + 1)
    q = np.zeros((n_lags + 1, phi_vals.size))
    q[1:] = lag_symbols(e.alpha, e.sigma1, lags, phi_vals, zeta=config.zeta)
    return q


def _stochastic_modes(config, h, grid, phi, n_out):
    """Fourier coefficients of sum_m S(t_i - s_m) * h_m for i = 0..n_out, per channel."""
    q = _lag_table(config, grid, phi, n_out)
    hh = grid.fft(h).reshape(config.n_t, config.channels, -1)
    out = []
    for k in range(config.channels):
        g = np.zeros((n_out, hh.shape[-1]), dtype=complex)
        g[: config.n_t] = hh[:, k]
        out.append(_backend.causal_convolve(q, g))
    return np.stack(out, axis=1)  # (n_out + 1, K, F)


def _square_fn_all_times(config, h, grid, phi, n_out):
    modes = _stochastic_modes(config, h, grid, phi, n_out)
    half = grid.half_shape
    sq = np.zeros((n_out + 1,) + grid.shape)
    for k in range(config.channels):
        v = grid.ifft(modes[:, k].reshape((n_out + 1,) + half))
        sq += v * v
    return np.sqrt(config.ds * sq), modes


def square_function(config: SquareFnConfig, h, grid: SpectralGrid, phi: BernsteinSpec) -> Field:
    """S h at the final time T from K-channel slices h[m] at s_m = m ds."""
    h = _check_h(config, h, grid)
    sq, _ = _square_fn_all_times(config, h, grid, phi, config.n_t)
    return Field(grid, sq[config.n_t])


def _n_out(config):
    return int(round(config.n_t * (1.0 + config.tail_factor)))


def _h_norm(config, h, grid, p):
    mag = np.sqrt(np.sum(h * h, axis=1))
    return float((np.sum(mag ** p) * grid.cell * config.ds) ** (1.0 / p))


def strong_pp_ratio(config: SquareFnConfig, h, p: float, grid: SpectralGrid, phi: BernsteinSpec) -> float:
    """||S h||_{L_p(time x space)} / ||h||_{L_p(time x space; H)}.

    S h is evaluated at t_i = i ds for i up to ``(1 + tail_factor) n_t``,
    covering the decay after the support of h ends.
    """
    if p < 2:
        raise ParameterError("strong (p, p) ratio requires p >= 2")
    h = _check_h(config, h, grid)
    den = _h_norm(config, h, grid, p)
    if den == 0:
        raise ZeroDivisionError("h is identically zero")
    sq, _ = _square_fn_all_times(config, h, grid, phi, _n_out(config))
    num = float((np.sum(sq ** p) * grid.cell * config.ds) ** (1.0 / p))
    return num / den


def strong_22_ratio_fourier(config: SquareFnConfig, h, grid: SpectralGrid, phi: BernsteinSpec) -> float:
    """p = 2 ratio computed entirely on the Fourier side (Plancherel)."""
    h = _check_h(config, h, grid)
    den = _h_norm(config, h, grid, 2.0)
    if den == 0:
        raise ZeroDivisionError("h is identically zero")
    modes = _stochastic_modes(config, h, grid, phi, _n_out(config))
    w = grid.hermitian_weight.ravel()
    energy = np.sum(w * np.abs(modes) ** 2) * grid.cell / grid.n ** grid.d
    num = math.sqrt(config.ds * config.ds * energy)
    return num / den
