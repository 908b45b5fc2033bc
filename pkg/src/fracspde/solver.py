"""Truncated Picard construction of local mild solutions.

On the grid ``t_i = i dt`` the Picard map is

    Tw(t_i) = S(t_i) * w0
            + sum_{j<i} [int over slab j of S_{a,1}] * g(t_j, L_K w(t_j))
            + sum_atoms S_{a,s2}(t_i - s) * f~(s, x, xi, L_K w(t_j)(x))
            - sum_{j<i} [int over slab j of S_{a,s2}] * int f~(t_j, ., xi, L_K w(t_j)) mu(dxi)
            + sum_{j<i} S_{a,s1}(t_i - t_j) * h(t_j, L_K w(t_j)) dW_j        (optional)

with ``L_K`` the radial truncation and ``t_j`` the left end of the slab
holding an atom. Slab integrals of the kernels are exact in time. Every
term at ``t_i`` only reads ``w`` before ``t_i``, so the iteration is exact
after at most ``n_t + 1`` sweeps; it usually stops much earlier on
``picard_tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _backend, bernstein
from .bernstein import BernsteinSpec
from .errors import ConfigError, GateViolation, NonconvergenceError, ParameterError
from .kernels import Field, FractionalExponents, SpectralGrid, lag_symbols, slab_symbol, symbol_S
from .noise import LevyMeasureSpec, derive_seed, sample_cloud, sample_wiener_path

GATE_MARGIN = 1e-12


# ----------------------------------------------------------------------------
# configuration


def solvability_gate(exponents: FractionalExponents, phi: BernsteinSpec, d: int, kappa0: float | None = None):
    """Return ``(lhs, rhs, message)`` for (a - s2) p + 1 > a d (p - 1) / (2 k0)."""
    a, s2, p = exponents.alpha, exponents.sigma2, exponents.p
    k0 = bernstein.scaling_exponents(phi).kappa0_est if kappa0 is None else kappa0
    lhs = (a - s2) * p + 1.0
    rhs = a * d * (p - 1.0) / (2.0 * k0)
    msg = (
        f"(alpha - sigma2) p + 1 > alpha d (p - 1) / (2 kappa0): "
        f"({a:g} - {s2:g})*{p:g} + 1 = {lhs:.12g}  vs  {a:g}*{d}*({p:g} - 1)/(2*{k0:.12g}) = {rhs:.12g}"
    )
    return lhs, rhs, msg


@dataclass(frozen=True)
class SolverConfig:
    exponents: FractionalExponents
    phi: BernsteinSpec
    grid: SpectralGrid
    T: float = 1.0
    n_t: int = 32
    K_trunc: float = 10.0
    vartheta: float = 0.0
    picard_tol: float = 1e-10
    picard_max_iter: int | None = None
    n_paths: int = 16
    seed: int = 0
    include_wiener: bool = False
    wiener_modes: int = 8
    noise: LevyMeasureSpec | None = None
    kappa0: float | None = None

    def __post_init__(self):
        e = self.exponents
        if not 1.0 <= e.p <= 2.0:
            raise ConfigError(f"p must lie in [1, 2], got {e.p}", "p")
        if not self.K_trunc > 0:
            raise ConfigError("K_trunc must be positive", "K_trunc")
        if not self.T > 0:
            raise ConfigError("T must be positive", "T")
        if self.n_t < 1:
            raise ConfigError("n_t must be >= 1", "n_t")
        if self.vartheta < 0:
            raise ConfigError("vartheta must be >= 0", "vartheta")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1", "n_paths")
        if self.include_wiener and e.p != 2.0:
            raise ConfigError("the Wiener term is only available for p = 2", "include_wiener")
        lhs, rhs, msg = solvability_gate(e, self.phi, self.grid.d, self.kappa0)
        if not lhs - rhs > GATE_MARGIN:
            raise GateViolation("solvability gate violated: " + msg, "sigma2")

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_t + 1)

    @property
    def max_iter(self) -> int:
        return self.picard_max_iter if self.picard_max_iter is not None else self.n_t + 2

    @property
    def box(self) -> tuple:
        return tuple((-self.grid.L, self.grid.L) for _ in range(self.grid.d))


# ----------------------------------------------------------------------------
# nonlinearities


def _zero(*args):
    return 0.0 * args[-1]


@dataclass(frozen=True)
class NonlinearitySpec:
    """Pointwise maps ``g(t, x, z)``, ``f_tilde(t, x, xi, z)``, ``h(t, x, z)``.

    ``x`` arrives with a leading coordinate axis (shape ``(d, ...)``), ``xi``
    with a trailing mark axis. Lipschitz constants are in ``z``; for
    ``f_tilde`` the constant is per unit of ``max(1, |xi|)``. Growth data
    ``theta1``/``theta2`` bound ``|g| <= theta1 + lip_g |z|`` and
    ``|f_tilde| <= max(1, |xi|) (theta2 + lip_f |z|)``.
    """

    g: Callable = _zero
    f_tilde: Callable = _zero
    h: Callable = _zero
    lip_g: float = 0.0
    lip_f: float = 0.0
    lip_h: float = 0.0
    theta1: float = 0.0
    theta2: float = 0.0
    name: str = "custom"
    validate: bool = True

    def __post_init__(self):
        if self.validate:
            validate_nonlinearity(self)

    @property
    def has_jump(self) -> bool:
        return self.f_tilde is not _zero

    @property
    def has_wiener(self) -> bool:
        return self.h is not _zero


def validate_nonlinearity(nl: NonlinearitySpec, n: int = 2000, seed: int = 12345):
    """Check declared Lipschitz and growth data on random samples; raise
    ``ConfigError`` naming the violated constant."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, 10, n)
    x = rng.uniform(-10, 10, (1, n))
    z1 = rng.standard_normal(n) * 10 ** rng.uniform(-3, 3, n)
    z2 = z1 + rng.standard_normal(n) * 10 ** rng.uniform(-6, 1, n)
    xi = rng.standard_normal((n, 1)) * 3
    dz = np.abs(z1 - z2)
    w = np.maximum(1.0, np.abs(xi[:, 0]))
    tol = 1e-9

    def check(name, val, bound):
        val = np.asarray(val, dtype=float) * np.ones(n)
        if np.any(~np.isfinite(val)) or np.any(val > bound * (1 + tol) + 1e-12):
            raise ConfigError(f"declared {name} is violated by sampled finite differences", name)

    check("lip_g", np.abs(nl.g(t, x, z1) - nl.g(t, x, z2)), nl.lip_g * dz)
    check("lip_h", np.abs(nl.h(t, x, z1) - nl.h(t, x, z2)), nl.lip_h * dz)
    check("lip_f", np.abs(nl.f_tilde(t, x, xi, z1) - nl.f_tilde(t, x, xi, z2)), nl.lip_f * dz * w)
    check("theta1", np.abs(nl.g(t, x, z1)), nl.theta1 + nl.lip_g * np.abs(z1))
    check("theta2", np.abs(nl.f_tilde(t, x, xi, z1)), w * (nl.theta2 + nl.lip_f * np.abs(z1)))


def zero_nonlinearity() -> NonlinearitySpec:
    return NonlinearitySpec(name="zero")


def affine_nonlinearity(a: float = 0.0, b: float = 0.0) -> NonlinearitySpec:
    """g(z) = a + b z, no noise coefficient."""
    return NonlinearitySpec(
        g=lambda t, x, z: a + b * z, lip_g=abs(b), theta1=abs(a), name=f"affine({a:g},{b:g})"
    )


def bounded_lipschitz_nonlinearity(c_g: float = 1.0, c_f: float = 0.5, c_h: float = 0.0) -> NonlinearitySpec:
    """g = c_g sin z, f_tilde = c_f xi_1 (1 + tanh z) / 2, h = c_h cos z."""
    return NonlinearitySpec(
        g=lambda t, x, z: c_g * np.sin(z),
        f_tilde=lambda t, x, xi, z: c_f * xi[..., 0] * 0.5 * (1.0 + np.tanh(z)),
        h=(lambda t, x, z: c_h * np.cos(z)) if c_h else _zero,
        lip_g=abs(c_g),
        lip_f=0.5 * abs(c_f),
        lip_h=abs(c_h),
        theta1=abs(c_g),
        theta2=abs(c_f),
        name="bounded-lipschitz",
    )


PRESETS = {
    "zero": zero_nonlinearity,
    "affine": affine_nonlinearity,
    "bounded-lipschitz": bounded_lipschitz_nonlinearity,
}


# ----------------------------------------------------------------------------
# paths


@dataclass
class FieldPath:
    times: np.ndarray
    values: np.ndarray  # (n_t + 1,) + grid.shape
    grid: SpectralGrid
    p: float
    path_index: int = 0
    stop_index: int | None = None
    residuals: list = field(default_factory=list)

    def __post_init__(self):
        if self.values.shape != (self.times.size,) + self.grid.shape:
            raise ParameterError("path values do not match the time grid and spatial grid")

    def norms(self, p: float | None = None) -> np.ndarray:
        p = self.p if p is None else p
        flat = np.abs(self.values.reshape(self.times.size, -1))
        if p == np.inf:
            return flat.max(axis=1)
        return (np.sum(flat ** p, axis=1) * self.grid.cell) ** (1.0 / p)

    def stopped(self) -> np.ndarray:
        """w(t ^ upsilon) on the grid."""
        k = self.stop_index if self.stop_index is not None else self.times.size - 1
        out = self.values.copy()
        out[k + 1:] = out[k]
        return out

    def with_values(self, values) -> "FieldPath":
        return FieldPath(self.times, values, self.grid, self.p, self.path_index)


def truncate(f: Field, K: float, p: float) -> Field:
    """lambda_K: rescale to L_p norm K when the norm exceeds K."""
    if not K > 0:
        raise ParameterError("K must be positive")
    nrm = f.lp_norm(p)
    if nrm <= K:
        return f
    return Field(f.grid, f.values * (K / nrm))


def _truncate_slices(values, grid, K, p):
    flat = np.abs(values.reshape(values.shape[0], -1))
    nrm = (np.sum(flat ** p, axis=1) * grid.cell) ** (1.0 / p)
    scale = np.where(nrm > K, K / np.where(nrm > 0, nrm, 1.0), 1.0)
    return values * scale.reshape((-1,) + (1,) * grid.d)


def stopping_time(path: FieldPath, K: float) -> int:
    """First grid index with ||w(t_i)||_p > K, else n_t."""
    over = np.nonzero(path.norms() > K)[0]
    return int(over[0]) if over.size else path.times.size - 1


def _interp_periodic(values, grid: SpectralGrid, pts):
    """Multilinear periodic interpolation at ``pts`` (shape (m, d))."""
    u = (np.asarray(pts, dtype=float) + grid.L) / grid.dx
    i0 = np.floor(u).astype(np.int64)
    fr = u - i0
    out = np.zeros(u.shape[0])
    n = grid.n
    for corner in range(2 ** grid.d):
        idx = []
        wt = np.ones(u.shape[0])
        for ax in range(grid.d):
            bit = (corner >> ax) & 1
            idx.append((i0[:, ax] + bit) % n)
            wt = wt * (fr[:, ax] if bit else 1.0 - fr[:, ax])
        out += wt * values[tuple(idx)]
    return out


# ----------------------------------------------------------------------------
# shared tables and per-path noise


class SolverTables:
    """Lattice symbols shared by every path (read-only)."""

    def __init__(self, config: SolverConfig):
        c = config
        g = c.grid
        e = c.exponents
        a = e.alpha
        self.config = config
        xs = g.xi_sq.ravel()
        self.phi_vals = bernstein.eval0(c.phi, xs)
        times = c.times
        self.S1 = np.empty((c.n_t + 1, xs.size))
        self.S1[0] = 1.0
        # kernels at each positive grid time, sharing the lattice map
        uniq, inv = np.unique(xs, return_inverse=True)
        for i in range(1, c.n_t + 1):
            self.S1[i] = symbol_S(a, a, times[i], uniq, c.phi)[inv]
        self.Q1 = self._slabs(a, 1.0, uniq, inv)
        self.Q2 = self._slabs(a, e.sigma2, uniq, inv)
        self.W1 = np.zeros((c.n_t + 1, xs.size))
        if c.include_wiener:
            self.W1[1:] = lag_symbols(a, e.sigma1, times[1:], self.phi_vals)

    def _slabs(self, a, sigma, uniq, inv):
        c = self.config
        q = np.zeros((c.n_t + 1, uniq.size))
        prev = np.zeros(uniq.size)
        for l in range(1, c.n_t + 1):
            cur = slab_symbol(a, sigma, 0.0, l * c.dt, uniq, c.phi)
            q[l] = cur - prev
            prev = cur
        return q[:, inv]


@dataclass
class PathNoise:
    index: int
    atom_times: np.ndarray
    atom_points: np.ndarray
    atom_marks: np.ndarray
    atom_slab: np.ndarray
    green: np.ndarray | None  # (A, n_t + 1, F) kernel rows centred at the atoms
    dW: np.ndarray | None  # (n_t, ...) field increments


def path_seeds(config: SolverConfig, index: int):
    cloud_ss, wiener_ss = derive_seed(config.seed, index).spawn(2)
    return cloud_ss, wiener_ss


def build_path_noise(config: SolverConfig, tables: SolverTables, index: int, cloud=None) -> PathNoise:
    g = config.grid
    F = tables.phi_vals.size
    cloud_ss, wiener_ss = path_seeds(config, index)
    if cloud is None and config.noise is not None:
        cloud = sample_cloud(config.noise, config.T, config.box, cloud_ss)
    if cloud is not None and cloud.count:
        s, x, xi = cloud.times, cloud.points, cloud.marks
        slab = np.minimum((s / config.dt).astype(np.int64), config.n_t - 1)
        lags = config.times[None, :] - s[:, None]  # (A, n_t + 1)
        live = lags > 0
        e = config.exponents
        sym = lag_symbols(e.alpha, e.sigma2, np.where(live, lags, 1.0), tables.phi_vals)
        sym *= live[..., None]
        half = g.half_shape
        ks = np.meshgrid(*[np.fft.fftfreq(g.n, 1.0 / g.n)] * (g.d - 1) + [np.arange(half[-1])], indexing="ij")
        phase = np.zeros((s.size, F))
        for ax in range(g.d):
            phase = phase + np.outer(x[:, ax] + g.L, ks[ax].ravel() * g.xi_unit)
        green = sym * (np.exp(-1j * phase) / g.cell)[:, None, :]
    else:
        s = np.zeros(0)
        x = np.zeros((0, g.d))
        xi = np.zeros((0, 1))
        slab = np.zeros(0, dtype=np.int64)
        green = None
    dW = None
    if config.include_wiener:
        wp = sample_wiener_path(config.wiener_modes, g, config.times, seed=wiener_ss)
        dW = np.stack([wp.field_increment(i) for i in range(config.n_t)])
    return PathNoise(index, s, x, xi, slab, green, dW)


# ----------------------------------------------------------------------------
# the Picard map


def _compensator_field(nl, spec: LevyMeasureSpec, t, X, z):
    """int f_tilde(t, x, xi, z(x)) mu(dxi) by the intensity's mark rule."""
    ys, wy = spec.mark_nodes()
    vals = nl.f_tilde(t, X[..., None], ys, z[..., None])
    return np.broadcast_to(np.asarray(vals, dtype=float), z.shape + wy.shape) @ wy


def picard_map(config: SolverConfig, nonlin: NonlinearitySpec, noise: PathNoise, w: FieldPath,
               tables: SolverTables | None = None, w0: Field | None = None) -> FieldPath:
    """One application of the truncated mild-solution operator."""
    tables = tables or SolverTables(config)
    g = config.grid
    n_t = config.n_t
    times = config.times
    if w.values.shape[0] != n_t + 1:
        raise ParameterError("path is not defined on the solver time grid")
    init = w.values[0] if w0 is None else w0.values
    p = config.exponents.p
    lw = _truncate_slices(w.values[:n_t], g, config.K_trunc, p)
    X = np.stack(np.broadcast_arrays(*g.coords()))
    half = g.half_shape
    F = tables.phi_vals.size

    def fft_slices(arr):
        return g.fft(arr).reshape(arr.shape[0], F)

    acc = tables.S1 * fft_slices(init[None])[0][None, :]
    if nonlin.g is not _zero:
        gv = np.stack([np.asarray(nonlin.g(times[j], X, lw[j]), float) * np.ones(g.shape) for j in range(n_t)])
        acc = acc + _backend.causal_convolve(tables.Q1, fft_slices(gv))
    if noise.green is not None and nonlin.has_jump:
        amp = np.empty(noise.atom_times.size)
        for j in np.unique(noise.atom_slab):
            sel = noise.atom_slab == j
            z = _interp_periodic(lw[j], g, noise.atom_points[sel])
            amp[sel] = nonlin.f_tilde(noise.atom_times[sel], noise.atom_points[sel].T, noise.atom_marks[sel], z)
        acc = acc + _backend.atom_accumulate(amp, noise.green)
    if config.noise is not None and nonlin.has_jump:
        comp = np.stack([_compensator_field(nonlin, config.noise, times[j], X, lw[j]) for j in range(n_t)])
        acc = acc - _backend.causal_convolve(tables.Q2, fft_slices(comp))
    if noise.dW is not None and nonlin.has_wiener:
        hv = np.stack([np.asarray(nonlin.h(times[j], X, lw[j]), float) * noise.dW[j] for j in range(n_t)])
        acc = acc + _backend.causal_convolve(tables.W1, fft_slices(hv))
    vals = g.ifft(acc.reshape((n_t + 1,) + half))
    vals[0] = init
    return w.with_values(vals)


def _sup_diff(a: np.ndarray, b: np.ndarray, grid, p):
    flat = np.abs((a - b).reshape(a.shape[0], -1))
    return float(((np.sum(flat ** p, axis=1) * grid.cell) ** (1.0 / p)).max())


def initial_path(config: SolverConfig, w0: Field, tables: SolverTables, index: int = 0) -> FieldPath:
    """S(t) * w0 on the time grid (the zeroth Picard iterate)."""
    g = config.grid
    F = tables.phi_vals.size
    acc = tables.S1 * g.fft(w0.values).reshape(F)[None, :]
    vals = g.ifft(acc.reshape((config.n_t + 1,) + g.half_shape))
    vals[0] = w0.values
    return FieldPath(config.times, vals, g, config.exponents.p, index)


def solve_path(config: SolverConfig, nonlin: NonlinearitySpec, w0: Field, index: int = 0,
               tables: SolverTables | None = None, noise: PathNoise | None = None) -> FieldPath:
    tables = tables or SolverTables(config)
    noise = noise or build_path_noise(config, tables, index)
    w = initial_path(config, w0, tables, index)
    p = config.exponents.p
    history = []
    for _ in range(config.max_iter):
        nxt = picard_map(config, nonlin, noise, w, tables, w0)
        res = _sup_diff(nxt.values, w.values, config.grid, p)
        history.append(res)
        w = nxt
        if res < config.picard_tol:
            break
    else:
        raise NonconvergenceError(f"Picard iteration did not reach tol {config.picard_tol:g}", history)
    w.residuals = history
    w.stop_index = stopping_time(w, config.K_trunc)
    return w


def solve(config: SolverConfig, nonlin: NonlinearitySpec, w0: Field, paths=None) -> list[FieldPath]:
    """Pathwise Picard solves for ``paths`` (default ``range(n_paths)``)."""
    if w0.grid != config.grid:
        raise ParameterError("initial data lives on a different grid")
    tables = SolverTables(config)
    idx = range(config.n_paths) if paths is None else paths
    return [solve_path(config, nonlin, w0, i, tables) for i in idx]


def march(config: SolverConfig, nonlin: NonlinearitySpec, w0: Field, index: int = 0,
          tables: SolverTables | None = None, noise: PathNoise | None = None) -> FieldPath:
    """Single-pass time marching: fills t_1, t_2, ... in order.

    Evaluates the same discrete equations as ``picard_map`` one time level
    at a time; used to cross-check the Picard fixed point.
    """
    tables = tables or SolverTables(config)
    noise = noise or build_path_noise(config, tables, index)
    w = initial_path(config, w0, tables, index)
    vals = w.values.copy()
    for i in range(1, config.n_t + 1):
        trial = picard_map(config, nonlin, noise, w.with_values(vals), tables, w0)
        vals[i] = trial.values[i]
    out = w.with_values(vals)
    out.stop_index = stopping_time(out, config.K_trunc)
    return out


# ----------------------------------------------------------------------------
# ensemble diagnostics


def _values(ens):
    return np.stack([e.values if isinstance(e, FieldPath) else np.asarray(e) for e in ens])


def moment_curve(ensemble, p: float, stopped: bool = False):
    """E ||w(t)||_p^p per grid time with its Monte Carlo standard error."""
    if not ensemble:
        raise ParameterError("empty ensemble")
    grid = ensemble[0].grid
    vals = np.stack([e.stopped() if stopped else e.values for e in ensemble])
    flat = np.abs(vals.reshape(vals.shape[0], vals.shape[1], -1))
    mom = np.sum(flat ** p, axis=2) * grid.cell
    se = mom.std(axis=0, ddof=1) / math.sqrt(len(ensemble)) if len(ensemble) > 1 else np.full(mom.shape[1], np.inf)
    return mom.mean(axis=0), se


def weighted_norm(ensemble, vartheta: float, p: float) -> float:
    """sup_t e^(-vartheta t) E ||w(t)||_p^p (the p-th power of the B norm)."""
    mean, _ = moment_curve(ensemble, p)
    t = ensemble[0].times
    with np.errstate(over="ignore"):
        weight = np.exp(-vartheta * t)
    return float(np.max(weight * mean))


def _difference(u: list, v: list) -> list:
    return [a.with_values(a.values - b.values) for a, b in zip(u, v)]


def contraction_ratio(config: SolverConfig, nonlin: NonlinearitySpec, u: list, v: list, w0: Field,
                      varthetas=None, tables: SolverTables | None = None):
    """||Tu - Tv||_B / ||u - v||_B under common noise, for each vartheta.

    Returns a float for a single rate (``config.vartheta`` by default) or an
    array for a sequence of rates.
    """
    if len(u) != len(v) or not u:
        raise ParameterError("u and v must be nonempty ensembles of equal size")
    p = config.exponents.p
    diff = _difference(u, v)
    if all(np.all(d.values == 0) for d in diff):
        raise ParameterError("u = v: contraction ratio undefined")
    tables = tables or SolverTables(config)
    Tu, Tv = [], []
    for a, b in zip(u, v):
        if a.path_index != b.path_index:
            raise ParameterError("u and v must share noise realisations path by path")
        noise = build_path_noise(config, tables, a.path_index)
        Tu.append(picard_map(config, nonlin, noise, a, tables, w0))
        Tv.append(picard_map(config, nonlin, noise, b, tables, w0))
    tdiff = _difference(Tu, Tv)
    single = varthetas is None or np.ndim(varthetas) == 0
    rates = [config.vartheta if varthetas is None else varthetas] if single else list(varthetas)
    out = np.array([
        (weighted_norm(tdiff, th, p) / weighted_norm(diff, th, p)) ** (1.0 / p) for th in rates
    ])
    return float(out[0]) if single else out


def default_initial(grid: SpectralGrid, amplitude: float = 1.0, width: float = 1.0) -> Field:
    r2 = sum(c * c for c in grid.coords())
    return Field(grid, np.broadcast_to(amplitude * np.exp(-r2 / (2 * width * width)), grid.shape).copy())
