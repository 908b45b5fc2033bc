"""Poisson random measures, compensated integrals and truncated Wiener noise.

Seeds
-----
Path ``i`` of an ensemble with master seed ``m`` draws from
``np.random.SeedSequence(m, spawn_key=(i,))`` (see ``derive_seed``). The
stream depends only on ``(m, i)``, so ensembles reproduce under any
parallel schedule.

Cloud dump format
-----------------
Whitespace-separated text, ``#`` header lines first. The header records the
window and seed; the column line reads ``s x1 .. xd xi1 .. xid1`` and each
following line is one atom.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import integrate, special

from .errors import (
    EnsembleTooSmallWarning,
    InfiniteRateError,
    ParameterError,
    QuadratureError,
)
from .kernels import SpectralGrid

_GL_NODES = 12


def derive_seed(master: int, index: int) -> np.random.SeedSequence:
    """Seed of path ``index`` under master seed ``master``."""
    return np.random.SeedSequence(int(master), spawn_key=(int(index),))


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def seed_label(seed) -> str:
    """Compact text form of an int seed or a derived SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        key = ",".join(str(k) for k in seed.spawn_key)
        return f"{seed.entropy}/{key}"
    return repr(seed)


# ----------------------------------------------------------------------------
# mark distributions


@dataclass(frozen=True)
class PointMass:
    y0: tuple = (1.0,)

    @property
    def dim(self) -> int:
        return len(self.y0)

    def sample(self, rng, n):
        return np.tile(np.asarray(self.y0, dtype=float), (n, 1))

    def abs_moment(self, p):
        return float(np.linalg.norm(self.y0)) ** p

    def nodes(self):
        return np.asarray([self.y0], dtype=float), np.ones(1)


@dataclass(frozen=True)
class Gaussian:
    """Centred isotropic Gaussian marks N(0, scale^2 I)."""

    scale: float = 1.0
    ndim: int = 1

    def __post_init__(self):
        if not self.scale > 0 or self.ndim < 1:
            raise ParameterError("Gaussian marks need scale > 0 and dim >= 1")

    @property
    def dim(self) -> int:
        return self.ndim

    def sample(self, rng, n):
        return self.scale * rng.standard_normal((n, self.ndim))

    def abs_moment(self, p):
        k = self.ndim
        return self.scale ** p * 2 ** (p / 2) * math.exp(special.gammaln((k + p) / 2) - special.gammaln(k / 2))

    def nodes(self):
        # polar rule: |y| = scale * r with the chi density, geometric panels
        # near r = 0 so that |y|^p integrands keep full accuracy
        k = self.ndim
        edges = np.concatenate([[0.0], np.geomspace(1e-4, 1.0, 9), np.linspace(1.5, 12.0, 22)])
        x, w = special.roots_legendre(12)
        h = 0.5 * np.diff(edges)
        r = (h[:, None] * (x + 1) + edges[:-1, None]).ravel()
        wr = (h[:, None] * w).ravel()
        logc = (1 - k / 2) * math.log(2) - special.gammaln(k / 2)
        wr = wr * np.exp(logc + (k - 1) * np.log(r) - r * r / 2)
        if k == 1:
            dirs, wd = np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
        elif k == 2:
            th = 2 * math.pi * (np.arange(32) + 0.5) / 32
            dirs, wd = np.column_stack([np.cos(th), np.sin(th)]), np.full(32, 1 / 32)
        else:
            if k != 3:
                raise ParameterError("Gaussian mark quadrature supports dimensions 1 to 3")
            ct, wc = special.roots_legendre(16)
            ph = 2 * math.pi * (np.arange(32) + 0.5) / 32
            st_ = np.sqrt(1 - ct * ct)
            dirs = np.array([[s_ * math.cos(p_), s_ * math.sin(p_), c_] for c_, s_ in zip(ct, st_) for p_ in ph])
            wd = np.repeat(wc / 2, 32) / 32
        pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, k) * self.scale
        wts = (wr[:, None] * wd[None, :]).ravel()
        return pts, wts


# ----------------------------------------------------------------------------
# intensities


class LevyMeasureSpec:
    """Interface: ``total_rate``, ``moment(p)``, ``sample_marks``, ``mark_nodes``."""

    mark_dim: int

    @property
    def total_rate(self) -> float:  # pragma: no cover - interface
        raise NotImplementedError

    def moment(self, p: float) -> float:
        """(m_p)^p = integral of |y|^p mu(dy)."""
        raise NotImplementedError  # pragma: no cover

    def m_p(self, p: float) -> float:
        return self.moment(p) ** (1.0 / p)

    def sample_marks(self, rng, n):  # pragma: no cover - interface
        raise NotImplementedError

    def mark_nodes(self):  # pragma: no cover - interface
        """Nodes and weights with sum w f(y) ~ integral f(y) mu(dy)."""
        raise NotImplementedError


@dataclass(frozen=True)
class FiniteMixture(LevyMeasureSpec):
    components: tuple = ((1.0, PointMass()),)

    def __post_init__(self):
        if not self.components:
            raise ParameterError("mixture needs at least one component")
        dims = {m.dim for _, m in self.components}
        if len(dims) != 1:
            raise ParameterError("all mark distributions must share one dimension")
        for rate, _ in self.components:
            if not rate >= 0 or not math.isfinite(rate):
                raise ParameterError("component rates must be finite and nonnegative")

    @property
    def mark_dim(self) -> int:
        return self.components[0][1].dim

    @property
    def total_rate(self) -> float:
        return float(sum(r for r, _ in self.components))

    def moment(self, p):
        return float(sum(r * m.abs_moment(p) for r, m in self.components))

    def sample_marks(self, rng, n):
        out = np.empty((n, self.mark_dim))
        if n == 0:
            return out
        rates = np.array([r for r, _ in self.components])
        which = rng.choice(len(rates), size=n, p=rates / rates.sum())
        for i, (_, m) in enumerate(self.components):
            sel = which == i
            out[sel] = m.sample(rng, int(sel.sum()))
        return out

    def mark_nodes(self):
        pts, wts = [], []
        for r, m in self.components:
            x, w = m.nodes()
            pts.append(x)
            wts.append(r * w)
        return np.concatenate(pts), np.concatenate(wts)


@dataclass(frozen=True)
class TemperedPowerLaw(LevyMeasureSpec):
    """Symmetric jumps on the line with density ``scale |y|^(-1-a) e^(-c|y|)``
    on ``|y| > eps_jump``; smaller jumps are dropped."""

    exponent: float = 0.5
    tempering: float = 1.0
    eps_jump: float = 0.01
    scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.exponent < 2:
            raise ParameterError("power-law exponent must lie in (0, 2)")
        if not self.tempering > 0:
            raise ParameterError("tempering must be positive so that every m_p, p in [1, 2], is finite")
        if not self.eps_jump >= 0 or not self.scale > 0:
            raise ParameterError("need eps_jump >= 0 and scale > 0")

    mark_dim = 1

    def _radial(self, q):
        """2 * scale * integral_{eps}^inf r^(q - 1 - a) e^(-c r) dr."""
        a, c, e = self.exponent, self.tempering, self.eps_jump
        s = q - a
        if e == 0 and s <= 0:
            return math.inf
        if s > 0:
            # upper incomplete gamma, regularised form times Gamma(s)
            val = special.gammaincc(s, c * e) * special.gamma(s) * c ** (-s)
        else:
            val, err = integrate.quad(lambda r: r ** (s - 1) * math.exp(-c * r), e, np.inf, epsrel=1e-12, limit=200)
        return 2.0 * self.scale * float(val)

    @property
    def total_rate(self) -> float:
        return self._radial(0.0)

    def moment(self, p):
        return self._radial(p)

    def sample_marks(self, rng, n):
        if self.eps_jump == 0:
            raise InfiniteRateError("power-law intensity with eps_jump = 0 has infinite rate")
        a, c, e = self.exponent, self.tempering, self.eps_jump
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = max(16, 2 * (n - filled))
            r = e * rng.uniform(size=m) ** (-1.0 / a)  # Pareto(a) above eps
            keep = r[rng.uniform(size=m) < np.exp(-c * (r - e))]
            take = min(keep.size, n - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
        sign = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
        return (sign * out)[:, None]

    def mark_nodes(self, panels=32, per_panel=8):
        if self.eps_jump == 0:
            raise InfiniteRateError("power-law intensity with eps_jump = 0 has infinite rate")
        a, c, e = self.exponent, self.tempering, self.eps_jump
        top = e + 40.0 / c
        edges = np.geomspace(e, top, panels + 1)
        x, w = special.roots_legendre(per_panel)
        r = (0.5 * (edges[1:] - edges[:-1])[:, None] * (x + 1) + edges[:-1, None]).ravel()
        wr = (0.5 * (edges[1:] - edges[:-1])[:, None] * w).ravel()
        wr = self.scale * wr * r ** (-1 - a) * np.exp(-c * r)
        return np.concatenate([r, -r])[:, None], np.concatenate([wr, wr])


# ----------------------------------------------------------------------------
# clouds


def _box(box):
    b = np.asarray(box, dtype=float).reshape(-1, 2)
    if np.any(b[:, 1] <= b[:, 0]):
        raise ParameterError("box edges must satisfy lo < hi")
    return b


@dataclass(frozen=True)
class PoissonCloud:
    times: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    marks: np.ndarray = field(repr=False)
    T: float
    box: tuple
    seed: object = None
    spec: LevyMeasureSpec | None = None

    def __post_init__(self):
        b = _box(self.box)
        n = self.times.shape[0]
        if self.points.shape != (n, b.shape[0]) or self.marks.shape[0] != n:
            raise ParameterError("atom arrays disagree in length or dimension")
        inside = (self.times >= 0) & (self.times <= self.T)
        inside &= np.all((self.points >= b[:, 0]) & (self.points <= b[:, 1]), axis=1)
        if not np.all(inside):
            raise ParameterError("cloud has atoms outside its window")
        for arr in (self.times, self.points, self.marks):
            arr.setflags(write=False)

    @property
    def count(self) -> int:
        return int(self.times.shape[0])

    @property
    def volume(self) -> float:
        b = _box(self.box)
        return float(self.T * np.prod(b[:, 1] - b[:, 0]))


def sample_cloud(spec: LevyMeasureSpec, T: float, box, seed) -> PoissonCloud:
    """Poisson(T |box| rate) atoms, uniform in time and space, marks from ``spec``."""
    b = _box(box)
    if not T > 0:
        raise ParameterError("T must be positive")
    rate = spec.total_rate
    if not math.isfinite(rate):
        raise InfiniteRateError("intensity has infinite total rate; set a positive small-jump cutoff")
    rng = _rng(seed)
    mean = T * float(np.prod(b[:, 1] - b[:, 0])) * rate
    n = int(rng.poisson(mean))
    times = np.sort(rng.uniform(0.0, T, size=n))
    points = b[:, 0] + (b[:, 1] - b[:, 0]) * rng.uniform(size=(n, b.shape[0]))
    marks = spec.sample_marks(rng, n)
    return PoissonCloud(times, points, marks, float(T), tuple(map(tuple, b)), seed, spec)


def _panel_rule(lo, hi, nodes, panels):
    x, w = special.roots_legendre(nodes)
    edges = np.linspace(lo, hi, panels + 1)
    h = 0.5 * np.diff(edges)
    return (h[:, None] * (x + 1) + edges[:-1, None]).ravel(), (h[:, None] * w).ravel()


def _window_nodes(T0, T1, b, n, panels=1):
    axes = [_panel_rule(T0, T1, n, panels)]
    for lo, hi in b:
        axes.append(_panel_rule(lo, hi, n, panels))
    pts = np.array(list(product(*[a[0] for a in axes])))
    wts = np.prod(np.array(list(product(*[a[1] for a in axes]))), axis=1)
    return pts[:, 0], pts[:, 1:], wts


def compensator(spec: LevyMeasureSpec, integrand, T0, T1, box, nodes=_GL_NODES, power=None):
    """Integral of f(s, x, xi) ds dx mu(dxi) by tensor Gauss-Legendre times
    the mark rule; ``power`` integrates |f|^power instead.

    Raises ``QuadratureError`` when refining the rule moves the value by more
    than 1e-8 relative (1e-4 for ``power``, whose integrand has kinks where f
    changes sign; that value only serves as a Monte Carlo reference). The
    refinement doubles the node count, or for ``power`` doubles the panel
    count from 8 up to 64 until two successive values agree.
    """
    b = _box(box)
    if power is None:
        levels, rtol = [(nodes, 1), (2 * nodes, 1)], 1e-8
    else:
        levels, rtol = [(8, 8), (8, 16), (8, 32), (8, 64)], 1e-4

    def run(level):
        m, panels = level
        s, x, w = _window_nodes(T0, T1, b, m, panels)
        ys, wy = spec.mark_nodes()
        S = np.repeat(s, len(wy))
        X = np.repeat(x, len(wy), axis=0)
        Y = np.tile(ys, (len(s), 1))
        W = np.repeat(w, len(wy)) * np.tile(wy, len(s))
        f = np.asarray(integrand(S, X, Y), dtype=float) * np.ones(S.shape)
        if power is not None:
            f = np.abs(f) ** power
        return float(W @ f)

    prev = run(levels[0])
    for level in levels[1:]:
        cur = run(level)
        if math.isfinite(cur) and abs(prev - cur) <= rtol * abs(cur) + 1e-13:
            return cur
        prev = cur
    raise QuadratureError(f"compensator quadrature did not settle; last value {prev!r}")


def _select(cloud: PoissonCloud, window):
    if window is None:
        return np.ones(cloud.count, bool), 0.0, cloud.T, _box(cloud.box)
    T0, T1, sub = window
    sb = _box(sub)
    sel = (cloud.times >= T0) & (cloud.times < T1)
    sel &= np.all((cloud.points >= sb[:, 0]) & (cloud.points < sb[:, 1]), axis=1)
    return sel, T0, T1, sb


def compensated_integral(cloud: PoissonCloud, integrand, window=None, comp: float | None = None) -> float:
    """Atom sum of ``integrand(s, x, xi)`` minus its compensator.

    ``window = (T0, T1, box)`` restricts both terms to a sub-window;
    ``comp`` supplies a precomputed compensator.
    """
    sel, T0, T1, b = _select(cloud, window)
    f = np.asarray(integrand(cloud.times[sel], cloud.points[sel], cloud.marks[sel]), dtype=float)
    atoms = float(np.sum(f * np.ones(int(sel.sum()))))
    if comp is None:
        if cloud.spec is None:
            raise ParameterError("cloud carries no intensity; pass comp explicitly")
        comp = compensator(cloud.spec, integrand, T0, T1, b)
    return atoms - comp


@dataclass(frozen=True)
class MomentCheck:
    lhs: float
    rhs: float
    lhs_se: float
    p: float
    n_ens: int

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs

    @property
    def ratio_se(self) -> float:
        return self.lhs_se / self.rhs


def ensemble_integrals(spec, integrand, n_ens, seed, T=1.0, box=((0.0, 1.0),)):
    comp = compensator(spec, integrand, 0.0, T, box)
    vals = np.empty(n_ens)
    for i in range(n_ens):
        cloud = sample_cloud(spec, T, box, derive_seed(seed, i))
        vals[i] = compensated_integral(cloud, integrand, comp=comp)
    return vals


def moment_inequality_check(spec, integrand, p, n_ens, seed=0, T=1.0, box=((0.0, 1.0),)) -> MomentCheck:
    """Ensemble E|int f dPi~|^p against int |f|^p ds dx mu(dxi)."""
    if not 1.0 <= p <= 2.0:
        raise ParameterError("p must lie in [1, 2]")
    vals = ensemble_integrals(spec, integrand, n_ens, seed, T, box)
    mom = np.abs(vals) ** p
    lhs = float(mom.mean())
    se = float(mom.std(ddof=1) / math.sqrt(n_ens)) if n_ens > 1 else math.inf
    rhs = compensator(spec, integrand, 0.0, T, box, power=p)
    if not rhs > 0 or not math.isfinite(rhs):
        raise ParameterError("p-moment integral must be positive and finite")
    if not se <= 0.1 * lhs:
        warnings.warn(f"relative MC error {se / max(lhs, 1e-300):.2f} exceeds 10%", EnsembleTooSmallWarning, stacklevel=2)
    return MomentCheck(lhs, rhs, se, float(p), int(n_ens))


# ----------------------------------------------------------------------------
# Wiener noise


def _lattice_vectors(d, n, count):
    """Nonzero integer vectors, one per +-pair, ordered by |k|^2 then lexically."""
    rng = range(-(n // 2) + 1, n // 2)
    vecs = []
    for k in product(rng, repeat=d):
        if any(k):
            first = next(c for c in k if c != 0)
            if first > 0:
                vecs.append(k)
    vecs.sort(key=lambda k: (sum(c * c for c in k), k))
    return vecs


def sine_basis(grid: SpectralGrid, K: int) -> np.ndarray:
    """First K real trigonometric modes, orthonormal in L2 of the torus."""
    if K > grid.n ** grid.d:
        raise ParameterError(f"K={K} exceeds the grid resolution n^d={grid.n ** grid.d}")
    vol = grid.volume
    out = np.empty((K,) + grid.shape)
    out[0] = 1.0 / math.sqrt(vol)
    coords = [c + grid.L for c in grid.coords()]
    i = 1
    for k in _lattice_vectors(grid.d, grid.n, K):
        if i >= K:
            break
        phase = sum(kk * grid.xi_unit * c for kk, c in zip(k, coords))
        for fn in (np.cos, np.sin):
            if i < K:
                out[i] = np.broadcast_to(fn(phase), grid.shape) * math.sqrt(2.0 / vol)
                i += 1
    if i < K:
        raise ParameterError("not enough non-Nyquist modes for K; use grid-cells")
    return out


def cell_basis(grid: SpectralGrid, K: int) -> np.ndarray:
    if K > grid.n ** grid.d:
        raise ParameterError(f"K={K} exceeds the grid resolution n^d={grid.n ** grid.d}")
    out = np.zeros((K, grid.n ** grid.d))
    out[np.arange(K), np.arange(K)] = 1.0 / math.sqrt(grid.cell)
    return out.reshape((K,) + grid.shape)


@dataclass(frozen=True)
class NoisePath:
    times: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)  # (n_steps, K), variance dt each
    basis: np.ndarray = field(repr=False)  # (K,) + grid.shape
    grid: SpectralGrid
    seed: object = None

    @property
    def K(self) -> int:
        return self.increments.shape[1]

    def coefficients(self) -> np.ndarray:
        """B^k at every grid time, shape (n_steps + 1, K)."""
        return np.vstack([np.zeros((1, self.K)), np.cumsum(self.increments, axis=0)])

    def field_increment(self, i: int) -> np.ndarray:
        """sum_k dB^k_i e_k(x)."""
        return np.tensordot(self.increments[i], self.basis, axes=(0, 0))


def sample_wiener_path(K: int, grid: SpectralGrid, time_grid, basis: str = "sine", seed=0) -> NoisePath:
    t = np.asarray(time_grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
        raise ParameterError("time grid must be increasing with at least two points")
    if K < 1:
        raise ParameterError("K must be >= 1")
    if basis == "sine":
        e = sine_basis(grid, K)
    elif basis == "grid-cells":
        e = cell_basis(grid, K)
    else:
        raise ParameterError(f"unknown basis {basis!r}")
    rng = _rng(seed)
    dt = np.diff(t)
    incr = rng.standard_normal((dt.size, K)) * np.sqrt(dt)[:, None]
    for arr in (t, incr, e):
        arr.setflags(write=False)
    return NoisePath(t, incr, e, grid, seed)


# ----------------------------------------------------------------------------
# columnar dumps


def write_cloud(path, cloud: PoissonCloud):
    d = cloud.points.shape[1]
    d1 = cloud.marks.shape[1]
    cols = ["s"] + [f"x{i + 1}" for i in range(d)] + [f"xi{i + 1}" for i in range(d1)]
    header = "\n".join([
        f"T {float(cloud.T)!r}",
        "box " + " ".join(f"{float(lo)!r} {float(hi)!r}" for lo, hi in cloud.box),
        f"seed {seed_label(cloud.seed)}",
        " ".join(cols),
    ])
    data = np.column_stack([cloud.times, cloud.points, cloud.marks]) if cloud.count else np.empty((0, len(cols)))
    np.savetxt(path, data, fmt="%.17g", header=header)


def read_cloud(path, spec: LevyMeasureSpec | None = None) -> PoissonCloud:
    meta = {}
    cols = None
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, rest = line[1:].strip().partition(" ")
            if key == "s":
                cols = [key] + rest.split()
            else:
                meta[key] = rest
    data = np.loadtxt(path, ndmin=2).reshape(-1, len(cols))
    nums = [float(v) for v in meta["box"].split()]
    box = tuple(zip(nums[0::2], nums[1::2]))
    d = len(box)
    return PoissonCloud(
        data[:, 0].copy(), data[:, 1:1 + d].copy(), data[:, 1 + d:].copy(), float(meta["T"]), box, meta.get("seed"), spec
    )


def write_path(path, noise: NoisePath):
    cols = ["t_start", "t_end"] + [f"dB{k + 1}" for k in range(noise.K)]
    data = np.column_stack([noise.times[:-1], noise.times[1:], noise.increments])
    np.savetxt(path, data, fmt="%.17g", header=f"seed {seed_label(noise.seed)}\n" + " ".join(cols))
