"""TOML experiment configuration: schema, defaults and a canonical hash.

A minimal file::

    seed = 0
    phi = { kind = "power", s = 0.5 }

    [exponents]
    alpha = 0.5
    sigma1 = 0.6
    sigma2 = 0.6
    p = 2.0

Every block is optional except ``phi``; see ``DEFAULTS`` for the full key
set. Unknown keys are rejected so that typos do not pass silently.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import bernstein, noise, solver
from .errors import ConfigError, FracSPDEError, GateViolation
from .kernels import FractionalExponents, SpectralGrid

DEFAULTS = {
    "seed": 0,
    "out": "out",
    "threads": 1,
    "phi": {"kind": "power", "s": 0.5},
    "exponents": {"alpha": 0.5, "sigma1": 0.6, "sigma2": 0.6, "p": 2.0},
    "grid": {"d": 1, "n": 64, "L": 8.0},
    "solver": {
        "T": 1.0,
        "n_t": 32,
        "K_trunc": 10.0,
        "vartheta": 80.0,
        "varthetas": [0.0, 5.0, 20.0, 80.0],
        "picard_tol": 1e-10,
        "picard_max_iter": 0,
        "n_paths": 16,
        "include_wiener": False,
        "wiener_modes": 8,
        "nonlinearity": {"preset": "bounded-lipschitz"},
        "initial": {"amplitude": 1.0, "width": 1.0},
    },
    "noise": {"kind": "gaussian", "rate": 1.0, "scale": 1.0},
    "kernel": {
        "alpha": 0.5,
        "sigma": 1.0,
        "d": 1,
        "n": 1024,
        "p": 1.0,
        "t_sweep": [2.0 ** k for k in range(-6, 1)],
    },
    "band": {"alpha": 0.5, "sigma1": 0.6, "sigma2": 0.7, "p": 4.0, "eps": 1.78, "delta": 0.049, "j_max": 6},
    "square": {"ps": [2.0, 3.0, 4.0], "samples": 20, "channels": 2, "n_t": 16, "n": 64, "L": 8.0},
    "noise_check": {"n_ens": 10000, "rates": [1.0, 10.0, 100.0], "ps": [1.0, 1.5], "iso_rate": 10.0},
    "sweep": [],
}

_REQUIRED = ("phi",)


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    leaf = key.split(".")[-1]
    pat = re.compile(rf"^\s*{re.escape(leaf)}\s*=|[{{,]\s*{re.escape(leaf)}\s*=")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.search(line):
            return i
    return None


def config_error(msg: str, field: str, text: str | None = None, cls=ConfigError) -> ConfigError:
    line = _line_of(text, field)
    where = f"field '{field}'" + (f", line {line}" if line else "")
    err = cls(f"{where}: {msg}", field)
    err.line = line
    return err


def _merge(base: dict, over: dict, path: str, text):
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{path}.{k}" if path else k
        if k not in base:
            raise config_error("unknown key", key, text)
        if isinstance(base[k], dict) and k not in ("phi", "nonlinearity", "noise"):
            if not isinstance(v, dict):
                raise config_error("expected a table", key, text)
            out[k] = _merge(base[k], v, key, text)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(d: dict, key: str, path: str, text, kind=float):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise config_error(f"expected a number, got {v!r}", f"{path}.{key}", text)
    if kind is int and int(v) != v:
        raise config_error(f"expected an integer, got {v!r}", f"{path}.{key}", text)
    return kind(v)


def _floats(d: dict, key: str, path: str, text):
    v = d[key]
    if not isinstance(v, list) or not v or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        raise config_error("expected a nonempty list of numbers", f"{path}.{key}", text)
    return [float(x) for x in v]


_NOISE_KEYS = {
    "none": {"kind"},
    "gaussian": {"kind", "rate", "scale", "mark_dim"},
    "point": {"kind", "rate", "mark"},
    "tempered-power": {"kind", "exponent", "tempering", "eps_jump", "scale"},
}


def build_noise(block: dict, text=None):
    if not isinstance(block, dict):
        raise config_error("expected a table", "noise", text)
    kind = str(block.get("kind", "gaussian")).lower()
    if kind not in _NOISE_KEYS:
        raise config_error(f"unknown noise kind {kind!r}; choose from {sorted(_NOISE_KEYS)}", "noise.kind", text)
    extra = set(block) - _NOISE_KEYS[kind]
    if extra:
        key = sorted(extra)[0]
        raise config_error(f"unknown key for noise kind {kind!r}", f"noise.{key}", text)
    try:
        if kind == "none":
            return None
        rate = float(block.get("rate", 1.0))
        if kind == "gaussian":
            mark = noise.Gaussian(float(block.get("scale", 1.0)), int(block.get("mark_dim", 1)))
            return noise.FiniteMixture(((rate, mark),))
        if kind == "point":
            return noise.FiniteMixture(((rate, noise.PointMass(tuple(block.get("mark", [1.0])))),))
        if kind == "tempered-power":
            spec = noise.TemperedPowerLaw(
                float(block.get("exponent", 0.5)), float(block.get("tempering", 1.0)),
                float(block.get("eps_jump", 0.01)), float(block.get("scale", 1.0)),
            )
            if not math.isfinite(spec.total_rate):
                raise config_error("infinite total rate; set eps_jump > 0", "noise.eps_jump", text)
            return spec
    except ConfigError:
        raise
    except (FracSPDEError, TypeError, ValueError) as err:
        raise config_error(str(err), "noise", text) from err


def build_nonlinearity(block: dict, text=None) -> solver.NonlinearitySpec:
    params = dict(block)
    name = params.pop("preset", None)
    if name not in solver.PRESETS:
        raise config_error(f"unknown preset {name!r}; choose from {sorted(solver.PRESETS)}",
                           "solver.nonlinearity.preset", text)
    try:
        return solver.PRESETS[name](**{k: float(v) for k, v in params.items()})
    except TypeError as err:
        raise config_error(str(err), "solver.nonlinearity", text) from err


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict
    text: str | None = None

    @classmethod
    def from_toml(cls, text: str, overrides: dict | None = None, require=_REQUIRED,
                  patch: dict | None = None) -> "ExperimentConfig":
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"TOML syntax error: {err}", None) from err
        for key in require:
            if key not in raw:
                raise ConfigError(f"field '{key}': required key is missing", key)
        return cls.from_dict(raw, overrides, text, patch)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None, patch: dict | None = None) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}", "config") from err
        return cls.from_toml(text, overrides, patch=patch)

    @classmethod
    def from_dict(cls, raw: dict, overrides: dict | None = None, text=None,
                  patch: dict | None = None) -> "ExperimentConfig":
        """Defaults, then ``raw``, then ``patch`` (same schema), then the
        top-level ``overrides`` (seed, out, threads)."""
        data = _merge(DEFAULTS, raw, "", text)
        if patch:
            data = _merge(data, patch, "", None)
        for k, v in (overrides or {}).items():
            if v is not None:
                data[k] = v
        cfg = cls(data, text)
        cfg.validate()
        return cfg

    # -- typed views --------------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def threads(self) -> int:
        return int(self.data["threads"])

    @property
    def out(self) -> str:
        return str(self.data["out"])

    @property
    def sweeps(self) -> dict:
        return {s["name"]: [float(v) for v in s["values"]] for s in self.data["sweep"]}

    def phi(self, block=None) -> bernstein.BernsteinSpec:
        d = self.data["phi"] if block is None else block
        if not isinstance(d, dict):
            raise config_error("expected a table such as { kind = \"power\", s = 0.5 }", "phi", self.text)
        try:
            return bernstein.from_dict(d)
        except (KeyError, ValueError, TypeError) as err:
            raise config_error(f"invalid Bernstein spec: {err}", "phi", self.text) from err

    def exponents(self, block: str = "exponents") -> FractionalExponents:
        b = self.data[block]
        vals = {k: _num(b, k, block, self.text) for k in ("alpha", "sigma1", "sigma2", "p")}
        try:
            return FractionalExponents(**vals)
        except FracSPDEError as err:
            raise config_error(str(err), block, self.text) from err

    def grid(self) -> SpectralGrid:
        b = self.data["grid"]
        try:
            return SpectralGrid(_num(b, "d", "grid", self.text, int), _num(b, "n", "grid", self.text, int),
                                _num(b, "L", "grid", self.text))
        except FracSPDEError as err:
            if isinstance(err, ConfigError):
                raise
            raise config_error(str(err), "grid", self.text) from err

    def noise_spec(self):
        return build_noise(self.data["noise"], self.text)

    def nonlinearity(self) -> solver.NonlinearitySpec:
        return build_nonlinearity(self.data["solver"]["nonlinearity"], self.text)

    def solver_config(self, n_paths: int | None = None) -> solver.SolverConfig:
        s = self.data["solver"]
        t = self.text
        max_iter = _num(s, "picard_max_iter", "solver", t, int)
        exponents, phi, grid, spec = self.exponents(), self.phi(), self.grid(), self.noise_spec()
        try:
            return solver.SolverConfig(
                exponents=exponents,
                phi=phi,
                grid=grid,
                T=_num(s, "T", "solver", t),
                n_t=_num(s, "n_t", "solver", t, int),
                K_trunc=_num(s, "K_trunc", "solver", t),
                vartheta=_num(s, "vartheta", "solver", t),
                picard_tol=_num(s, "picard_tol", "solver", t),
                picard_max_iter=max_iter if max_iter > 0 else None,
                n_paths=n_paths if n_paths is not None else _num(s, "n_paths", "solver", t, int),
                seed=self.seed,
                include_wiener=bool(s["include_wiener"]),
                wiener_modes=_num(s, "wiener_modes", "solver", t, int),
                noise=spec,
            )
        except GateViolation as err:
            raise config_error(str(err), "exponents.sigma2", t, GateViolation) from err
        except ConfigError as err:
            raise config_error(str(err), f"solver.{err.field}" if err.field else "solver", t) from err

    def validate(self):
        """Build every typed view once so schema and gate errors surface at load."""
        if isinstance(self.data["seed"], bool) or not isinstance(self.data["seed"], int) or self.data["seed"] < 0:
            raise config_error("seed must be a nonnegative integer", "seed", self.text)
        if not isinstance(self.data["threads"], int) or self.data["threads"] < 1:
            raise config_error("threads must be a positive integer", "threads", self.text)
        for s in self.data["sweep"]:
            if not isinstance(s, dict) or set(s) != {"name", "values"}:
                raise config_error("each [[sweep]] needs exactly 'name' and 'values'", "sweep", self.text)
            _floats(s, "values", "sweep", self.text)
        self.phi()
        k = self.data["kernel"]
        for key in ("alpha", "sigma", "p"):
            _num(k, key, "kernel", self.text)
        _num(k, "d", "kernel", self.text, int)
        _num(k, "n", "kernel", self.text, int)
        _floats(k, "t_sweep", "kernel", self.text)
        self.exponents("band")
        self.nonlinearity()
        self.solver_config()
        _floats(self.data["square"], "ps", "square", self.text)
        _floats(self.data["noise_check"], "rates", "noise_check", self.text)
        _floats(self.data["noise_check"], "ps", "noise_check", self.text)

    # -- provenance ---------------------------------------------------------

    def canonical(self) -> str:
        """Sorted JSON of the science keys; seed, out and threads are excluded."""
        core = {k: v for k, v in self.data.items() if k not in ("seed", "out", "threads")}
        return json.dumps(core, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]
