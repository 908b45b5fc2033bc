"""Command-line entry point.

Each subcommand writes ``<out>/<name>.csv`` with the raw series and
``<out>/<name>.json`` with the verdict, the config hash and the seed.
Exit codes: 0 pass, 1 verdict failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, checks, solver
from ._backend import BACKEND
from .config import ExperimentConfig, config_error, tomllib
from .errors import ConfigError, FracSPDEError, NonconvergenceError
from .kernels import FractionalExponents, SpectralGrid

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
FIT_TARGETS = ("l1-mass", "lp-norm", "band-small-t", "band-large-t", "band-j")


# ----------------------------------------------------------------------------
# output


def _plain(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    return v


def write_csv(path: Path, rows: list):
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _plain(v) for k, v in r.items()})


def write_json(path: Path, obj: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit(out: Path, name: str, cfg: ExperimentConfig, result: checks.CheckResult) -> int:
    write_csv(out / f"{name}.csv", result.rows)
    verdict = {
        "subcommand": name,
        "passed": bool(result.passed),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "backend": BACKEND,
        "version": __version__,
        "metrics": result.metrics,
    }
    write_json(out / f"{name}.json", verdict)
    print(f"{name}: {'PASS' if result.passed else 'FAIL'}  ({out / (name + '.json')})")
    return EXIT_PASS if result.passed else EXIT_FAIL


# ----------------------------------------------------------------------------
# argument parsing helpers


def parse_phi(text: str) -> dict:
    """``power:s=0.5``, ``logpower:s=1,c=2`` or an inline TOML table."""
    text = text.strip()
    if text.startswith("{"):
        try:
            return tomllib.loads("phi = " + text)["phi"]
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"field 'phi': cannot parse {text!r}: {err}", "phi") from err
    kind, _, rest = text.partition(":")
    out = {"kind": kind}
    for item in filter(None, rest.split(",")):
        k, eq, v = item.partition("=")
        if not eq:
            raise ConfigError(f"field 'phi': expected key=value, got {item!r}", "phi")
        try:
            out[k.strip()] = float(v)
        except ValueError as err:
            raise ConfigError(f"field 'phi': {v!r} is not a number", "phi") from err
    return out


def parse_sweep(text: str) -> list:
    """Comma list ``0.1,0.2,...`` or geometric ``geom:lo:hi:n``."""
    try:
        if text.startswith("geom:"):
            _, lo, hi, n = text.split(":")
            return [float(v) for v in np.geomspace(float(lo), float(hi), int(n))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise ConfigError(f"field 't_sweep': cannot parse {text!r}", "t_sweep") from err


def _flag_patch(args) -> dict:
    """Kernel flags folded into the config so that they enter the hash."""
    patch = {}
    kern = {k: getattr(args, k, None) for k in ("alpha", "sigma", "d")}
    kern = {k: v for k, v in kern.items() if v is not None}
    if getattr(args, "t_sweep", None):
        kern["t_sweep"] = parse_sweep(args.t_sweep)
    if kern:
        patch["kernel"] = kern
    if getattr(args, "phi", None):
        patch["phi"] = parse_phi(args.phi)
    if getattr(args, "paths", None) is not None:
        patch["solver"] = {"n_paths": args.paths}
    return patch


def load_config(args) -> ExperimentConfig:
    overrides = {"seed": args.seed, "out": args.out, "threads": args.threads}
    patch = _flag_patch(args)
    if args.config:
        return ExperimentConfig.from_file(args.config, overrides, patch)
    return ExperimentConfig.from_dict({}, overrides, patch=patch)


# ----------------------------------------------------------------------------
# subcommands


def cmd_ml_check(cfg, args, out):
    return emit(out, "ml-check", cfg, checks.ml_check())


def _kernel_case(cfg, args):
    k = cfg.data["kernel"]
    phi = cfg.phi()
    ts = k["t_sweep"] if getattr(args, "t_sweep", None) else cfg.sweeps.get("t", k["t_sweep"])
    d = int(k["d"])
    n = int(k["n"]) if d == 1 else min(int(k["n"]), 256)
    return float(k["alpha"]), float(k["sigma"]), phi, d, n, float(k["p"]), ts


def cmd_kernel_check(cfg, args, out):
    alpha, sigma, phi, d, n, p, ts = _kernel_case(cfg, args)
    try:
        res = checks.kernel_check([(alpha, sigma, phi)], ts, d=d, n=n, p=None if p == 1.0 else p)
    except FracSPDEError as err:
        raise config_error(str(err), "kernel", cfg.text) from err
    return emit(out, "kernel-check", cfg, res)


def cmd_band_check(cfg, args, out):
    b = cfg.data["band"]
    res = checks.band_check(cfg.exponents("band"), float(b["eps"]), float(b["delta"]), cfg.phi(), int(b["j_max"]))
    return emit(out, "band-check", cfg, res)


def cmd_square_check(cfg, args, out):
    s = cfg.data["square"]
    e = cfg.exponents()
    res = checks.square_check(
        ps=tuple(float(p) for p in s["ps"]), n_samples=int(s["samples"]), seed=cfg.seed,
        exponents=FractionalExponents(e.alpha, e.sigma1, e.sigma2, 2.0), phi=cfg.phi(),
        grid=SpectralGrid(1, int(s["n"]), float(s["L"])), channels=int(s["channels"]), n_t=int(s["n_t"]),
    )
    return emit(out, "square-check", cfg, res)


def cmd_noise_check(cfg, args, out):
    b = cfg.data["noise_check"]
    res = checks.noise_check(int(b["n_ens"]), cfg.seed, tuple(b["rates"]), tuple(b["ps"]), float(b["iso_rate"]))
    return emit(out, "noise-check", cfg, res)


def cmd_solve(cfg, args, out):
    sc = cfg.solver_config()
    nl = cfg.nonlinearity()
    init = cfg.data["solver"]["initial"]
    w0 = solver.default_initial(sc.grid, float(init["amplitude"]), float(init["width"]))
    p = sc.exponents.p
    try:
        ens = checks.solve_ensemble(sc, nl, w0, range(sc.n_paths), cfg.threads)
    except NonconvergenceError as err:
        res = checks.CheckResult("solve", False, {"error": str(err), "residual_history": err.history})
        return emit(out, "solve", cfg, res)
    for path in ens:
        norms = path.norms()
        stopped = solver.FieldPath(path.times, path.stopped(), path.grid, p).norms()
        write_csv(out / "solve" / f"path_{path.path_index:04d}.csv",
                  [{"t": t, "norm": a, "stopped_norm": b} for t, a, b in zip(path.times, norms, stopped)])
    thetas = [float(v) for v in cfg.data["solver"]["varthetas"]]
    u, v = checks.perturbed_pair(sc, w0, paths=range(sc.n_paths), seed=cfg.seed)
    ratios = solver.contraction_ratio(sc, nl, u, v, w0, thetas)
    mean, se = solver.moment_curve(ens, p, stopped=True)
    monotone = bool(np.all(np.diff(ratios) <= 1e-12))
    metrics = {
        "n_paths": sc.n_paths,
        "weighted_norm": solver.weighted_norm(ens, sc.vartheta, p),
        "vartheta": sc.vartheta,
        "contraction_sweep": dict(zip([str(t) for t in thetas], [float(r) for r in ratios])),
        "contraction_monotone": monotone,
        "stop_indices": [pp.stop_index for pp in ens],
        "residual_histories": [pp.residuals for pp in ens],
    }
    rows = [{"t": t, "stopped_moment": m, "stopped_moment_se": s} for t, m, s in zip(sc.times, mean, se)]
    ok = monotone and ratios[-1] < 1.0 and all(np.isfinite(mean))
    return emit(out, "solve", cfg, checks.CheckResult("solve", bool(ok), metrics, rows))


def cmd_fit_exponents(cfg, args, out):
    target = args.target
    if target in ("l1-mass", "lp-norm"):
        alpha, sigma, phi, d, n, p, ts = _kernel_case(cfg, args)
        pp = None if target == "l1-mass" else (p if p != 1.0 else 2.0)
        res = checks.kernel_check([(alpha, sigma, phi)], ts, d=d, n=n, p=pp)
        fit = res.metrics["fits"][0]
        rows = [{"t": r["t"], "norm": r["norm"]} for r in res.rows]
    else:
        b = cfg.data["band"]
        res = checks.band_check(cfg.exponents("band"), float(b["eps"]), float(b["delta"]), cfg.phi(), int(b["j_max"]))
        key = {"band-small-t": "small_t", "band-large-t": "large_t", "band-j": "j_growth"}[target]
        slope = res.metrics[f"slope_{key}"]
        declared = res.metrics[f"declared_{key}"]
        fit = {"slope": slope, "predicted": slope, "declared": declared,
               "deviation": abs(slope - declared) / max(abs(declared), 0.1)}
        rows = [{"slope": slope, "declared": declared}]
    passed = fit["deviation"] <= args.tolerance
    result = checks.CheckResult("fit-exponents", passed, {"target": target, "tolerance": args.tolerance, **fit}, rows)
    return emit(out, f"fit-exponents-{target}", cfg, result)


_COMMANDS = {
    "ml-check": cmd_ml_check,
    "kernel-check": cmd_kernel_check,
    "band-check": cmd_band_check,
    "square-check": cmd_square_check,
    "noise-check": cmd_noise_check,
    "solve": cmd_solve,
    "fit-exponents": cmd_fit_exponents,
}


def cmd_report(cfg, args, out):
    code = EXIT_PASS
    if args.run:
        for name in ("ml-check", "kernel-check", "band-check", "square-check", "noise-check", "solve"):
            _COMMANDS[name](cfg, args, out)
    rows = []
    for path in sorted(out.glob("*.json")):
        if path.name == "report.json":
            continue
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            continue
        if "passed" not in data:
            continue
        rows.append({"subcommand": data.get("subcommand", path.stem), "passed": bool(data["passed"]),
                     "config_hash": data.get("config_hash"), "seed": data.get("seed"), "file": path.name})
    passed = bool(rows) and all(r["passed"] for r in rows)
    write_csv(out / "report.csv", rows)
    write_json(out / "report.json", {"subcommand": "report", "passed": passed, "config_hash": cfg.hash(),
                                      "seed": cfg.seed, "verdicts": rows})
    for r in rows:
        print(f"  {r['subcommand']:<28s} {'PASS' if r['passed'] else 'FAIL'}")
    print(f"report: {'PASS' if passed else 'FAIL'} ({len(rows)} verdicts)")
    if not passed:
        code = EXIT_FAIL
    return code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads for path-parallel work")
    parser = argparse.ArgumentParser(prog="fracspde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ml-check", parents=[common], help="Mittag-Leffler identities")
    kflags = argparse.ArgumentParser(add_help=False)
    kflags.add_argument("--alpha", type=float)
    kflags.add_argument("--sigma", type=float)
    kflags.add_argument("--phi", help="e.g. power:s=0.5 or '{kind=\"logpower\", s=1, c=1}'")
    kflags.add_argument("--d", type=int)
    kflags.add_argument("--t-sweep", help="comma list or geom:lo:hi:n")
    sub.add_parser("kernel-check", parents=[common, kflags], help="kernel mass identity and norm scaling")
    sub.add_parser("band-check", parents=[common], help="band kernel estimate")
    sub.add_parser("square-check", parents=[common], help="square function strong (p, p) ratios")
    sub.add_parser("noise-check", parents=[common], help="compensated Poisson moment inequalities")
    s = sub.add_parser("solve", parents=[common], help="pathwise Picard solves")
    s.add_argument("--paths", type=int, help="number of paths (overrides solver.n_paths)")
    f = sub.add_parser("fit-exponents", parents=[common, kflags], help="log-log exponent fits")
    f.add_argument("--target", required=True, choices=FIT_TARGETS)
    f.add_argument("--tolerance", type=float, default=0.10, help="allowed relative deviation")
    r = sub.add_parser("report", parents=[common], help="aggregate JSON verdicts")
    r.add_argument("--run", action="store_true", help="run every check before aggregating")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("field 'threads': must be >= 1", "threads")
        if getattr(args, "paths", None) is not None and args.paths < 1:
            raise ConfigError("field 'paths': must be >= 1", "paths")
        cfg = load_config(args)
        out = Path(cfg.out)
        handler = cmd_report if args.command == "report" else _COMMANDS[args.command]
        return handler(cfg, args, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
