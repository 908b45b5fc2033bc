"""Compare the compiled inner loops with the numpy fallback.

    python benchmarks/bench_core.py [--repeat 5] [--json out.json]

Each row times one kernel on a fixed workload in both backends (best of
``--repeat`` runs) and checks that the two results agree. The last row
runs one small solver ensemble end to end in a subprocess per backend.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from fracspde import _pycore

try:
    from fracspde import _core
except ImportError:  # extension not built
    _core = None


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def workloads():
    rng = np.random.default_rng(0)
    w = rng.uniform(0.01, 10, 256)
    wt = rng.standard_normal(256)
    x = rng.uniform(0, 100, 20000)
    coef = rng.standard_normal((4, 10000))
    s = rng.uniform(0, 20, 200000)
    q = rng.standard_normal((129, 513))
    g = rng.standard_normal((128, 513)) + 1j * rng.standard_normal((128, 513))
    amp = rng.standard_normal(400)
    table = rng.standard_normal((400, 33, 33)) + 1j * rng.standard_normal((400, 33, 33))
    from fracspde.mittag_leffler import _series_coefficients

    lcoef, csign = _series_coefficients(0.5, 1.0)
    z = rng.uniform(-2.6, 2.6, 20000)
    kmin = np.ones(z.size, dtype=np.int64)
    return {
        "ml_rational_sum": lambda m: m.ml_rational_sum(w, wt, x, 0.3, -0.7, 0.2),
        "ml_series_sum": lambda m: m.ml_series_sum(z, lcoef, csign, kmin, 1e-17)[0],
        "cubic_eval_uniform": lambda m: m.cubic_eval_uniform(0.0, 0.002, coef, s),
        "causal_convolve": lambda m: m.causal_convolve(q, g),
        "atom_accumulate": lambda m: m.atom_accumulate(amp, table),
    }


SOLVE_SNIPPET = """
import time
from fracspde import checks, solver, BACKEND
c = checks.default_solver_config(n_paths=8, n_t=64)
w0 = solver.default_initial(c.grid)
t0 = time.perf_counter()
solver.solve(c, solver.bounded_lipschitz_nonlinearity(), w0)
print(BACKEND, time.perf_counter() - t0)
"""


def solve_timing(pure: bool) -> float:
    env = {**os.environ, "FRACSPDE_PURE_PYTHON": "1" if pure else "0"}
    out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.split()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write the timings to this file")
    ap.add_argument("--skip-solve", action="store_true")
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not available; build with `pip install --no-build-isolation -e .`")
        return 1
    results = []
    print(f"{'kernel':<22s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}  agree")
    for name, fn in workloads().items():
        tp, rp = best_of(lambda: fn(_pycore), args.repeat)
        tc, rc = best_of(lambda: fn(_core), args.repeat)
        agree = bool(np.allclose(rp, rc, rtol=1e-10, atol=1e-12))
        results.append({"kernel": name, "python_s": tp, "cython_s": tc, "speedup": tp / tc, "agree": agree})
        print(f"{name:<22s} {1e3 * tp:12.2f} {1e3 * tc:12.2f} {tp / tc:8.1f}  {agree}")
    if not args.skip_solve:
        tp, tc = solve_timing(True), solve_timing(False)
        results.append({"kernel": "solve (8 paths)", "python_s": tp, "cython_s": tc, "speedup": tp / tc, "agree": None})
        print(f"{'solve (8 paths)':<22s} {1e3 * tp:12.2f} {1e3 * tc:12.2f} {tp / tc:8.1f}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)
    return 0 if all(r["agree"] is not False for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
