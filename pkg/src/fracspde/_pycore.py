"""Pure-numpy implementations of the inner loops.

Every function here has a twin with the same signature in the compiled
``_core`` extension. ``fracspde._backend`` picks one at import time.
"""

import numpy as np

_CHUNK = 256


def ml_rational_sum(w, wt, x, s1, s2, c):
    """Sum ``wt_i * (w_i*s1 + x*s2) / (w_i**2 + 2*w_i*x*c + x**2)`` over nodes.

    This is the quadrature of the Mittag-Leffler integral representation
    once the node-only factors have been folded into ``wt``.
    """
    w = np.ascontiguousarray(w, dtype=float)
    wt = np.ascontiguousarray(wt, dtype=float)
    x = np.ascontiguousarray(x, dtype=float)
    out = np.empty(x.shape[0])
    w2 = w * w
    ws1 = w * s1
    for lo in range(0, x.shape[0], _CHUNK):
        xs = x[lo:lo + _CHUNK]
        num = ws1[None, :] + (xs * s2)[:, None]
        den = w2[None, :] + (2.0 * c * xs)[:, None] * w[None, :] + (xs * xs)[:, None]
        out[lo:lo + _CHUNK] = (num / den) @ wt
    return out


def ml_series_sum(z, lcoef, csign, kmin, tol):
    """Kahan-compensated partial sums of ``sum_k csign_k exp(lcoef_k) z**k``.

    ``kmin[i]`` is the first index after which terms of ``z[i]`` are known to
    decrease; the sum stops at the first later term below ``tol*|sum|``.
    Returns ``(values, nterms)``; ``nterms[i] == len(lcoef)`` flags
    exhaustion.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    kmax = lcoef.shape[0]
    total = np.full(n, csign[0] * np.exp(lcoef[0]))
    comp = np.zeros(n)
    active = np.ones(n, dtype=bool)
    nterms = np.full(n, kmax, dtype=np.int64)
    zero = z == 0.0
    active[zero] = False
    nterms[zero] = 1
    with np.errstate(divide="ignore"):
        logz = np.log(np.abs(z))
    zneg = z < 0
    # exhausted sums may overflow; callers detect them through nterms
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, kmax):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            mag = np.exp(k * logz[idx] + lcoef[k])
            sgn = csign[k] * np.where(zneg[idx] & (k % 2 == 1), -1.0, 1.0)
            term = sgn * mag
            y = term - comp[idx]
            t = total[idx] + y
            comp[idx] = (t - total[idx]) - y
            total[idx] = t
            done = (k >= kmin[idx]) & (np.abs(term) <= tol * np.abs(t))
            if done.any():
                fin = idx[done]
                active[fin] = False
                nterms[fin] = k + 1
    return total, nterms


def cubic_eval_uniform(s0, h, coef, s):
    """Evaluate a piecewise cubic on the uniform breakpoints ``s0 + i*h``.

    ``coef`` has shape ``(4, m)`` in descending-power order (scipy ``PPoly``
    layout). Queries outside the table are extrapolated from the end pieces.
    """
    s = np.asarray(s, dtype=float)
    m = coef.shape[1]
    idx = np.floor((s - s0) / h).astype(np.int64)
    np.clip(idx, 0, m - 1, out=idx)
    ds = s - (s0 + idx * h)
    c = coef[:, idx]
    return ((c[0] * ds + c[1]) * ds + c[2]) * ds + c[3]


def causal_convolve(q, g):
    """Discrete Volterra sum ``r[k] = sum_{j<k} q[k-j] * g[j]``.

    ``q`` has shape ``(n+1, F)`` indexed by lag (row 0 unused), ``g`` has
    shape ``(n, F)``; the result has shape ``(n+1, F)`` with ``r[0] = 0``.
    """
    n = g.shape[0]
    out = np.zeros((n + 1, g.shape[1]), dtype=np.result_type(q, g))
    for lag in range(1, n + 1):
        out[lag:] += q[lag] * g[: n + 1 - lag]
    return out


def atom_accumulate(amp, table):
    """Weighted sum over atoms: ``sum_i amp[i] * table[i]``."""
    return np.tensordot(amp, table, axes=(0, 0))
