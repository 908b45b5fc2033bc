# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures and semantics match ``_pycore``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, floor

cnp.import_array()


def ml_rational_sum(w, wt, x, double s1, double s2, double c):
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] wtv = np.ascontiguousarray(wt, dtype=np.float64)
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], m = wv.shape[0], i, j
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef double xi, acc, wj, c2x, x2, xs2
    with nogil:
        for i in range(n):
            xi = xv[i]
            c2x = 2.0 * c * xi
            x2 = xi * xi
            xs2 = xi * s2
            acc = 0.0
            for j in range(m):
                wj = wv[j]
                acc = acc + wtv[j] * (wj * s1 + xs2) / (wj * (wj + c2x) + x2)
            ov[i] = acc
    return out


def ml_series_sum(z, lcoef, csign, kmin, double tol):
    cdef const double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[::1] lc = np.ascontiguousarray(lcoef, dtype=np.float64)
    cdef const double[::1] cs = np.ascontiguousarray(csign, dtype=np.float64)
    cdef const cnp.int64_t[::1] km = np.ascontiguousarray(kmin, dtype=np.int64)
    cdef Py_ssize_t n = zv.shape[0], kmax = lc.shape[0], i, k
    total = np.empty(n)
    nterms = np.empty(n, dtype=np.int64)
    cdef double[::1] tv = total
    cdef cnp.int64_t[::1] nv = nterms
    cdef double zi, logz, s, comp, term, y, t, sgn
    with nogil:
        for i in range(n):
            zi = zv[i]
            s = cs[0] * exp(lc[0])
            if zi == 0.0:
                tv[i] = s
                nv[i] = 1
                continue
            logz = log(fabs(zi))
            comp = 0.0
            nv[i] = kmax
            for k in range(1, kmax):
                sgn = cs[k]
                if zi < 0 and (k & 1):
                    sgn = -sgn
                term = sgn * exp(k * logz + lc[k])
                y = term - comp
                t = s + y
                comp = (t - s) - y
                s = t
                if k >= km[i] and fabs(term) <= tol * fabs(t):
                    nv[i] = k + 1
                    break
            tv[i] = s
    return total, nterms


def cubic_eval_uniform(double s0, double h, coef, s):
    cdef const double[:, ::1] cv = np.ascontiguousarray(coef, dtype=np.float64)
    sa = np.asarray(s, dtype=np.float64)
    cdef const double[::1] sv = np.ascontiguousarray(sa.ravel())
    cdef Py_ssize_t n = sv.shape[0], m = cv.shape[1], i, idx
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef double d
    with nogil:
        for i in range(n):
            idx = <Py_ssize_t> floor((sv[i] - s0) / h)
            if idx < 0:
                idx = 0
            elif idx > m - 1:
                idx = m - 1
            d = sv[i] - (s0 + idx * h)
            ov[i] = ((cv[0, idx] * d + cv[1, idx]) * d + cv[2, idx]) * d + cv[3, idx]
    return out.reshape(sa.shape)


def causal_convolve(q, g):
    # complex products are spelled out on interleaved (re, im) pairs; this
    # avoids the C99 complex multiply with its inf/nan recovery path
    qa = np.ascontiguousarray(q, dtype=np.complex128)
    ga = np.ascontiguousarray(g, dtype=np.complex128)
    cdef Py_ssize_t n = ga.shape[0], nf = ga.shape[1], k, j, f
    cdef const double[:, ::1] qv = qa.view(np.float64)
    cdef const double[:, ::1] gv = ga.view(np.float64)
    out = np.zeros((n + 1, nf), dtype=np.complex128)
    cdef double[:, ::1] ov = out.view(np.float64)
    cdef double qr, qi, gr, gi
    with nogil:
        for k in range(1, n + 1):
            for j in range(k):
                for f in range(nf):
                    qr = qv[k - j, 2 * f]
                    qi = qv[k - j, 2 * f + 1]
                    gr = gv[j, 2 * f]
                    gi = gv[j, 2 * f + 1]
                    ov[k, 2 * f] += qr * gr - qi * gi
                    ov[k, 2 * f + 1] += qr * gi + qi * gr
    return out


def atom_accumulate(amp, table):
    cdef const double[::1] av = np.ascontiguousarray(amp, dtype=np.float64)
    tarr = np.ascontiguousarray(table, dtype=np.complex128)
    shape = tarr.shape[1:]
    cdef Py_ssize_t na = tarr.shape[0], nf = 2 * int(np.prod(shape)), i, f
    cdef const double[:, ::1] tv = tarr.reshape(na, nf // 2).view(np.float64)
    out = np.zeros(nf // 2, dtype=np.complex128)
    cdef double[::1] ov = out.view(np.float64)
    cdef double a
    with nogil:
        for i in range(na):
            a = av[i]
            if a == 0.0:
                continue
            for f in range(nf):
                ov[f] += a * tv[i, f]
    return out.reshape(shape)
