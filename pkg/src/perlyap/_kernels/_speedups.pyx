# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the sequential inner loops.

Mirrors the signatures in ``_ref``; batch-friendly paths that already
vectorize well in NumPy are re-exported from there unchanged.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, log, sqrt

from ._ref import RESCALE_HI, RESCALE_LO, lognorm2, orbit_dyadic_batch

cnp.import_array()

cdef double _RESCALE_HI = RESCALE_HI
cdef double _RESCALE_LO = RESCALE_LO
DEF MAXDIM = 32


def orbit_dyadic(nums, den, mat, n):
    """See _ref.orbit_dyadic."""
    cdef Py_ssize_t d = len(nums)
    cdef Py_ssize_t steps = n
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((steps + 1, d))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] x = np.array(nums, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] m = np.ascontiguousarray(mat, dtype=np.int64)
    cdef long long dden = den
    cdef double inv_den = 1.0 / dden
    cdef long long acc
    cdef long long tmp[MAXDIM]
    cdef Py_ssize_t i, r, j
    if d > MAXDIM:
        raise ValueError("dimension too large for the compiled kernel")
    for r in range(d):
        out[0, r] = x[r] * inv_den
    for i in range(steps):
        for r in range(d):
            acc = 0
            for j in range(d):
                acc += m[r, j] * x[j]
            acc = acc % dden
            if acc < 0:
                acc += dden
            tmp[r] = acc
        for r in range(d):
            x[r] = tmp[r]
            out[i + 1, r] = tmp[r] * inv_den
    end = []
    for r in range(d):
        end.append(int(x[r]))
    return out, tuple(end)


cdef inline double _frobenius(double[:, ::1] a, Py_ssize_t d) nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i, j
    for i in range(d):
        for j in range(d):
            s += a[i, j] * a[i, j]
    return sqrt(s)


def cocycle_qr(mats, q0=None, chunk=1):
    """Per-step modified Gram-Schmidt Benettin accumulation (chunk ignored)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3] a = np.ascontiguousarray(mats, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t d = a.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q = np.eye(d) if q0 is None else np.array(q0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = np.empty((d, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logsum = np.zeros(d)
    cdef double min_diag = INFINITY
    cdef Py_ssize_t step, i, j, col, prev
    cdef double acc, r
    for step in range(n):
        # b = mats[step] @ q
        for i in range(d):
            for j in range(d):
                acc = 0.0
                for col in range(d):
                    acc += a[step, i, col] * q[col, j]
                b[i, j] = acc
        # modified Gram-Schmidt on the columns of b, written back into q
        for col in range(d):
            for prev in range(col):
                acc = 0.0
                for i in range(d):
                    acc += q[i, prev] * b[i, col]
                for i in range(d):
                    b[i, col] -= acc * q[i, prev]
            r = 0.0
            for i in range(d):
                r += b[i, col] * b[i, col]
            r = sqrt(r)
            if r < min_diag:
                min_diag = r
            if r <= 0.0:
                return np.asarray(logsum), np.asarray(q), 0.0
            for i in range(d):
                q[i, col] = b[i, col] / r
            logsum[col] += log(r)
    return np.asarray(logsum), np.asarray(q), min_diag


def cocycle_qr_multi(mats, chunk=1):
    """Loop of cocycle_qr over the seed axis; mats shape (S, n, d, d)."""
    cdef Py_ssize_t s = mats.shape[0]
    cdef Py_ssize_t d = mats.shape[2]
    cdef Py_ssize_t i
    logsums = np.empty((s, d))
    min_diags = np.empty(s)
    for i in range(s):
        ls, _, md = cocycle_qr(mats[i])
        logsums[i] = ls
        min_diags[i] = md
    return logsums, min_diags


def scaled_products(mats, invert=False, keep_stack=True):
    """See _ref.scaled_products."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3] work = np.ascontiguousarray(
        np.linalg.inv(mats) if invert else mats, dtype=np.float64)
    cdef Py_ssize_t n = work.shape[0]
    cdef Py_ssize_t d = work.shape[1]
    cdef bint inv = 1 if invert else 0
    cdef bint keep = 1 if keep_stack else 0
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.eye(d)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tmp = np.empty((d, d))
    cdef Py_ssize_t n_keep = n + 1 if keep_stack else 1
    cdef cnp.ndarray[cnp.float64_t, ndim=3] stack = np.empty((n_keep, d, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logarr = np.zeros(n_keep)
    cdef double logs = 0.0
    cdef Py_ssize_t m, i, j, t
    cdef double acc, f
    if keep:
        stack[0] = p
    for m in range(n):
        for i in range(d):
            for j in range(d):
                acc = 0.0
                if inv:
                    for t in range(d):
                        acc += p[i, t] * work[m, t, j]
                else:
                    for t in range(d):
                        acc += work[m, i, t] * p[t, j]
                tmp[i, j] = acc
        p, tmp = tmp, p
        f = _frobenius(p, d)
        if f > _RESCALE_HI or (f > 0.0 and f < _RESCALE_LO):
            logs += log(f)
            for i in range(d):
                for j in range(d):
                    p[i, j] /= f
        if keep:
            stack[m + 1] = p
            logarr[m + 1] = logs
    if keep:
        return stack, logarr
    return np.asarray(p), logs


def goodtimes_bad(mats, a, thresh, L, tol):
    """Row-major variant of _ref.goodtimes_bad (2x2 fast path)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3] am = np.ascontiguousarray(mats, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t N = am.shape[0]
    cdef Py_ssize_t Lv = L
    cdef double th = thresh
    cdef double tl = tol
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] bad = np.zeros(N + 1, dtype=np.uint8)
    cdef Py_ssize_t i, m
    cdef double p00, p01, p10, p11, t00, t01, t10, t11
    cdef double logs, f, t, det, disc, cur
    if am.shape[1] != 2:
        from . import _ref
        return _ref.goodtimes_bad(mats, a, thresh, L, tol)
    if Lv > N:
        return bad.astype(bool)
    for i in range(Lv, N + 1):
        p00 = 1.0; p01 = 0.0; p10 = 0.0; p11 = 1.0
        logs = 0.0
        m = 0
        while True:
            t = p00 * p00 + p01 * p01 + p10 * p10 + p11 * p11
            det = p00 * p11 - p01 * p10
            disc = t * t - 4.0 * det * det
            if disc < 0.0:
                disc = 0.0
            cur = logs + 0.5 * log(0.5 * (t + sqrt(disc)))
            if av[i + m] - cur - th * i < -tl:
                bad[i + m] = 1
            if i + m >= N:
                break
            # advance: P <- mats[i + m] @ P
            t00 = am[i + m, 0, 0] * p00 + am[i + m, 0, 1] * p10
            t01 = am[i + m, 0, 0] * p01 + am[i + m, 0, 1] * p11
            t10 = am[i + m, 1, 0] * p00 + am[i + m, 1, 1] * p10
            t11 = am[i + m, 1, 0] * p01 + am[i + m, 1, 1] * p11
            p00 = t00; p01 = t01; p10 = t10; p11 = t11
            f = sqrt(p00 * p00 + p01 * p01 + p10 * p10 + p11 * p11)
            if f > _RESCALE_HI or (f > 0.0 and f < _RESCALE_LO):
                logs += log(f)
                p00 /= f; p01 /= f; p10 /= f; p11 /= f
            m += 1
    return bad.astype(bool)
