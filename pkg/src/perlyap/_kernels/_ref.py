"""Reference (pure NumPy) implementations of the hot kernels.

The compiled lane in ``_speedups.pyx`` mirrors these signatures.  Both lanes
return the same values up to floating point roundoff (accumulation orders
differ), and everything is deterministic for fixed inputs.
"""
from __future__ import annotations

import numpy as np

# Rescale bounds keep every stored matrix's squared Frobenius norm (and its
# fourth power, used by the closed-form 2x2 spectral norm) representable.
RESCALE_HI = 1e60
RESCALE_LO = 1e-60


def orbit_dyadic(nums, den, mat, n):
    """Iterate x -> mat @ x (mod 1) exactly on integer numerators.

    Parameters
    ----------
    nums : sequence of int, length d, each in [0, den)
    den : int, common denominator (must keep mat @ nums inside int64)
    mat : (d, d) integer matrix
    n : number of forward steps

    Returns
    -------
    coords : (n + 1, d) float array, coords[i] = numerators/den after i steps
    end : tuple of int, exact numerators after n steps
    """
    d = len(nums)
    out = np.empty((n + 1, d))
    x = np.asarray(nums, dtype=np.int64)
    m = np.asarray(mat, dtype=np.int64)
    inv_den = 1.0 / den
    out[0] = x * inv_den
    for i in range(1, n + 1):
        x = (m @ x) % den
        out[i] = x * inv_den
    return out, tuple(int(v) for v in x)


def orbit_dyadic_batch(nums, den, mat, n):
    """Vectorized variant of :func:`orbit_dyadic` over a batch of points.

    nums has shape (N, d); returns coords of shape (n + 1, N, d) plus the
    final integer numerators (N, d).
    """
    x = np.asarray(nums, dtype=np.int64)
    m = np.asarray(mat, dtype=np.int64)
    out = np.empty((n + 1,) + x.shape)
    inv_den = 1.0 / den
    out[0] = x * inv_den
    for i in range(1, n + 1):
        x = (x @ m.T) % den
        out[i] = x * inv_den
    return out, x


def cocycle_qr(mats, q0=None, chunk=8):
    """Benettin QR accumulation along one orbit.

    Multiplies `chunk` consecutive matrices before each re-orthogonalization;
    the chunk must be small enough that the partial product stays well
    conditioned (callers size it from the largest single-step log norm).

    Returns (logsum, q, min_diag): per-direction sums of log R diagonals, the
    final orthonormal frame, and the smallest diagonal seen (0.0 signals
    underflow; the caller decides how to fail).
    """
    mats = np.asarray(mats)
    n, d, _ = mats.shape
    q = np.eye(d) if q0 is None else np.array(q0, dtype=float)
    logsum = np.zeros(d)
    min_diag = np.inf
    for start in range(0, n, chunk):
        block = mats[start : start + chunk]
        b = block[0] @ q
        for j in range(1, block.shape[0]):
            b = block[j] @ b
        q, r = np.linalg.qr(b)
        diag = np.diagonal(r).copy()
        signs = np.where(diag < 0, -1.0, 1.0)
        q = q * signs
        diag = np.abs(diag)
        dmin = diag.min()
        if dmin < min_diag:
            min_diag = dmin
        if dmin <= 0.0:
            return logsum, q, 0.0
        logsum += np.log(diag)
    return logsum, q, min_diag


def cocycle_qr_multi(mats, chunk=8):
    """Batched Benettin accumulation, mats of shape (S, n, d, d).

    Returns (logsums (S, d), min_diags (S,)).
    """
    mats = np.asarray(mats)
    s, n, d, _ = mats.shape
    q = np.broadcast_to(np.eye(d), (s, d, d)).copy()
    logsum = np.zeros((s, d))
    min_diag = np.full(s, np.inf)
    for start in range(0, n, chunk):
        block = mats[:, start : start + chunk]
        b = block[:, 0] @ q
        for j in range(1, block.shape[1]):
            b = block[:, j] @ b
        q, r = np.linalg.qr(b)
        diag = np.diagonal(r, axis1=-2, axis2=-1).copy()
        signs = np.where(diag < 0, -1.0, 1.0)
        q = q * signs[:, None, :]
        diag = np.abs(diag)
        min_diag = np.minimum(min_diag, diag.min(axis=1))
        if np.any(diag <= 0.0):
            bad = diag <= 0.0
            diag[bad] = 1.0  # keep the run alive; caller checks min_diag
        logsum += np.log(diag)
    return logsum, min_diag


def scaled_products(mats, invert=False, keep_stack=True):
    """Cumulative cocycle products with running log rescaling.

    Forward (invert=False): P_m = mats[m-1] @ ... @ mats[0].
    invert=True accumulates the inverse cocycle instead:
    P_m = inv(mats[0]) @ ... @ inv(mats[m-1]), i.e. (A^m_x)^{-1}.

    With keep_stack=True returns (stack (n+1, d, d), logs (n+1,)) where the
    true product at step m is stack[m] * exp(logs[m]).  With keep_stack=False
    returns (final (d, d), log_final).
    """
    mats = np.asarray(mats)
    n, d, _ = mats.shape
    work = np.linalg.inv(mats) if invert else mats
    p = np.eye(d)
    logs = 0.0
    if keep_stack:
        stack = np.empty((n + 1, d, d))
        logarr = np.empty(n + 1)
        stack[0] = p
        logarr[0] = 0.0
    for m in range(n):
        p = (p @ work[m]) if invert else (work[m] @ p)
        f = np.sqrt((p * p).sum())
        if f > RESCALE_HI or (0.0 < f < RESCALE_LO):
            logs += np.log(f)
            p = p / f
        if keep_stack:
            stack[m + 1] = p
            logarr[m + 1] = logs
    if keep_stack:
        return stack, logarr
    return p, logs


def lognorm2_2x2(batch):
    """log of the operator (spectral) norm for a batch of 2x2 matrices.

    Scale-free: the matrix is normalized by its Frobenius norm first so the
    closed form never overflows.
    """
    b = np.asarray(batch)
    fro = np.sqrt((b * b).sum(axis=(-2, -1)))
    safe = np.where(fro > 0.0, fro, 1.0)
    bn = b / safe[..., None, None]
    t = (bn * bn).sum(axis=(-2, -1))
    det = bn[..., 0, 0] * bn[..., 1, 1] - bn[..., 0, 1] * bn[..., 1, 0]
    disc = np.maximum(t * t - 4.0 * det * det, 0.0)
    smax2 = 0.5 * (t + np.sqrt(disc))
    with np.errstate(divide="ignore"):
        return np.log(fro) + 0.5 * np.log(smax2)


def lognorm2(batch):
    """log operator norm of a batch of small square matrices."""
    b = np.asarray(batch)
    if b.shape[-1] == 2:
        return lognorm2_2x2(b)
    sv = np.linalg.svd(b, compute_uv=False)
    return np.log(sv[..., 0])


def goodtimes_bad(mats, a, thresh, L, tol):
    """Mark times violating the suffix growth condition.

    For n in [L, N] the condition is
        a[n] - a_{n-i}(f^i x) >= thresh * i - tol   for all i with L <= i <= n,
    where a_m(f^i x) is the log operator norm of the length-m product starting
    at index i.  Returns a boolean array bad of length N + 1 (True = violated;
    entries below L are False/unused).

    The sweep is m-major: one batch of partial products per shift length,
    advancing all admissible row starts i simultaneously.
    """
    mats = np.asarray(mats)
    N, d, _ = mats.shape
    a = np.asarray(a, dtype=float)
    bad = np.zeros(N + 1, dtype=bool)
    if L > N:
        return bad
    rows = np.arange(L, N + 1)
    r = len(rows)
    b = np.broadcast_to(np.eye(d), (r, d, d)).copy()
    logs = np.zeros(r)
    ivals = rows.astype(float)
    for m in range(0, N - L + 1):
        na = N - m - L + 1  # rows with i + m <= N
        if na <= 0:
            break
        cur = lognorm2(b[:na]) + logs[:na]
        nvals = rows[:na] + m
        viol = a[nvals] - cur - thresh * ivals[:na] < -tol
        bad[nvals[viol]] = True
        adv = N - m - L  # rows that still need step m -> m+1 (i + m <= N - 1)
        if adv <= 0:
            break
        idx = rows[:adv] + m
        b[:adv] = mats[idx] @ b[:adv]
        f = np.sqrt((b[:adv] * b[:adv]).sum(axis=(1, 2)))
        mask = (f > RESCALE_HI) | ((f > 0.0) & (f < RESCALE_LO))
        if mask.any():
            logs[:adv][mask] += np.log(f[mask])
            b[:adv][mask] /= f[mask, None, None]
    return bad
