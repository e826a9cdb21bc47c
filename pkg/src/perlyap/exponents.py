"""Lyapunov exponent estimation and subadditive sequence machinery.

Estimators: QR (Benettin) accumulation for the full spectrum, log-rescaled
norm accumulation for the extreme exponents, exact eigenvalue data at periodic
points, subadditive traces with shifted-tail access, suffix-growth "good
time" detection, and a two-sided SVD filtration splitting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ._kernels import impl as _impl
from ._kernels import _ref
from .base import FullShift, TorusPoint
from .cocycle import CocycleSpec, evaluate_batch, evaluate_orbit, point_features
from .errors import ClusterError, DegenerateOrbit, NotPeriodic

_PERIODIC_TOL = 1e-8
_EIG_DIRECT_MAX_K = 200
_SPREAD_FLOOR = 1e-9
_GOODTIMES_TOL = 1e-9

# largest per-chunk condition growth allowed before re-orthonormalizing
_CHUNK_LOG_BUDGET = 13.8
_MAX_CHUNK = 8


# ---------------------------------------------------------------------------
# result types
# ---------------------------------------------------------------------------


@dataclass
class SpectrumEstimate:
    """Estimated Lyapunov exponents, ascending with multiplicities.

    per_seed holds the raw per-start sorted exponent vectors; exponents is
    their mean.  lambda_second is the second largest distinct value (grouping
    width 5x the seed spread), or None when only one distinct value exists.
    """

    exponents: np.ndarray
    n_steps: int
    seeds: tuple
    per_seed: np.ndarray
    per_seed_spread: float
    lambda_plus: float
    lambda_minus: float
    lambda_second: Optional[float]
    distinct: tuple = ()
    multiplicities: tuple = ()

    def gap(self) -> float:
        """Smallest gap between adjacent distinct exponents (inf if single)."""
        if len(self.distinct) < 2:
            return math.inf
        d = np.diff(np.asarray(self.distinct))
        return float(d.min())


@dataclass
class GoodTimes:
    """Suffix-growth good times on [L, N] plus their upper density."""

    ns: np.ndarray
    density: float
    L: int
    N: int

    def member_mask(self) -> np.ndarray:
        mask = np.zeros(self.N + 1, dtype=bool)
        mask[self.ns] = True
        return mask


@dataclass
class OseledetsSplitting:
    """Splitting into subspaces realizing each distinct exponent.

    subspaces is a list of (exponent, orthonormal basis (d, k)) ascending in
    the exponent; the basis columns span the corresponding invariant subspace
    at the base point.
    """

    point: object
    subspaces: List[Tuple[float, np.ndarray]]
    n_used: int

    @property
    def dim(self) -> int:
        return sum(b.shape[1] for _, b in self.subspaces)

    def exponent_of_block(self, i: int) -> float:
        return self.subspaces[i][0]

    def basis_matrix(self) -> np.ndarray:
        return np.hstack([b for _, b in self.subspaces])

    def components(self, u: np.ndarray) -> List[np.ndarray]:
        """Decompose u = sum u_i along the splitting (u_i in block i)."""
        c = self.basis_matrix()
        s = np.linalg.solve(c, np.asarray(u, dtype=float))
        out = []
        start = 0
        for _, b in self.subspaces:
            k = b.shape[1]
            out.append(b @ s[start : start + k])
            start += k
        return out


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _pick_chunk(mats: np.ndarray) -> int:
    probe = mats[: min(len(mats), 50)]
    spread = float(_ref.lognorm2(probe).max() + _ref.lognorm2(np.linalg.inv(probe)).max())
    if spread <= 0.0:
        return _MAX_CHUNK
    return max(1, min(_MAX_CHUNK, int(_CHUNK_LOG_BUDGET / max(spread, 1e-3))))


def _orbit_mats(coc, sys, x, n):
    return evaluate_orbit(coc, sys, x, n)


def _group_exponents(vals: np.ndarray, width: float):
    """Group an ascending exponent vector into distinct values."""
    groups = [[vals[0]]]
    for v in vals[1:]:
        if v - groups[-1][-1] <= width:
            groups[-1].append(v)
        else:
            groups.append([v])
    distinct = tuple(float(np.mean(g)) for g in groups)
    mult = tuple(len(g) for g in groups)
    return distinct, mult


def _build_estimate(per_seed: np.ndarray, n: int, seeds: tuple) -> SpectrumEstimate:
    exps = per_seed.mean(axis=0)
    spread = float(np.ptp(per_seed, axis=0).max()) if per_seed.shape[0] > 1 else 0.0
    width = max(5.0 * spread, _SPREAD_FLOOR)
    distinct, mult = _group_exponents(exps, width)
    lam2 = distinct[-2] if len(distinct) >= 2 else None
    return SpectrumEstimate(
        exponents=exps,
        n_steps=n,
        seeds=seeds,
        per_seed=per_seed,
        per_seed_spread=spread,
        lambda_plus=float(exps[-1]),
        lambda_minus=float(exps[0]),
        lambda_second=lam2,
        distinct=distinct,
        multiplicities=mult,
    )


# ---------------------------------------------------------------------------
# spectrum estimators
# ---------------------------------------------------------------------------


def qr_spectrum(coc: CocycleSpec, sys, x, n: int, seeds: int = 1,
                rng: Optional[np.random.Generator] = None) -> SpectrumEstimate:
    """Full Lyapunov spectrum by QR accumulation along orbits.

    x is the first starting point; seeds - 1 further uniformly random starts
    are drawn from rng (a fixed default generator when omitted, so results
    are deterministic).  Exponents are averaged over starts after sorting.
    """
    if n < 100:
        raise ValueError("qr_spectrum needs n >= 100")
    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    points = [x] + [sys.random_point(rng) for _ in range(seeds - 1)]
    d = coc.dim
    per_seed = np.empty((seeds, d))

    batchable = (
        seeds > 1
        and not isinstance(sys, FullShift)
        and len({p.den for p in points}) == 1
        and seeds * n * d * d <= 2 * 10**7
        and sys._int64_safe(points[0].den)
    )
    if batchable:
        coords = sys.orbit_coords_batch(points, n - 1)  # (n, S, d_base)
        flat = coords.transpose(1, 0, 2).reshape(seeds * n, -1)
        mats = evaluate_batch(coc, flat).reshape(seeds, n, d, d)
        chunk = _pick_chunk(mats[0])
        logsums, min_diags = _impl.cocycle_qr_multi(mats, chunk=chunk)
        if np.any(min_diags <= 0.0) or not np.all(np.isfinite(logsums)):
            raise DegenerateOrbit("QR diagonal underflow during accumulation")
        per_seed = np.sort(logsums / n, axis=1)
    else:
        for s, p in enumerate(points):
            mats = _orbit_mats(coc, sys, p, n)
            chunk = _pick_chunk(mats)
            logsum, _, min_diag = _impl.cocycle_qr(mats, chunk=chunk)
            if min_diag <= 0.0 or not np.all(np.isfinite(logsum)):
                raise DegenerateOrbit("QR diagonal underflow during accumulation")
            per_seed[s] = np.sort(logsum / n)
    return _build_estimate(per_seed, n, tuple(points))


def norm_exponents(coc: CocycleSpec, sys, x, n: int) -> Tuple[float, float]:
    """(lambda_plus, lambda_minus) from log-rescaled norm accumulation.

    lambda_plus = log|A^n_x| / n and lambda_minus = -log|(A^n_x)^-1| / n,
    with running rescaling so no intermediate overflows.
    """
    if n < 100:
        raise ValueError("norm_exponents needs n >= 100")
    mats = _orbit_mats(coc, sys, x, n)
    p, lp = _impl.scaled_products(mats, invert=False, keep_stack=False)
    q, lq = _impl.scaled_products(mats, invert=True, keep_stack=False)
    lam_plus = (float(_ref.lognorm2(p[None])[0]) + lp) / n
    lam_minus = -(float(_ref.lognorm2(q[None])[0]) + lq) / n
    if lam_minus > lam_plus + 1e-9:
        raise DegenerateOrbit("norm estimates out of order")
    return lam_plus, lam_minus


def _periodic_check(sys, p, k):
    if k <= 0:
        raise NotPeriodic(f"period must be positive, got {k}")
    if sys.dist(sys.step(p, k), p) > _PERIODIC_TOL:
        raise NotPeriodic(f"point is not {k}-periodic within {_PERIODIC_TOL:g}")


def periodic_data_batch(coc: CocycleSpec, sys, points: Sequence, k: int):
    """Spectra and norm data of the return products at periodic points.

    Returns (spectra (N, d) ascending, norm_plus (N,), norm_minus (N,)) where
    norm_plus = log|A^k_p| / k and norm_minus = -log|(A^k_p)^-1| / k.
    Products are accumulated with per-step rescaling; eigenvalue moduli are
    assembled from the forward product (top half) and the inverse product
    (bottom half) so small moduli stay accurate.
    """
    d = coc.dim
    npts = len(points)
    if isinstance(sys, FullShift):
        feats = np.array([[point_features(sys.step(p, m)) for p in points] for m in range(k)])
    else:
        feats = sys.orbit_coords_batch(points, k - 1 if k > 1 else 0)[:k]
    pf = np.eye(d)[None].repeat(npts, axis=0)
    pb = pf.copy()
    logf = np.zeros(npts)
    logb = np.zeros(npts)
    for m in range(k):
        mats = evaluate_batch(coc, feats[m].reshape(npts, -1))
        pf = mats @ pf
        pb = pb @ np.linalg.inv(mats)
        for arr, logs in ((pf, logf), (pb, logb)):
            f = np.sqrt((arr * arr).sum(axis=(1, 2)))
            mask = (f > _ref.RESCALE_HI) | ((f > 0) & (f < _ref.RESCALE_LO))
            if mask.any():
                logs[mask] += np.log(f[mask])
                arr[mask] /= f[mask, None, None]
    ef = np.sort(np.log(np.abs(np.linalg.eigvals(pf))), axis=1)  # ascending
    eb = np.sort(np.log(np.abs(np.linalg.eigvals(pb))), axis=1)
    spectra = np.empty((npts, d))
    half = d // 2
    # moduli of A^k_p: low half from the inverse product, rest from the forward
    spectra[:, :half] = -(eb[:, ::-1][:, :half] + logb[:, None])
    spectra[:, half:] = ef[:, half:] + logf[:, None]
    spectra = np.sort(spectra, axis=1) / k
    svf = np.linalg.svd(pf, compute_uv=False)
    svb = np.linalg.svd(pb, compute_uv=False)
    norm_plus = (np.log(svf[:, 0]) + logf) / k
    norm_minus = -(np.log(svb[:, 0]) + logb) / k
    return spectra, norm_plus, norm_minus


def periodic_exponents(coc: CocycleSpec, sys, p, k: int):
    """Exponents of the cocycle at a periodic point p = f^k p.

    Returns (SpectrumEstimate, (norm_plus, norm_minus)): the spectrum is
    (1/k) log of the eigenvalue moduli of the return product A^k_p, the norm
    pair is (log|A^k_p|/k, -log|(A^k_p)^-1|/k).  For k beyond the direct
    eigenvalue range the spectrum falls back to QR accumulation along the
    periodic orbit.
    """
    _periodic_check(sys, p, k)
    if k <= _EIG_DIRECT_MAX_K:
        spectra, npl, nmi = periodic_data_batch(coc, sys, [p], k)
        exps = spectra[0]
        norm_pair = (float(npl[0]), float(nmi[0]))
    else:
        loops = max(2, int(math.ceil(4000.0 / k)))
        est = qr_spectrum(coc, sys, p, loops * k, seeds=1)
        exps = est.exponents
        mats = _orbit_mats(coc, sys, p, k)
        pf, lf = _impl.scaled_products(mats, invert=False, keep_stack=False)
        pb, lb = _impl.scaled_products(mats, invert=True, keep_stack=False)
        norm_pair = (
            (float(_ref.lognorm2(pf[None])[0]) + lf) / k,
            -(float(_ref.lognorm2(pb[None])[0]) + lb) / k,
        )
    per_seed = exps[None, :]
    est = _build_estimate(per_seed, k, (p,))
    return est, norm_pair


# ---------------------------------------------------------------------------
# subadditive traces
# ---------------------------------------------------------------------------


class SubadditiveTrace:
    """Log norm sequences a_n = log|A^n_x| and at_n = log|(A^n_x)^-1|.

    Shifted tails a_m(f^i x) are exposed through shifted_row; full products
    are re-accumulated per row (numerically fresh, never formed by dividing
    stored products).
    """

    def __init__(self, coc, sys, x, N, mats, a, a_tilde):
        self.coc = coc
        self.sys = sys
        self.x = x
        self.N = int(N)
        self.a = a
        self.a_tilde = a_tilde
        self.nu_a = float(a[-1] / N)
        self.nu_a_tilde = float(a_tilde[-1] / N)
        self._mats = mats
        self._mats_invT = None

    def _inv_t(self):
        if self._mats_invT is None:
            self._mats_invT = np.ascontiguousarray(
                np.linalg.inv(self._mats).transpose(0, 2, 1)
            )
        return self._mats_invT

    def shifted_row(self, i: int, kind: str = "norm") -> np.ndarray:
        """a_m(f^i x) (kind='norm') or at_m(f^i x) (kind='inv'), m = 0..N-i."""
        if not 0 <= i <= self.N:
            raise ValueError("row start out of range")
        mats = self._mats[i:] if kind == "norm" else self._inv_t()[i:]
        stack, logs = _impl.scaled_products(mats, invert=False, keep_stack=True)
        return _ref.lognorm2(stack) + logs

    def table(self, kind: str = "norm") -> list:
        """All shifted rows (list indexed by i); O(N^2), small N only."""
        return [self.shifted_row(i, kind) for i in range(self.N + 1)]


def subadditive_trace(coc: CocycleSpec, sys, x, N: int) -> SubadditiveTrace:
    """Build the subadditive trace of length N along the orbit of x."""
    if N < 1 or N > 10**4:
        raise ValueError("N must be in [1, 10^4]; use norm_exponents beyond that")
    mats = _orbit_mats(coc, sys, x, N)
    stack_f, logs_f = _impl.scaled_products(mats, invert=False, keep_stack=True)
    a = _ref.lognorm2(stack_f) + logs_f
    stack_b, logs_b = _impl.scaled_products(mats, invert=True, keep_stack=True)
    a_tilde = _ref.lognorm2(stack_b) + logs_b
    a[0] = 0.0
    a_tilde[0] = 0.0
    return SubadditiveTrace(coc, sys, x, N, mats, a, a_tilde)


def good_times(traces: Sequence[SubadditiveTrace], eps: float, L: int,
               lambdas: Optional[Sequence[float]] = None,
               tol: float = _GOODTIMES_TOL) -> GoodTimes:
    """Times n in [L, N] with suffix growth at least (lambda - eps) * i.

    Every trace contributes both of its subadditive sequences (norm and
    inverse norm); n qualifies when, for every sequence j and every i with
    L <= i <= n,  a_n - a_{n-i}(f^i x) >= (lambda_j - eps) * i - tol.
    lambdas overrides the per-sequence exponents (default: each sequence's
    own nu estimate, ordered [norm_1, inv_1, norm_2, inv_2, ...]).
    Also returns the upper density |S| / N.
    """
    if not traces:
        raise ValueError("need at least one trace")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if L < 1:
        raise ValueError("L must be >= 1")
    N = traces[0].N
    x0 = traces[0].x
    for t in traces[1:]:
        if t.N != N or t.x != x0:
            raise ValueError("traces must share one base orbit")
    series = []
    for t in traces:
        series.append((t._mats, t.a, t.nu_a))
        series.append((t._inv_t(), t.a_tilde, t.nu_a_tilde))
    if lambdas is not None:
        if len(lambdas) != len(series):
            raise ValueError(f"lambdas must have length {len(series)}")
        series = [(m, a, lam) for (m, a, _), lam in zip(series, lambdas)]
    bad = np.zeros(N + 1, dtype=bool)
    for mats, a, lam in series:
        bad |= _impl.goodtimes_bad(mats, a, lam - eps, L, tol)
    ns = np.array([n for n in range(L, N + 1) if not bad[n]], dtype=int)
    return GoodTimes(ns=ns, density=len(ns) / N, L=L, N=N)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


def _intersect_subspace(b1: np.ndarray, b2: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis of the (numerical) intersection of two column spans."""
    w = b1.T @ b2
    u, sig, _ = np.linalg.svd(w)
    if dim > len(sig) or sig[dim - 1] < 0.9:
        raise ClusterError("filtrations do not intersect at the expected dimension")
    basis = b1 @ u[:, :dim]
    q, _ = np.linalg.qr(basis)
    return q


def oseledets_splitting(coc: CocycleSpec, sys, x, n: int,
                        spectrum: Optional[SpectrumEstimate] = None) -> OseledetsSplitting:
    """Numerical splitting by intersecting forward and backward filtrations.

    Right singular vectors of the forward product give the forward-slow flag,
    right singular vectors of the backward product the backward-slow flag;
    block i is their intersection.  Requires the exponent groups from the
    spectrum estimate to be separated by more than 10x the seed spread.
    """
    if spectrum is None:
        spectrum = qr_spectrum(coc, sys, x, max(n, 100), seeds=4,
                               rng=np.random.default_rng(7))
    distinct, dims = spectrum.distinct, spectrum.multiplicities
    m = len(distinct)
    if m < 2:
        raise ClusterError("single Lyapunov exponent: trivial splitting")
    gap = spectrum.gap()
    if spectrum.per_seed_spread > 0 and gap < 10.0 * spectrum.per_seed_spread:
        raise ClusterError("exponent groups closer than 10x the seed spread")
    d = coc.dim
    span = distinct[-1] - distinct[0]
    # filtration subspaces converge like e^{-gap n} but the product condition
    # number grows like e^{span n}; balance accuracy against conditioning
    n_svd = min(n, max(10, int(math.ceil(24.0 / gap))), max(10, int(24.0 / max(span, gap))))

    mats_f = _orbit_mats(coc, sys, x, n_svd)
    pf, _ = _impl.scaled_products(mats_f, invert=False, keep_stack=False)
    vf = np.linalg.svd(pf)[2].T  # columns, descending singular values

    y = sys.step(x, -n_svd)
    mats_rev = _orbit_mats(coc, sys, y, n_svd)
    pr, _ = _impl.scaled_products(mats_rev, invert=False, keep_stack=False)
    # A^{-n}_x = (A^n_{f^-n x})^{-1}: its right singular frame, ordered by its
    # own descending singular values, is the forward product's left frame at
    # f^-n x in reversed order (no explicit ill-conditioned inversion).
    vb = np.linalg.svd(pr)[0][:, ::-1]

    cum = np.concatenate([[0], np.cumsum(dims)])  # ascending group boundaries
    subspaces = []
    for i in range(m):
        lo, hi = cum[i], cum[i + 1]
        fwd_slow = vf[:, d - hi :]   # grows at most like e^{lambda_i n}
        bwd_slow = vb[:, lo:]        # contracts backward at least like e^{-lambda_i n}
        basis = _intersect_subspace(fwd_slow, bwd_slow, hi - lo)
        subspaces.append((float(distinct[i]), basis))
    split = OseledetsSplitting(point=x, subspaces=subspaces, n_used=n_svd)
    _validate_splitting(coc, sys, x, split, mats_f, spectrum)
    return split


def _validate_splitting(coc, sys, x, split, mats, spectrum):
    n = split.n_used
    tolerance = 3.0 * max(spectrum.per_seed_spread, 36.0 / n, _SPREAD_FLOOR)
    stack, logs = _impl.scaled_products(mats[:n], invert=False, keep_stack=False)
    for lam, basis in split.subspaces:
        for col in range(basis.shape[1]):
            v = basis[:, col]
            rate = (math.log(float(np.linalg.norm(stack @ v))) + logs) / n
            if abs(rate - lam) > max(tolerance, 0.05 * max(abs(lam), 1.0)):
                raise ClusterError(
                    f"block rate {rate:.6f} is not within tolerance of {lam:.6f}"
                )
    bases = [b for _, b in split.subspaces]
    for i in range(len(bases)):
        for j in range(i + 1, len(bases)):
            sig = np.linalg.svd(bases[i].T @ bases[j], compute_uv=False)
            if sig.size and sig[0] > 1.0 - 1e-6:
                raise ClusterError("subspaces are not separated")
