"""Point-dependent Lyapunov metrics, regularity sets, cones, drift bounds.

Two norms are built here: the block-diagonal Lyapunov scalar product adapted
to a full splitting (lyapunov_gram), and the cruder two-sided series norm
that only needs the extreme exponents (lyapunov_norm_pm).  On top of them:
K(x) distortion levels and membership in the regularity sets {K <= ell},
the norm-inequality chain checks, cone invariance along a shadowing orbit,
and the drift bound for cocycle products at a shadowing point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ._kernels import impl as _impl
from ._kernels import _ref
from .cocycle import CocycleSpec, evaluate, evaluate_orbit
from .errors import HypothesisViolated, NoSplitting, TailTooLarge
from .exponents import OseledetsSplitting, norm_exponents, oseledets_splitting, qr_spectrum

_TAIL_BUDGET = 1e-6
_CHECK_TOL = 1e-6


# ---------------------------------------------------------------------------
# splittings for the metric
# ---------------------------------------------------------------------------


def exact_splitting(coc: CocycleSpec, sys, x) -> Optional[OseledetsSplitting]:
    """Analytic splitting for point-independent families, None otherwise.

    Eigenvalues of the constant generator are grouped by modulus; each group
    contributes the real invariant subspace spanned by the real and imaginary
    parts of its eigenvectors.
    """
    if coc.family not in ("constant", "derivative"):
        return None
    m = coc._mat
    vals, vecs = np.linalg.eig(m)
    logmod = np.log(np.abs(vals))
    order = np.argsort(logmod)
    groups: List[List[int]] = [[order[0]]]
    for j in order[1:]:
        if logmod[j] - logmod[groups[-1][-1]] <= 1e-9:
            groups[-1].append(j)
        else:
            groups.append([j])
    subspaces = []
    for g in groups:
        cols = []
        for j in g:
            v = vecs[:, j]
            cols.append(np.real(v))
            if np.abs(np.imag(v)).max() > 1e-12:
                cols.append(np.imag(v))
        raw = np.column_stack(cols)
        q, r = np.linalg.qr(raw)
        rank = int((np.abs(np.diag(r)) > 1e-10).sum())
        basis = q[:, :rank]
        if basis.shape[1] != len(g):
            basis = q[:, : len(g)]
        subspaces.append((float(np.mean(logmod[g])), basis))
    return OseledetsSplitting(point=x, subspaces=subspaces, n_used=0)


def splitting_at(coc: CocycleSpec, sys, x, n: int = 200,
                 spectrum=None) -> OseledetsSplitting:
    """Splitting at x: analytic when the family allows it, numerical otherwise."""
    split = exact_splitting(coc, sys, x)
    if split is not None:
        return split
    return oseledets_splitting(coc, sys, x, n, spectrum=spectrum)


# ---------------------------------------------------------------------------
# Lyapunov scalar product (full splitting version)
# ---------------------------------------------------------------------------


@dataclass
class LyapunovMetricData:
    """Gram matrix of the Lyapunov scalar product in the standard basis.

    K_eps = sqrt(largest eigenvalue of gram) is the distortion against the
    background norm; truncation_tail bounds the series mass discarded at
    |n| > N_trunc.
    """

    point: object
    eps: float
    gram: np.ndarray
    N_trunc: int
    truncation_tail: float
    K_eps: float


def _oblique_projectors(subspaces) -> list:
    """P_i u = the block-i component of u along the direct sum of the others."""
    c = np.hstack([b for _, b in subspaces])
    cinv = np.linalg.inv(c)
    projs = []
    start = 0
    for _, b in subspaces:
        k = b.shape[1]
        projs.append(b @ cinv[start : start + k, :])
        start += k
    return projs


def _transport_subspaces(subspaces, a):
    """Push every block one step forward by a and re-orthonormalize."""
    out = []
    for lam, b in subspaces:
        q, _ = np.linalg.qr(a @ b)
        out.append((lam, q[:, : b.shape[1]]))
    return out


def _gram_series(mats, subspaces0, eps, n_trunc, factor, backward, exact):
    """Per-block weighted series sums over one direction of the orbit.

    mats[n-1] maps step n-1 to step n of the traversal (already inverted for
    the backward direction).  Iterated block bases are reprojected onto the
    (transported) splitting every step: forward iteration of a slow block is
    otherwise swamped by rounding noise growing at the top exponent.
    Returns (per-block gram contributions, tail bound, steps actually used).
    """
    m = len(subspaces0)
    sums = [np.zeros((b.shape[1], b.shape[1])) for _, b in subspaces0]
    vs = [b.copy() for _, b in subspaces0]
    scales = [0.0] * m
    subspaces = [(lam, b.copy()) for lam, b in subspaces0]
    projs = _oblique_projectors(subspaces)
    last_terms = [0.0] * m
    n_used = n_trunc
    sign = -1.0 if backward else 1.0
    for n in range(1, n_trunc + 1):
        if not exact:
            subspaces = _transport_subspaces(subspaces, mats[n - 1])
            projs = _oblique_projectors(subspaces)
            pnorm = max(float(np.abs(p).max()) for p in projs)
            if pnorm > 1e8:
                # transported splitting has degenerated; stop the series here
                n_used = n - 1
                break
        for i, (lam, _) in enumerate(subspaces0):
            v = mats[n - 1] @ vs[i]
            v = projs[i] @ v
            f = np.sqrt((v * v).sum())
            if f > _ref.RESCALE_HI or (0.0 < f < _ref.RESCALE_LO):
                scales[i] += math.log(f)
                v = v / f
            vs[i] = v
            logw = 2.0 * scales[i] - 2.0 * lam * sign * n - eps * n
            tracev = float((v * v).sum())
            if logw + math.log(max(tracev, 1e-300)) > 400.0:
                raise TailTooLarge(
                    "Lyapunov series diverges: splitting inconsistent with exponents"
                )
            term = factor * math.exp(logw) * (v.T @ v)
            sums[i] = sums[i] + term
            last_terms[i] = float(np.linalg.norm(term, 2))
    r = math.exp(-eps / 2.0)
    tail = sum(last_terms) * r / (1.0 - r) + (math.exp(-eps * n_used) if n_used < n_trunc else 0.0)
    return sums, tail, n_used


def lyapunov_gram(coc: CocycleSpec, sys, x, eps: float,
                  splitting: OseledetsSplitting, N_trunc: Optional[int] = None) -> LyapunovMetricData:
    """Gram matrix of the exponentially weighted scalar product at x.

    Distinct splitting blocks are orthogonal by definition; within block i the
    product is dim * sum_n <A^n u, A^n v> e^{-2 lambda_i n - eps |n|},
    truncated at |n| <= N_trunc (default ceil(40/eps)) with a reported
    geometric tail bound.  Raises TailTooLarge when the series diverges
    (splitting/exponent mismatch) or the tail exceeds its budget.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if N_trunc is None:
        N_trunc = int(math.ceil(40.0 / eps))
    if N_trunc < 10:
        raise ValueError("N_trunc must be at least 10")
    d = coc.dim
    exact = coc.family in ("constant", "derivative")
    fwd = evaluate_orbit(coc, sys, x, N_trunc)
    rev = evaluate_orbit(coc, sys, sys.step(x, -N_trunc), N_trunc)
    bwd_inv = np.linalg.inv(rev)[::-1]
    sums_f, tail_f, _ = _gram_series(fwd, splitting.subspaces, eps, N_trunc,
                                     float(d), backward=False, exact=exact)
    sums_b, tail_b, _ = _gram_series(bwd_inv, splitting.subspaces, eps, N_trunc,
                                     float(d), backward=True, exact=exact)
    tail_total = tail_f + tail_b
    if tail_total > _TAIL_BUDGET * d:
        raise TailTooLarge(f"series tail {tail_total:g} exceeds budget; raise N_trunc")
    blocks = []
    for i, (_, basis) in enumerate(splitting.subspaces):
        g0 = float(d) * (basis.T @ basis)  # n = 0 term
        blocks.append(g0 + sums_f[i] + sums_b[i])
    c = splitting.basis_matrix()
    cinv = np.linalg.inv(c)
    gblk = np.zeros((d, d))
    start = 0
    for g in blocks:
        k = g.shape[0]
        gblk[start : start + k, start : start + k] = g
        start += k
    gram = cinv.T @ gblk @ cinv
    gram = 0.5 * (gram + gram.T)
    k_eps = float(math.sqrt(max(np.linalg.eigvalsh(gram).max(), 0.0)))
    return LyapunovMetricData(point=x, eps=eps, gram=gram, N_trunc=N_trunc,
                              truncation_tail=float(tail_total), K_eps=k_eps)


def lyap_norm(metric: LyapunovMetricData, u: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    return float(math.sqrt(max(u @ metric.gram @ u, 0.0)))


def pesin_member(metric: LyapunovMetricData, ell: float) -> bool:
    """Membership in the regularity set {K_eps(x) <= ell}."""
    if ell <= 1:
        raise ValueError("ell must exceed 1")
    return metric.K_eps <= ell


# ---------------------------------------------------------------------------
# crude two-sided Lyapunov norm (extreme exponents only)
# ---------------------------------------------------------------------------


def _crude_norm_columns(coc, sys, x, v, eps, lam_plus, lam_minus, n_trunc):
    """Two-sided series norm of every column of v; returns (norms, tail)."""
    d, cols = v.shape
    fwd = evaluate_orbit(coc, sys, x, n_trunc)
    rev = evaluate_orbit(coc, sys, sys.step(x, -n_trunc), n_trunc)
    bwd_inv = np.linalg.inv(rev)[::-1]
    total = np.sqrt((v * v).sum(axis=0))  # n = 0 term
    tail = 0.0
    for sign, mats, rate in (
        (1.0, fwd, -(lam_plus + eps)),
        (-1.0, bwd_inv, lam_minus - eps),
    ):
        w = v.copy()
        s = 0.0
        term = np.zeros(cols)
        for n in range(1, n_trunc + 1):
            w = mats[n - 1] @ w
            f = np.sqrt((w * w).sum())
            if f > _ref.RESCALE_HI or (0.0 < f < _ref.RESCALE_LO):
                s += math.log(f)
                w = w / f
            weight = math.exp(s + rate * n)
            term = weight * np.sqrt((w * w).sum(axis=0))
            total = total + term
        r = math.exp(-eps / 2.0)
        tail += float(term.max()) * r / (1.0 - r) if cols else 0.0
    return total, tail


def lyapunov_norm_pm(coc: CocycleSpec, sys, x, u, eps: float,
                     N_trunc: Optional[int] = None,
                     lam_plus: Optional[float] = None,
                     lam_minus: Optional[float] = None,
                     n_est: int = 2000) -> float:
    """Two-sided series norm sum_{n>=0} |A^n u| e^{-(lam_+ + eps) n}
    + sum_{n>=1} |A^-n u| e^{(lam_- - eps) n}, truncated at N_trunc.

    Always at least |u|.  The extreme exponents are estimated on the orbit of
    x when not supplied.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if N_trunc is None:
        N_trunc = int(math.ceil(40.0 / eps))
    if lam_plus is None or lam_minus is None:
        lam_plus, lam_minus = norm_exponents(coc, sys, x, n_est)
    u = np.asarray(u, dtype=float).reshape(-1, 1)
    norms, tail = _crude_norm_columns(coc, sys, x, u, eps, lam_plus, lam_minus, N_trunc)
    value = float(norms[0])
    if value > 0 and tail > _TAIL_BUDGET * value:
        raise TailTooLarge(f"series tail {tail:g} too large for value {value:g}")
    return value


# ---------------------------------------------------------------------------
# norm-inequality chain report
# ---------------------------------------------------------------------------


@dataclass
class NormBoundReport:
    """Margins (in log units, >= 0 means the inequality holds) per check."""

    rows: List[Tuple[int, str, float]]
    tol: float
    passed: bool
    worst: dict = field(default_factory=dict)

    def worst_margin(self, check: Optional[str] = None) -> float:
        vals = [m for _, c, m in self.rows if check is None or c == check]
        return min(vals) if vals else math.inf


def _lyap_opnorm(a: np.ndarray, g_from: np.ndarray, g_to: np.ndarray) -> float:
    l_from = np.linalg.cholesky(g_from)
    l_to = np.linalg.cholesky(g_to)
    m = l_to.T @ a @ np.linalg.inv(l_from.T)
    return float(np.linalg.norm(m, 2))


def _unit_block_samples(basis: np.ndarray, rng: np.random.Generator, count: int) -> list:
    k = basis.shape[1]
    out = [basis[:, j] for j in range(k)]
    for _ in range(max(0, count - k)):
        w = rng.normal(size=k)
        w /= np.linalg.norm(w)
        out.append(basis @ w)
    return out


def verify_norm_bounds(coc: CocycleSpec, sys, x, eps: float, n_max: int,
                       splitting: Optional[OseledetsSplitting] = None,
                       N_trunc: Optional[int] = None,
                       samples: int = 4,
                       rng: Optional[np.random.Generator] = None) -> NormBoundReport:
    """Check the four Lyapunov-norm inequality families along an orbit segment.

    For n = 1..n_max and sampled vectors in each splitting block: per-block
    growth bounds, the operator-norm growth window, the comparison with the
    background norm, the slow variation of K, and the operator-norm sandwich
    between Lyapunov and background norms.  Failures are report rows with
    negative margins, not exceptions.
    """
    rng = rng if rng is not None else np.random.default_rng(11)
    if splitting is None:
        splitting = splitting_at(coc, sys, x)
    lam_top = splitting.subspaces[-1][0]
    rows: List[Tuple[int, str, float]] = []
    mats = evaluate_orbit(coc, sys, x, n_max)

    # claimed block exponents against measured background growth rates
    rate_probe = np.eye(coc.dim)
    for n in range(n_max):
        rate_probe = mats[n] @ rate_probe
    for lam, basis in splitting.subspaces:
        for col in range(basis.shape[1]):
            rate = math.log(max(float(np.linalg.norm(rate_probe @ basis[:, col])), 1e-300)) / n_max
            slack = eps + 0.1 * max(abs(lam), 1.0)
            rows.append((n_max, "block_rate", slack - abs(rate - lam)))

    splits = [splitting]
    pts = [x]
    metrics = []
    try:
        metrics.append(lyapunov_gram(coc, sys, x, eps, splitting, N_trunc))
        for n in range(1, n_max + 1):
            pts.append(sys.step(pts[-1], 1))
            sp_n = _transport_or_recompute(coc, sys, splits[-1], pts[-1])
            splits.append(sp_n)
            metrics.append(lyapunov_gram(coc, sys, pts[-1], eps, sp_n, N_trunc))
    except TailTooLarge:
        rows.append((len(metrics), "series_convergence", -math.inf))
        worst = {}
        for _, check, margin in rows:
            worst[check] = min(worst.get(check, math.inf), margin)
        return NormBoundReport(rows=rows, tol=_CHECK_TOL, passed=False, worst=worst)
    tail_slack = 10.0 * max(m.truncation_tail for m in metrics)
    tol = _CHECK_TOL + tail_slack

    prod = np.eye(coc.dim)
    for n in range(1, n_max + 1):
        prod = mats[n - 1] @ prod
        g0, gn = metrics[0].gram, metrics[n].gram
        # per-block growth window
        for bi, (lam, basis) in enumerate(splitting.subspaces):
            for u in _unit_block_samples(basis, rng, samples):
                nu0 = math.sqrt(u @ g0 @ u)
                v = prod @ u
                nun = math.sqrt(v @ gn @ v)
                ratio = math.log(nun) - math.log(nu0)
                rows.append((n, "block_lower", ratio - (n * lam - eps * n)))
                rows.append((n, "block_upper", (n * lam + eps * n) - ratio))
        # operator norm growth window
        op = math.log(_lyap_opnorm(prod, g0, gn))
        rows.append((n, "opnorm_lower", op - n * (lam_top - eps)))
        rows.append((n, "opnorm_upper", n * (lam_top + eps) - op))
        # K varies slowly
        k0, kn = math.log(metrics[0].K_eps), math.log(metrics[n].K_eps)
        rows.append((n, "K_lower", kn - (k0 - eps * n)))
        rows.append((n, "K_upper", (k0 + eps * n) - kn))
    # background-norm comparison at every visited point
    for n, metric in enumerate(metrics):
        ev = np.linalg.eigvalsh(metric.gram)
        rows.append((n, "lower_bound_law", 0.5 * math.log(max(ev.min(), 1e-300))))
        for _ in range(samples):
            u = rng.normal(size=coc.dim)
            u /= np.linalg.norm(u)
            nu = math.sqrt(u @ metric.gram @ u)
            rows.append((n, "K_definition", math.log(metric.K_eps) - math.log(nu)))
    # operator-norm sandwich between background and Lyapunov norms
    for _ in range(samples):
        a = rng.normal(size=(coc.dim, coc.dim))
        na = math.log(np.linalg.norm(a, 2))
        for n in range(1, min(n_max, 3) + 1):
            op = math.log(_lyap_opnorm(a, metrics[0].gram, metrics[n].gram))
            rows.append((n, "sandwich_lower", op - (na - math.log(metrics[0].K_eps))))
            rows.append((n, "sandwich_upper", (na + math.log(metrics[n].K_eps)) - op))

    worst: dict = {}
    for _, check, margin in rows:
        worst[check] = min(worst.get(check, math.inf), margin)
    passed = all(m >= -tol for m in worst.values())
    return NormBoundReport(rows=rows, tol=tol, passed=passed, worst=worst)


def _transport_or_recompute(coc, sys, splitting, y):
    exact = exact_splitting(coc, sys, y)
    if exact is not None:
        return exact
    # push each block forward one step and re-orthonormalize
    a = evaluate(coc, splitting.point)
    subspaces = []
    for lam, basis in splitting.subspaces:
        img = a @ basis
        q, _ = np.linalg.qr(img)
        subspaces.append((lam, q[:, : basis.shape[1]]))
    return OseledetsSplitting(point=y, subspaces=subspaces, n_used=splitting.n_used)


# ---------------------------------------------------------------------------
# cones along a shadowing orbit
# ---------------------------------------------------------------------------


@dataclass
class ConeSpec:
    """Cone data along an orbit segment.

    At each point: the top block E1, its complement E2, and the Lyapunov
    gram; theta < 1 is the contraction factor of the image cone.
    """

    x: object
    k: int
    theta: float
    eps: float
    lam: float
    lam_second: float
    splittings: List[OseledetsSplitting]
    metrics: List[LyapunovMetricData]


@dataclass
class ConeReport:
    rows: List[Tuple[int, str, float]]
    failure_fraction: float
    theta: float

    def worst_margin(self, check: Optional[str] = None) -> float:
        vals = [m for _, c, m in self.rows if check is None or c == check]
        return min(vals) if vals else math.inf


def build_cones(coc: CocycleSpec, sys, x, k: int, eps: float,
                splitting: Optional[OseledetsSplitting] = None,
                N_trunc: Optional[int] = None,
                theta: Optional[float] = None) -> ConeSpec:
    """Cone family along x..f^k x with theta = e^{lam' - lam + 4 eps}."""
    if splitting is None:
        splitting = splitting_at(coc, sys, x)
    if len(splitting.subspaces) < 2:
        raise NoSplitting("single Lyapunov exponent: cone argument is vacuous")
    lam = splitting.subspaces[-1][0]
    lam2 = splitting.subspaces[-2][0]
    if theta is None:
        theta = math.exp(lam2 - lam + 4.0 * eps)
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta = {theta:g} not in (0, 1); decrease eps")
    splits = [splitting]
    pts = [x]
    for i in range(1, k + 1):
        pts.append(sys.step(pts[-1], 1))
        splits.append(_transport_or_recompute(coc, sys, splits[-1], pts[-1]))
    metrics = [
        lyapunov_gram(coc, sys, pts[i], eps, splits[i], N_trunc) for i in range(k + 1)
    ]
    return ConeSpec(x=x, k=k, theta=theta, eps=eps, lam=lam, lam_second=lam2,
                    splittings=splits, metrics=metrics)


def _circle_samples(count: int) -> np.ndarray:
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    angles = 2.0 * math.pi * np.arange(count) / golden
    return np.column_stack([np.cos(angles), np.sin(angles)])


def _sphere_samples(dim: int, count: int) -> np.ndarray:
    """Deterministic low-discrepancy directions on the unit sphere."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])[: max(count, 1)]
    if dim == 2:
        return _circle_samples(count)
    if dim == 3:
        # Fibonacci lattice on S^2
        i = np.arange(count) + 0.5
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        z = 1.0 - 2.0 * i / count
        r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    rng = np.random.Generator(np.random.PCG64(9176 + dim))
    v = rng.normal(size=(count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _split_two_blocks(split: OseledetsSplitting):
    """(top basis, complement basis): E1 = fastest block, E2 = the rest."""
    top = split.subspaces[-1][1]
    rest = [b for _, b in split.subspaces[:-1]]
    return top, np.hstack(rest)


def _components_two(split: OseledetsSplitting, w: np.ndarray):
    comps = split.components(w)
    return comps[-1], sum(comps[:-1])


def cone_check(coc: CocycleSpec, sys, x, p, k: int, cones: ConeSpec,
               samples: int = 32) -> ConeReport:
    """Verify cone invariance and expansion along the shadowing pair (x, p).

    At each step i the generator is evaluated at f^i p while cones and norms
    live at f^i x.  Sampled vectors cover the cone boundary (t = 1) and the
    inside; checks are the image containment |w2| <= theta |w1| and the
    expansion |w1|_{i+1} >= e^{lam - 2 eps} |u1|_i.  The final row family
    checks the return inclusion of the theta-cone at step k into the cone at
    step 0.
    """
    theta = cones.theta
    lam, eps = cones.lam, cones.eps
    rows: List[Tuple[int, str, float]] = []
    fails = 0
    total = 0
    tval = [0.0, 0.25, 0.5, 0.75, 1.0]
    pt_p = p
    for i in range(k):
        split_i, split_n = cones.splittings[i], cones.splittings[i + 1]
        g_i, g_n = cones.metrics[i].gram, cones.metrics[i + 1].gram
        b1, b2 = _split_two_blocks(split_i)
        d1, d2 = b1.shape[1], b2.shape[1]
        a = evaluate(coc, pt_p)
        dirs1 = _sphere_samples(d1, samples)
        dirs2 = _sphere_samples(d2, samples)
        for j in range(min(len(dirs1), len(dirs2))):
            u1 = b1 @ dirs1[j]
            u1 = u1 / math.sqrt(u1 @ g_i @ u1)
            u2 = b2 @ dirs2[j]
            u2 = u2 / math.sqrt(u2 @ g_i @ u2)
            for t in tval:
                u = u1 + t * u2
                w = a @ u
                w1, w2 = _components_two(split_n, w)
                n1 = math.sqrt(max(w1 @ g_n @ w1, 0.0))
                n2 = math.sqrt(max(w2 @ g_n @ w2, 0.0))
                contain = math.log(theta * n1) - math.log(max(n2, 1e-300))
                expand = math.log(max(n1, 1e-300)) - (lam - 2.0 * eps)
                rows.append((i, "containment", contain))
                rows.append((i, "expansion", expand))
                total += 2
                fails += (contain < 0) + (expand < 0)
        pt_p = sys.step(pt_p, 1)
    # return inclusion: theta-cone at step k sits inside the cone at step 0
    split_k, split_0 = cones.splittings[k], cones.splittings[0]
    g_k, g_0 = cones.metrics[k].gram, cones.metrics[0].gram
    b1k, b2k = _split_two_blocks(split_k)
    dirs1 = _sphere_samples(b1k.shape[1], samples)
    dirs2 = _sphere_samples(b2k.shape[1], samples)
    for j in range(min(len(dirs1), len(dirs2))):
        u1 = b1k @ dirs1[j]
        u1 = u1 / math.sqrt(u1 @ g_k @ u1)
        u2 = b2k @ dirs2[j]
        u2 = u2 / math.sqrt(u2 @ g_k @ u2)
        u = u1 + theta * u2
        u1b, u2b = _components_two(split_0, u)
        n1 = math.sqrt(max(u1b @ g_0 @ u1b, 0.0))
        n2 = math.sqrt(max(u2b @ g_0 @ u2b, 0.0))
        margin = math.log(max(n1, 1e-300)) - math.log(max(n2, 1e-300))
        rows.append((k, "return_inclusion", margin))
        total += 1
        fails += margin < 0
    return ConeReport(rows=rows, failure_fraction=fails / max(total, 1), theta=theta)


# ---------------------------------------------------------------------------
# drift bound at a shadowing point
# ---------------------------------------------------------------------------


@dataclass
class DriftBoundCheck:
    """Empirical constants for the product growth bound at a shadowing point.

    c_est is the smallest c with |A^i_p| <= ell e^{c ell delta^alpha}
    e^{i (lam_+ + eps)} for all i = 0..k (0 when delta = 0 and the bound
    holds bare); pass_per_i additionally requires the two-step chain through
    the Lyapunov operator norm |A^i_p|_{x_i <- x_0}.
    """

    x: object
    p: object
    k: int
    ell: float
    delta: float
    alpha: float
    gamma: float
    eps: float
    lam_plus: float
    lam_minus: float
    c_est: float
    c_est_inv: float
    pass_per_i: List[bool]
    passed: bool


def drift_bound(coc: CocycleSpec, sys, x, p, k: int, ell: float, eps: float,
                alpha: float, gamma: float,
                lam_plus: Optional[float] = None,
                lam_minus: Optional[float] = None,
                N_trunc: Optional[int] = None,
                samples: int = 48,
                n_est: int = 2000) -> DriftBoundCheck:
    """Check the shadowing drift bound for the products A^i_p, i = 0..k.

    Requires eps < gamma * alpha.  delta is measured from the shadowing
    distances; the Lyapunov operator norms in the middle of the chain use the
    crude two-sided norms at the orbit of x, maximized over sampled
    directions.
    """
    if eps >= gamma * alpha:
        raise HypothesisViolated(f"eps = {eps:g} must be below gamma*alpha = {gamma * alpha:g}")
    if ell <= 1:
        raise ValueError("ell must exceed 1")
    if N_trunc is None:
        N_trunc = int(math.ceil(40.0 / eps))
    if lam_plus is None or lam_minus is None:
        lam_plus, lam_minus = norm_exponents(coc, sys, x, n_est)
    d = coc.dim

    mvals = np.minimum(np.arange(k + 1), k - np.arange(k + 1))
    dists = np.array([sys.dist(sys.step(x, i), sys.step(p, i)) for i in range(k + 1)])
    clear = dists > 1e-13
    delta = float(np.max(dists[clear] * np.exp(gamma * mvals[clear]))) if clear.any() else 0.0

    mats_p = evaluate_orbit(coc, sys, p, max(k, 1))
    stack_f, logs_f = _impl.scaled_products(mats_p[:k], invert=False, keep_stack=True)
    stack_b, logs_b = _impl.scaled_products(mats_p[:k], invert=True, keep_stack=True)
    log_norm = _ref.lognorm2(stack_f) + logs_f
    log_norm_inv = _ref.lognorm2(stack_b) + logs_b
    log_norm[0] = 0.0
    log_norm_inv[0] = 0.0

    # crude Lyapunov operator norms |A^i_p|_{x_i <- x_0}, sampled directions
    v0 = _sphere_samples(d, samples).T
    den, _ = _crude_norm_columns(coc, sys, x, v0, eps, lam_plus, lam_minus, N_trunc)
    log_mid = np.zeros(k + 1)
    xi = x
    for i in range(1, k + 1):
        xi = sys.step(xi, 1)
        img = (stack_f[i] @ v0) * math.exp(logs_f[i])
        num, _ = _crude_norm_columns(coc, sys, xi, img, eps, lam_plus, lam_minus, N_trunc)
        log_mid[i] = float(np.log(num / den).max())

    irange = np.arange(k + 1)
    scale = ell * delta**alpha
    excess = log_norm - math.log(ell) - irange * (lam_plus + eps)
    excess_inv = (log_norm_inv - math.log(ell) - eps * mvals
                  - irange * (-lam_minus + eps))
    if scale > 0:
        c_est = float(max(np.max(excess) / scale, 0.0))
        c_est_inv = float(max(np.max(excess_inv) / scale, 0.0))
    else:
        c_est = 0.0 if np.all(excess <= _CHECK_TOL) else math.inf
        c_est_inv = 0.0 if np.all(excess_inv <= _CHECK_TOL) else math.inf
    bound = math.log(ell) + c_est * scale + irange * (lam_plus + eps)
    pass_per_i = [
        bool(log_norm[i] <= math.log(ell) + log_mid[i] + _CHECK_TOL)
        and bool(log_norm[i] <= bound[i] + _CHECK_TOL)
        for i in range(k + 1)
    ]
    passed = all(pass_per_i) and math.isfinite(c_est) and math.isfinite(c_est_inv)
    return DriftBoundCheck(x=x, p=p, k=k, ell=ell, delta=delta, alpha=alpha,
                           gamma=gamma, eps=eps, lam_plus=lam_plus,
                           lam_minus=lam_minus, c_est=c_est, c_est_inv=c_est_inv,
                           pass_per_i=pass_per_i, passed=passed)
