"""Hyperbolic base systems: toral automorphisms and full shifts.

Points are stored exactly so orbit iteration is free of floating point drift:
torus points are integer numerator vectors over an explicit denominator
(random points are drawn dyadic with denominator 2^53, closing and enumeration
points carry |det(M^k - I)|), shift points are two-sided eventually periodic
words.  All operations are pure functions of their inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._kernels import impl as _impl
from ._kernels import _ref
from .errors import BadPeriod, CapExceeded, ConfigError, SingularClose

DYADIC_DEN = 1 << 53
_INT64_SAFE = 1 << 62
_FIT_SKIP = 2  # drop the first/last couple of shadowing steps from the slope fit


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusPoint:
    """Point on the d-torus with exact rational coordinates nums/den."""

    nums: tuple
    den: int

    def __post_init__(self):
        nums = tuple(int(v) % int(self.den) for v in self.nums)
        object.__setattr__(self, "nums", nums)
        object.__setattr__(self, "den", int(self.den))

    @classmethod
    def from_floats(cls, coords, den=DYADIC_DEN):
        """Quantize float coordinates onto the dyadic grid of denominator den."""
        nums = tuple(int(round(float(c) * den)) % den for c in coords)
        return cls(nums, den)

    @property
    def coords(self) -> np.ndarray:
        return np.asarray(self.nums, dtype=float) / self.den

    @property
    def dim(self) -> int:
        return len(self.nums)


@dataclass(frozen=True)
class ShiftPoint:
    """Two-sided eventually periodic word.

    The symbol at index n is window[n - win_start] when that index is covered
    and core[n mod len(core)] otherwise; the shift map rotates the core and
    slides the window.
    """

    core: tuple
    window: tuple = ()
    win_start: int = 0
    alphabet_size: int = 2

    def __post_init__(self):
        core = tuple(int(s) for s in self.core)
        window = tuple(int(s) for s in self.window)
        if not core:
            raise ValueError("core word must be nonempty")
        a = int(self.alphabet_size)
        if any(not 0 <= s < a for s in core + window):
            raise ValueError("symbols must lie in [0, alphabet_size)")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "window", window)
        if not window:
            object.__setattr__(self, "win_start", 0)

    def symbol(self, n: int) -> int:
        if self.window and self.win_start <= n < self.win_start + len(self.window):
            return self.window[n - self.win_start]
        return self.core[n % len(self.core)]

    def symbols(self, lo: int, hi: int) -> np.ndarray:
        """Symbols at indices lo..hi-1 as an int array."""
        return np.array([self.symbol(n) for n in range(lo, hi)], dtype=np.int64)


# ---------------------------------------------------------------------------
# shadowing report
# ---------------------------------------------------------------------------


@dataclass
class ShadowReport:
    """Periodic point produced by orbit closing plus per-step shadowing data.

    distances[i] = dist(f^i x, f^i p) for i = 0..k; fitted_gamma is the
    least-squares decay rate of log distance against min(i, k - i), and delta
    is the smallest constant making dist <= delta * exp(-gamma * min(i, k-i))
    hold for every i.
    """

    p: object
    k: int
    distances: np.ndarray
    fitted_gamma: float
    delta: float


_DIST_FLOOR = 1e-13  # below this, float coordinate noise dominates the distances


def _fit_shadowing(distances: np.ndarray, k: int):
    idx = np.arange(k + 1)
    m = np.minimum(idx, k - idx)
    pos = distances > 0.0
    if not pos.any():
        return math.inf, 0.0
    # The distances form a V in i: stable decay down to the crossover step,
    # unstable decay (backward) after it.  Fit against min(i, k-i) only on the
    # pure branches: drop the endpoints, a margin around the measured
    # crossover (where both branches contribute), and the float noise floor.
    masked = np.where(pos & (distances > _DIST_FLOOR), distances, np.inf)
    i_star = int(np.argmin(masked))
    lo_cut = min(i_star, k - i_star)
    branch = (idx <= lo_cut - _FIT_SKIP) | (idx >= k - lo_cut + _FIT_SKIP)
    use = pos & (m >= _FIT_SKIP) & branch & (distances > _DIST_FLOOR)
    if use.sum() >= 2 and len(np.unique(m[use])) >= 2:
        slope = np.polyfit(m[use], np.log(distances[use]), 1)[0]
        gamma = -float(slope)
    else:
        gamma = math.inf
    if not math.isfinite(gamma):
        return gamma, float(distances.max())
    clear = pos & (distances > _DIST_FLOOR)
    delta = float(np.max(distances[clear] * np.exp(gamma * m[clear]))) if clear.any() else 0.0
    return gamma, delta


# ---------------------------------------------------------------------------
# integer linear algebra helpers (exact, python ints)
# ---------------------------------------------------------------------------


def _int_mat(m) -> list:
    return [[int(v) for v in row] for row in m]


def _int_matmul(a, b):
    n, k, m = len(a), len(b), len(b[0])
    return [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(m)] for i in range(n)]


def _int_matvec(a, v):
    return [sum(a[i][j] * v[j] for j in range(len(v))) for i in range(len(a))]


def _int_identity(d):
    return [[1 if i == j else 0 for j in range(d)] for i in range(d)]


def _int_det(m) -> int:
    """Bareiss fraction-free determinant of a small integer matrix."""
    a = [row[:] for row in m]
    n = len(a)
    sign = 1
    prev = 1
    for t in range(n - 1):
        if a[t][t] == 0:
            for r in range(t + 1, n):
                if a[r][t] != 0:
                    a[t], a[r] = a[r], a[t]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(t + 1, n):
            for j in range(t + 1, n):
                a[i][j] = (a[i][j] * a[t][t] - a[i][t] * a[t][j]) // prev
        prev = a[t][t]
    return sign * a[n - 1][n - 1]


def _int_adjugate(m) -> list:
    n = len(m)
    if n == 1:
        return [[1]]
    adj = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[m[r][c] for c in range(n) if c != j] for r in range(n) if r != i]
            adj[j][i] = (-1) ** (i + j) * _int_det(minor)
    return adj


def _diagonalize_unimodular(a):
    """Integer diagonalization U @ A @ V = S with U, V unimodular, S diagonal.

    Plain elimination by repeated division steps; divisibility of the diagonal
    is not enforced (not needed for solution-set enumeration).
    """
    a = [row[:] for row in a]
    n = len(a)
    u = _int_identity(n)
    v = _int_identity(n)
    for t in range(n):
        while True:
            # pivot: smallest nonzero |entry| in the trailing block
            piv = None
            best = None
            for i in range(t, n):
                for j in range(t, n):
                    if a[i][j] != 0 and (best is None or abs(a[i][j]) < best):
                        best = abs(a[i][j])
                        piv = (i, j)
            if piv is None:
                break
            pi, pj = piv
            if pi != t:
                a[t], a[pi] = a[pi], a[t]
                u[t], u[pi] = u[pi], u[t]
            if pj != t:
                for row in a:
                    row[t], row[pj] = row[pj], row[t]
                for row in v:
                    row[t], row[pj] = row[pj], row[t]
            clean = True
            for i in range(t + 1, n):
                q = a[i][t] // a[t][t]
                if q:
                    for j in range(t, n):
                        a[i][j] -= q * a[t][j]
                    for j in range(n):
                        u[i][j] -= q * u[t][j]
                if a[i][t] != 0:
                    clean = False
            for j in range(t + 1, n):
                q = a[t][j] // a[t][t]
                if q:
                    for i in range(t, n):
                        a[i][j] -= q * a[i][t]
                    for i in range(n):
                        v[i][j] -= q * v[i][t]
                if a[t][j] != 0:
                    clean = False
            if clean:
                break
        if a[t][t] < 0:
            for j in range(t, n):
                a[t][j] = -a[t][j]
            for j in range(n):
                u[t][j] = -u[t][j]
    return u, a, v


# ---------------------------------------------------------------------------
# toral automorphism
# ---------------------------------------------------------------------------


class ToralAutomorphism:
    """Hyperbolic automorphism of the d-torus given by a unimodular matrix.

    The matrix must be integer with |det| = 1 and no eigenvalue of modulus 1
    (checked within 1e-9 at construction).  gamma_hyp is the log of the
    smallest-modulus expanding eigenvalue.
    """

    kind = "toral"

    def __init__(self, matrix):
        m = np.asarray(matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigError("toral matrix must be square")
        if not np.all(m == np.round(m)):
            raise ConfigError("toral matrix must be integer")
        self.matrix = m.astype(np.int64)
        self.dim = m.shape[0]
        det = _int_det(_int_mat(self.matrix))
        if abs(det) != 1:
            raise ConfigError(f"toral matrix must be unimodular, |det| = {abs(det)}")
        eig = np.abs(np.linalg.eigvals(self.matrix.astype(float)))
        if np.any(np.abs(eig - 1.0) < 1e-9):
            raise ConfigError("toral matrix has an eigenvalue of modulus 1")
        # adjugate/det is an exact integer inverse since |det| = 1
        adj = _int_adjugate(_int_mat(self.matrix))
        if det < 0:
            adj = [[-v for v in row] for row in adj]
        self.inverse = np.array(adj, dtype=np.int64)
        self.gamma_hyp = float(np.log(eig[eig > 1.0]).min())
        self._pow_cache = {1: _int_mat(self.matrix)}

    # -- exact arithmetic ---------------------------------------------------

    def _matrix_power(self, k: int) -> list:
        if k in self._pow_cache:
            return self._pow_cache[k]
        best = max(j for j in self._pow_cache if j <= k)
        m = self._pow_cache[best]
        base = self._pow_cache[1]
        for j in range(best, k):
            m = _int_matmul(base, m)
            self._pow_cache[j + 1] = m
        return self._pow_cache[k]

    def _int64_safe(self, den: int) -> bool:
        rowsum = int(np.abs(self.matrix).sum(axis=1).max())
        return den * rowsum < _INT64_SAFE

    def random_point(self, rng: np.random.Generator) -> TorusPoint:
        nums = rng.integers(0, DYADIC_DEN, size=self.dim)
        return TorusPoint(tuple(int(v) for v in nums), DYADIC_DEN)

    # -- operations -----------------------------------------------------------

    def step(self, x: TorusPoint, n: int = 1) -> TorusPoint:
        """Apply the automorphism n times (n may be negative or zero)."""
        mat = _int_mat(self.matrix) if n >= 0 else _int_mat(self.inverse)
        nums = [int(v) for v in x.nums]
        for _ in range(abs(n)):
            nums = [v % x.den for v in _int_matvec(mat, nums)]
        return TorusPoint(tuple(nums), x.den)

    def dist(self, x: TorusPoint, y: TorusPoint) -> float:
        """Euclidean distance between closest integer translates."""
        diff = np.abs(x.coords - y.coords)
        diff = np.minimum(diff, 1.0 - diff)
        return float(np.sqrt((diff * diff).sum()))

    def orbit_coords(self, x: TorusPoint, n: int) -> np.ndarray:
        """Float coordinates of x, f x, ..., f^n x ((|n|+1, d) array).

        Negative n iterates the inverse.  Exact integer arithmetic throughout;
        the int64 kernel is used whenever the denominator allows it.
        """
        mat = self.matrix if n >= 0 else self.inverse
        steps = abs(n)
        if self._int64_safe(x.den):
            coords, _ = _impl.orbit_dyadic(x.nums, x.den, mat, steps)
            return coords
        out = np.empty((steps + 1, self.dim))
        nums = [int(v) for v in x.nums]
        imat = _int_mat(mat)
        out[0] = np.asarray(nums, dtype=float) / x.den
        for i in range(1, steps + 1):
            nums = [v % x.den for v in _int_matvec(imat, nums)]
            out[i] = np.asarray(nums, dtype=float) / x.den
        return out

    def orbit_coords_batch(self, points: Sequence[TorusPoint], n: int) -> np.ndarray:
        """Batched orbit_coords for points sharing one denominator."""
        dens = {p.den for p in points}
        if len(dens) != 1:
            raise ValueError("batched orbits need a common denominator")
        den = dens.pop()
        if not self._int64_safe(den):
            return np.stack([self.orbit_coords(p, n) for p in points], axis=1)
        mat = self.matrix if n >= 0 else self.inverse
        nums = np.array([p.nums for p in points], dtype=np.int64)
        coords, _ = _ref.orbit_dyadic_batch(nums, den, mat, abs(n))
        return coords

    def find_recurrence(self, x: TorusPoint, beta: float, k_max: int = 10000, window=None) -> list:
        """All k in the search range with dist(x, f^k x) < beta, ascending.

        window = (lo, hi) restricts to lo <= k <= hi; otherwise 1 <= k <= k_max.
        An empty list means no return was found (caller widens the range).
        """
        if beta <= 0:
            raise ValueError("beta must be positive")
        if window is not None:
            lo, hi = int(math.ceil(window[0])), int(math.floor(window[1]))
            if lo < 1 or hi < lo:
                return []
        else:
            lo, hi = 1, int(k_max)
        coords = self.orbit_coords(x, hi)
        diff = np.abs(coords[lo : hi + 1] - coords[0])
        diff = np.minimum(diff, 1.0 - diff)
        d = np.sqrt((diff * diff).sum(axis=1))
        return [int(k) for k in (np.nonzero(d < beta)[0] + lo)]

    def close_orbit(self, x: TorusPoint, k: int) -> ShadowReport:
        """Construct the exact period-k point shadowing the segment x..f^k x.

        Solves (M^k - I) p = m over the rationals, where m is the integer part
        of the lifted displacement with f^k x lifted to the representative
        nearest x coordinate-wise.  The returned point satisfies f^k p = p
        exactly.
        """
        if k <= 0:
            raise BadPeriod(f"period must be positive, got {k}")
        mk = self._matrix_power(k)
        c = [[mk[i][j] - (1 if i == j else 0) for j in range(self.dim)] for i in range(self.dim)]
        det = _int_det(c)
        if det == 0:
            raise SingularClose("M^k - I is singular")
        q = x.den
        end = self.step(x, k)
        # exact integer part of M^k x - x, with the displacement centered
        m0 = [(a - b) // q for a, b in zip(_int_matvec(mk, list(x.nums)), end.nums)]
        m = []
        for j in range(self.dim):
            dnum = (end.nums[j] - x.nums[j]) % q
            if 2 * dnum > q:
                dnum -= q
            m.append(m0[j] + (end.nums[j] - x.nums[j] - dnum) // q)
        adj = _int_adjugate(c)
        sol = _int_matvec(adj, m)  # p = sol / det
        den = abs(det)
        sgn = 1 if det > 0 else -1
        p = TorusPoint(tuple((sgn * v) % den for v in sol), den)
        ox = self.orbit_coords(x, k)
        op = self.orbit_coords(p, k)
        diff = np.abs(ox - op)
        diff = np.minimum(diff, 1.0 - diff)
        distances = np.sqrt((diff * diff).sum(axis=1))
        gamma, delta = _fit_shadowing(distances, k)
        return ShadowReport(p=p, k=k, distances=distances, fitted_gamma=gamma, delta=delta)

    def enumerate_periodic(self, k: int, cap: int = 10**6) -> list:
        """All p with f^k p = p; the count equals |det(M^k - I)|.

        Solutions are generated from an exact unimodular diagonalization of
        M^k - I, each with denominator |det(M^k - I)|.
        """
        if k <= 0:
            raise BadPeriod(f"period must be positive, got {k}")
        mk = self._matrix_power(k)
        c = [[mk[i][j] - (1 if i == j else 0) for j in range(self.dim)] for i in range(self.dim)]
        det = _int_det(c)
        if det == 0:
            raise SingularClose("M^k - I is singular")
        count = abs(det)
        if count > cap:
            raise CapExceeded(count, cap)
        _, s, v = _diagonalize_unimodular(c)
        sd = [abs(s[i][i]) for i in range(self.dim)]
        stride = [count // si for si in sd]
        points = []
        # p = V @ (t_i / s_i) mod 1, t_i in [0, s_i)
        for idx in np.ndindex(*sd):
            w = [int(idx[i]) * stride[i] for i in range(self.dim)]
            nums = tuple(x % count for x in _int_matvec(v, w))
            points.append(TorusPoint(nums, count))
        points.sort(key=lambda p: p.nums)
        return points


# ---------------------------------------------------------------------------
# full shift
# ---------------------------------------------------------------------------


class FullShift:
    """Two-sided full shift on alphabet_size symbols with the 2^-m metric.

    gamma_hyp = ln 2: the metric base is 2 regardless of the alphabet, and the
    symbolic closing below realizes exactly that decay rate.
    """

    kind = "shift"
    _CMP_PAD = 4

    def __init__(self, alphabet_size: int = 2):
        a = int(alphabet_size)
        if a < 2:
            raise ConfigError("alphabet_size must be at least 2")
        self.alphabet_size = a
        self.dim = 1
        self.gamma_hyp = math.log(2.0)

    def random_point(self, rng: np.random.Generator, core_len: int = 64) -> ShiftPoint:
        core = tuple(int(v) for v in rng.integers(0, self.alphabet_size, size=core_len))
        return ShiftPoint(core=core, alphabet_size=self.alphabet_size)

    def step(self, x: ShiftPoint, n: int = 1) -> ShiftPoint:
        p = len(x.core)
        rot = n % p
        core = x.core[rot:] + x.core[:rot]
        return ShiftPoint(core=core, window=x.window, win_start=x.win_start - n,
                          alphabet_size=x.alphabet_size)

    def _cmp_radius(self, x: ShiftPoint, y: ShiftPoint) -> int:
        ext = 0
        for pt in (x, y):
            if pt.window:
                ext = max(ext, abs(pt.win_start), abs(pt.win_start + len(pt.window)))
        return ext + math.lcm(len(x.core), len(y.core)) + self._CMP_PAD

    def dist(self, x: ShiftPoint, y: ShiftPoint) -> float:
        """2^-m with m the smallest |n| where the words differ; 0 if equal.

        Eventually periodic words agree everywhere iff they agree out to the
        window extent plus the lcm of the core lengths, so equality is exact.
        """
        radius = self._cmp_radius(x, y)
        for m in range(radius + 1):
            for n in (m, -m) if m else (0,):
                if x.symbol(n) != y.symbol(n):
                    return 2.0 ** (-m)
        return 0.0

    def find_recurrence(self, x: ShiftPoint, beta: float, k_max: int = 10000, window=None) -> list:
        if beta <= 0:
            raise ValueError("beta must be positive")
        if window is not None:
            lo, hi = int(math.ceil(window[0])), int(math.floor(window[1]))
            if lo < 1 or hi < lo:
                return []
        else:
            lo, hi = 1, int(k_max)
        # dist < beta iff symbols agree for all |n| <= m_need
        m_need = int(math.floor(-math.log2(beta))) if beta <= 1.0 else -1
        if m_need < 0:
            return list(range(lo, hi + 1))
        syms = x.symbols(-m_need, hi + m_need + 1)  # index n -> syms[n + m_need]
        target = syms[: 2 * m_need + 1]
        win = np.lib.stride_tricks.sliding_window_view(syms, 2 * m_need + 1)
        hits = (win == target).all(axis=1)  # hits[k] = agreement of sigma^k x with x
        return [int(k) for k in range(lo, hi + 1) if hits[k]]

    def close_orbit(self, x: ShiftPoint, k: int) -> ShadowReport:
        """Symbolic closing: repeat the first k symbols of x periodically."""
        if k <= 0:
            raise BadPeriod(f"period must be positive, got {k}")
        core = tuple(x.symbol(n) for n in range(k))
        p = ShiftPoint(core=core, alphabet_size=x.alphabet_size)
        distances = np.array([self.dist(self.step(x, i), self.step(p, i)) for i in range(k + 1)])
        gamma, delta = _fit_shadowing(distances, k)
        return ShadowReport(p=p, k=k, distances=distances, fitted_gamma=gamma, delta=delta)

    def enumerate_periodic(self, k: int, cap: int = 10**6) -> list:
        if k <= 0:
            raise BadPeriod(f"period must be positive, got {k}")
        count = self.alphabet_size**k
        if count > cap:
            raise CapExceeded(count, cap)
        points = []
        for idx in np.ndindex(*([self.alphabet_size] * k)):
            points.append(ShiftPoint(core=tuple(int(v) for v in idx),
                                     alphabet_size=self.alphabet_size))
        return points


def base_from_config(cfg: dict):
    """Build a base system from its JSON config dict."""
    kind = cfg.get("kind")
    if kind == "toral":
        if "matrix" not in cfg:
            raise ConfigError("toral base needs a 'matrix' entry")
        return ToralAutomorphism(cfg["matrix"])
    if kind == "shift":
        return FullShift(cfg.get("alphabet", cfg.get("alphabet_size", 2)))
    raise ConfigError(f"unknown base kind {kind!r}")
