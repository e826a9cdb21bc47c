"""Hoelder cocycle families over a base system.

A cocycle is generated by a matrix-valued map A(x) on base points; products
follow A^{n+k}_x = A^n_{f^k x} A^k_x with A^{-n}_x = (A^n_{f^-n x})^{-1}.
Built-in families: constant, diag_rotation (a rotation in the first two
coordinates whose angle winds with the base point, times a fixed diagonal),
triangular (constant diagonal s plus a point-modulated strictly upper
triangular part), derivative (the base matrix itself), and exterior powers of
any of these.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .base import FullShift, ShiftPoint, TorusPoint, DYADIC_DEN
from .errors import ConfigError, Overflow

_RAW_PRODUCT_CAP = 10**4
_ENTRY_CAP = 1e280
_XI_RADIUS = 60  # symbol weights below 2^-60 are lost to double precision anyway


def point_features(x) -> np.ndarray:
    """Numeric feature vector of a base point, fed to the cocycle families.

    Torus points expose their coordinates.  Shift points are embedded through
    xi(x) = sum_{n >= 0} x_n * 2^-(n+1) / (alphabet-1), which is 1-Lipschitz
    for the 2^-m metric (truncated at radius 60).
    """
    if isinstance(x, TorusPoint):
        return x.coords
    if isinstance(x, ShiftPoint):
        syms = x.symbols(0, _XI_RADIUS)
        w = 0.5 ** np.arange(1, _XI_RADIUS + 1)
        return np.array([float(syms @ w) / (x.alphabet_size - 1)])
    raise TypeError(f"unsupported point type {type(x)!r}")


def _features_batch(sys, points_or_coords) -> np.ndarray:
    if isinstance(points_or_coords, np.ndarray):
        return points_or_coords
    return np.array([point_features(p) for p in points_or_coords])


class CocycleSpec:
    """Parameterized matrix cocycle generator.

    Immutable after construction except lambda_star, which inverse_bound
    refreshes with the measured value.
    """

    FAMILIES = ("constant", "diag_rotation", "triangular", "derivative", "exterior")

    def __init__(self, dim: int, family: str, params: dict, lambda_star: Optional[float] = None):
        if family not in self.FAMILIES:
            raise ConfigError(f"unknown cocycle family {family!r}")
        self.dim = int(dim)
        self.family = family
        self.params = dict(params)
        self.lambda_star = lambda_star
        self._setup()

    def _setup(self):
        p = self.params
        d = self.dim
        if self.family in ("constant", "derivative"):
            m = np.asarray(p["matrix"], dtype=float)
            if m.shape != (d, d):
                raise ConfigError(f"matrix shape {m.shape} does not match dim {d}")
            if abs(np.linalg.det(m)) < 1e-300:
                raise ConfigError("constant cocycle matrix must be invertible")
            self._mat = m
        elif self.family == "diag_rotation":
            if d < 2:
                raise ConfigError("diag_rotation needs dim >= 2")
            c = np.asarray(p["c"], dtype=float)
            if c.shape != (d,):
                raise ConfigError("diag_rotation 'c' must have length dim")
            a = np.asarray(p.get("a", [1]), dtype=float)
            if not np.all(a == np.round(a)):
                raise ConfigError("frequency vector 'a' must be integer for continuity")
            self._c = c
            self._a = a
            self._b = float(p.get("b", 0.0))
        elif self.family == "triangular":
            self._s = float(p["s"])
            self._g = float(p["g"])
            if self._s == 0.0:
                raise ConfigError("triangular diagonal must be nonzero")
            a = np.asarray(p.get("a", None) if p.get("a") is not None else [], dtype=float)
            self._a = a if a.size else None  # None -> all-ones frequency
            self._b = float(p.get("b", 0.0))
            # first superdiagonal: the finite truncation of a weighted shift
            self._nilp = np.diag(np.ones(d - 1), k=1) if d > 1 else np.zeros((1, 1))
        elif self.family == "exterior":
            parent = p["parent"]
            if not isinstance(parent, CocycleSpec):
                parent = CocycleSpec(**parent)
                self.params["parent"] = parent
            i = int(p["power"])
            if not 1 <= i <= parent.dim:
                raise ConfigError(f"exterior power {i} out of range for dim {parent.dim}")
            if self.dim != math.comb(parent.dim, i):
                raise ConfigError("exterior dim must be C(parent dim, power)")
            self._subsets = list(itertools.combinations(range(parent.dim), i))

    def __repr__(self):
        return f"CocycleSpec(dim={self.dim}, family={self.family!r})"


def _rotation_diag_batch(thetas: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = len(c)
    n = len(thetas)
    out = np.zeros((n, d, d))
    idx = np.arange(d)
    out[:, idx, idx] = np.exp(c)
    cos, sin = np.cos(thetas), np.sin(thetas)
    e0, e1 = math.exp(c[0]), math.exp(c[1])
    out[:, 0, 0] = cos * e0
    out[:, 0, 1] = -sin * e1
    out[:, 1, 0] = sin * e0
    out[:, 1, 1] = cos * e1
    return out


def compound_matrix(m: np.ndarray, i: int) -> np.ndarray:
    """i-th multiplicative compound: minors in the lexicographic basis.

    Accepts a single matrix or a batch (..., d, d).
    """
    m = np.asarray(m, dtype=float)
    d = m.shape[-1]
    subsets = list(itertools.combinations(range(d), i))
    n = len(subsets)
    out = np.empty(m.shape[:-2] + (n, n))
    for r, rows in enumerate(subsets):
        sub = m[..., rows, :]
        for c, cols in enumerate(subsets):
            out[..., r, c] = np.linalg.det(sub[..., :, cols])
    return out


def evaluate(coc: CocycleSpec, x) -> np.ndarray:
    """The generator matrix A(x)."""
    return evaluate_batch(coc, point_features(x)[None, :])[0]


def evaluate_batch(coc: CocycleSpec, feats: np.ndarray) -> np.ndarray:
    """Vectorized generator evaluation over feature rows, -> (n, d, d)."""
    n = feats.shape[0]
    if coc.family in ("constant", "derivative"):
        return np.broadcast_to(coc._mat, (n, coc.dim, coc.dim)).copy()
    if coc.family == "diag_rotation":
        a = coc._a
        if a.shape != (feats.shape[1],):
            raise ConfigError("frequency vector length does not match base features")
        thetas = 2.0 * math.pi * (feats @ a + coc._b)
        return _rotation_diag_batch(thetas, coc._c)
    if coc.family == "triangular":
        a = coc._a if coc._a is not None else np.ones(feats.shape[1])
        # shift weight in [0, 4g]: vanishes somewhere, so return products range
        # from nearly diagonal to strongly sheared
        phi = 2.0 + 2.0 * np.cos(2.0 * math.pi * (feats @ a + coc._b))
        out = np.zeros((n, coc.dim, coc.dim))
        idx = np.arange(coc.dim)
        out[:, idx, idx] = coc._s
        out += (coc._g * phi)[:, None, None] * coc._nilp
        return out
    if coc.family == "exterior":
        parent = coc.params["parent"]
        return compound_matrix(evaluate_batch(parent, feats), int(coc.params["power"]))
    raise AssertionError(coc.family)


def evaluate_orbit(coc: CocycleSpec, sys, x, n: int) -> np.ndarray:
    """Generator matrices along x, f x, ..., f^{n-1} x (shape (n, d, d))."""
    if isinstance(sys, FullShift):
        feats = np.array([point_features(sys.step(x, i)) for i in range(n)])
    else:
        feats = sys.orbit_coords(x, max(n - 1, 0))[:n]
    return evaluate_batch(coc, feats)


def product(coc: CocycleSpec, sys, x, n: int, max_n: int = _RAW_PRODUCT_CAP) -> np.ndarray:
    """Raw cocycle product A^n_x (identity for n = 0, inverse chain for n < 0).

    Entries above 1e280 raise Overflow: beyond that callers must use the
    log-space/QR accumulation paths.
    """
    if abs(n) > max_n:
        raise ValueError(f"|n| = {abs(n)} exceeds the raw product cap {max_n}")
    d = coc.dim
    if n == 0:
        return np.eye(d)
    if n < 0:
        base = sys.step(x, n)  # f^{-|n|} x
        return np.linalg.inv(product(coc, sys, base, -n, max_n=max_n))
    mats = evaluate_orbit(coc, sys, x, n)
    p = np.eye(d)
    for m in range(n):
        p = mats[m] @ p
        if np.abs(p).max() > _ENTRY_CAP:
            raise Overflow(f"entry magnitude exceeded {_ENTRY_CAP:g} at step {m + 1}")
    return p


def exterior_power(coc: CocycleSpec, i: int) -> CocycleSpec:
    """Cocycle induced on i-fold exterior powers (dimension C(d, i))."""
    if not 1 <= i <= coc.dim:
        raise ValueError(f"exterior power {i} out of range [1, {coc.dim}]")
    if i == 1:
        return coc
    return CocycleSpec(dim=math.comb(coc.dim, i), family="exterior",
                       params={"parent": coc, "power": i})


@dataclass
class HolderEstimate:
    """Empirical Hoelder data: the smallest M with
    |A_x - A_y| + |A_x^-1 - A_y^-1| <= M dist(x, y)^alpha over the sample."""

    alpha: float
    M_const: float
    sample_count: int


def _opnorm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, 2))


def _near_pair(sys, x, rng):
    """A partner of x at distance below 1e-3, exact for either base."""
    if isinstance(x, TorusPoint):
        scale = int(1e-4 * DYADIC_DEN)
        offs = rng.integers(-scale, scale + 1, size=len(x.nums))
        if not np.any(offs):
            offs[0] = 1
        nums = tuple((a + int(o)) % DYADIC_DEN for a, o in
                     zip(TorusPoint.from_floats(x.coords).nums, offs))
        return TorusPoint(nums, DYADIC_DEN)
    m = int(rng.integers(11, 30))
    window = tuple(x.symbol(n) for n in range(-m, m + 1))
    flipped = window[:-1] + (((window[-1] + 1) % x.alphabet_size),)
    return ShiftPoint(core=x.core, window=flipped, win_start=-m,
                      alphabet_size=x.alphabet_size)


def holder_estimate(coc: CocycleSpec, sys, samples: int, alpha: float,
                    rng: Optional[np.random.Generator] = None) -> HolderEstimate:
    """Sampled Hoelder constant at exponent alpha.

    Half the pairs are independent random points, half are near-coincident
    (dist < 1e-3) to probe the local constant.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must be in (0, 1]")
    rng = rng if rng is not None else np.random.default_rng(0)
    m_best = 0.0
    count = 0
    for j in range(samples):
        x = sys.random_point(rng)
        y = sys.random_point(rng) if j % 2 == 0 else _near_pair(sys, x, rng)
        dxy = sys.dist(x, y)
        if dxy == 0.0:
            continue
        ax, ay = evaluate(coc, x), evaluate(coc, y)
        num = _opnorm(ax - ay) + _opnorm(np.linalg.inv(ax) - np.linalg.inv(ay))
        m_best = max(m_best, num / dxy**alpha)
        count += 1
    return HolderEstimate(alpha=alpha, M_const=m_best, sample_count=count)


def inverse_bound(coc: CocycleSpec, sys, samples: int,
                  rng: Optional[np.random.Generator] = None) -> float:
    """-log of the largest sampled |A(x)^-1|; stored back into lambda_star."""
    if samples < 1:
        raise ValueError("need at least 1 sample")
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = -np.inf
    for _ in range(samples):
        x = sys.random_point(rng)
        worst = max(worst, _opnorm(np.linalg.inv(evaluate(coc, x))))
    value = -math.log(worst)
    coc.lambda_star = value
    return value


def cocycle_from_config(entry: dict, sys) -> CocycleSpec:
    """Build a CocycleSpec from its JSON config entry, bound to a base."""
    family = entry.get("family")
    dim = entry.get("dim")
    params = dict(entry.get("params", {}))
    if family == "derivative":
        if sys.kind != "toral":
            raise ConfigError("derivative family needs a toral base")
        if dim is None:
            dim = sys.dim
        if dim != sys.dim:
            raise ConfigError("derivative cocycle dim must equal the base dim")
        params["matrix"] = np.asarray(sys.matrix, dtype=float)
    if dim is None:
        raise ConfigError("cocycle entry needs a 'dim'")
    try:
        return CocycleSpec(dim=int(dim), family=family, params=params,
                           lambda_star=entry.get("lambda_star"))
    except KeyError as e:
        raise ConfigError(f"cocycle family {family!r} missing parameter {e}") from e
