"""Experiment orchestration: configs, theorem pipelines, CSV reports.

Two periodic-point sources feed the pipelines: exhaustive enumeration (exact
ground truth, small periods) and recurrence detection plus orbit closing (the
shadowing mechanism, any period).  Rows are tagged with their source and all
output is deterministic for a fixed config and rng_seed.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .base import base_from_config
from .cocycle import (
    CocycleSpec,
    cocycle_from_config,
    evaluate,
    evaluate_orbit,
    exterior_power,
    holder_estimate,
)
from .errors import CapExceeded, ConfigError, NoReturn, Overflow
from .exponents import (
    SpectrumEstimate,
    good_times,
    norm_exponents,
    periodic_data_batch,
    qr_spectrum,
    subadditive_trace,
)
from .pesin import build_cones, cone_check, lyapunov_gram, splitting_at

_CONFIG_KEYS = {
    "base", "cocycles", "eps", "eps_prime", "ell", "ell_prime", "sigma",
    "alpha", "k_max", "n_steps", "seeds", "L", "beta", "rng_seed",
    "output_dir", "enum_cap", "trace_len", "n_floor", "closing_tries",
    "pesin_samples", "max_closing_rows",
}


@dataclass
class ExperimentConfig:
    """Validated experiment parameters plus the constructed base and cocycles."""

    base: object
    cocycles: List[CocycleSpec]
    eps: float
    eps_prime: float
    ell: float
    ell_prime: float
    alpha: float
    sigma: float
    gamma: float
    k_max: int
    n_steps: int
    seeds: int
    L: int
    beta: float
    rng_seed: int
    output_dir: str
    enum_cap: int = 10**6
    trace_len: int = 2000
    n_floor: int = 0
    closing_tries: int = 200
    pesin_samples: int = 50
    max_closing_rows: int = 50

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "base" not in raw or "cocycles" not in raw:
            raise ConfigError("config needs 'base' and 'cocycles'")
        base = base_from_config(raw["base"])
        entries = raw["cocycles"]
        if not entries:
            raise ConfigError("need at least one cocycle")
        cocycles = [cocycle_from_config(e, base) for e in entries]
        eps = float(raw.get("eps", 0.05))
        eps_prime = float(raw.get("eps_prime", 4.0 * eps))
        alpha = float(raw.get("alpha", 1.0))
        gamma = 0.9 * base.gamma_hyp
        sigma = raw.get("sigma")
        sigma = float(sigma) if sigma is not None else 4.0 * eps / (alpha * gamma)
        ell = float(raw.get("ell", 40.0))
        ell_prime = float(raw.get("ell_prime", ell))
        seeds = int(raw.get("seeds", 4))
        n_steps = int(raw.get("n_steps", 10**5))
        k_max = int(raw.get("k_max", 8))
        rng_seed = int(raw.get("rng_seed", 0))
        beta = float(raw.get("beta", 1e-3))
        cfg = cls(
            base=base,
            cocycles=cocycles,
            eps=eps,
            eps_prime=eps_prime,
            ell=ell,
            ell_prime=ell_prime,
            alpha=alpha,
            sigma=sigma,
            gamma=gamma,
            k_max=k_max,
            n_steps=n_steps,
            seeds=seeds,
            L=int(raw.get("L", 20)),
            beta=beta,
            rng_seed=rng_seed,
            output_dir=str(raw.get("output_dir", "out")),
            enum_cap=int(raw.get("enum_cap", 10**6)),
            trace_len=int(raw.get("trace_len", 2000)),
            n_floor=int(raw.get("n_floor", 0)),
            closing_tries=int(raw.get("closing_tries", 200)),
            pesin_samples=int(raw.get("pesin_samples", 50)),
            max_closing_rows=int(raw.get("max_closing_rows", 50)),
        )
        cfg._validate()
        return cfg

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.from_dict(raw)

    def _validate(self):
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        bound = min(self.alpha * self.gamma / 4.0, self.eps_prime)
        if self.eps >= bound:
            raise ConfigError(
                f"eps = {self.eps:g} must be below min(alpha*gamma/4, eps_prime) = {bound:g}"
            )
        if self.ell <= 1 or self.ell_prime <= 1:
            raise ConfigError("ell and ell_prime must exceed 1")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.n_steps < 100:
            raise ConfigError("n_steps must be >= 100")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.L < 1:
            raise ConfigError("L must be >= 1")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must fit in 64 bits")

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.rng_seed))


# ---------------------------------------------------------------------------
# report rows
# ---------------------------------------------------------------------------


@dataclass
class PeriodicRow:
    k: int
    point_id: int
    source: str
    lambdas: Tuple[float, ...]
    errs: Tuple[float, ...]
    norm_err_plus: float
    norm_err_minus: float
    delta: float
    fitted_gamma: float


@dataclass
class ApproxReport:
    """Periodic-approximation results for one cocycle."""

    mu_spectrum: SpectrumEstimate
    mu_norm_plus: float
    mu_norm_minus: float
    rows: List[PeriodicRow]
    best_by_k: dict = field(default_factory=dict)
    ext_best_by_k: dict = field(default_factory=dict)
    caps_hit: List[int] = field(default_factory=list)
    large_k_achieved: bool = False
    goodtimes: object = None

    def row_errors(self) -> np.ndarray:
        return np.array([max(r.errs) for r in self.rows])

    def envelope(self, grid: Sequence[int]) -> List[float]:
        """Decreasing envelope of best_by_k over the grid: running minimum of
        the best max-exponent error as longer periods are allowed."""
        out = []
        cur = math.inf
        for k in grid:
            if k in self.best_by_k:
                cur = min(cur, self.best_by_k[k])
            out.append(cur)
        return out


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    if x == 0.0:
        x = 0.0  # normalize -0.0
    return f"{x:.17g}"


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_spectrum_csv(path: str, est: SpectrumEstimate) -> None:
    rows = []
    for s in range(est.per_seed.shape[0]):
        for i in range(est.per_seed.shape[1]):
            rows.append((s, i, est.per_seed[s, i]))
    _write_csv(path, ["seed", "i", "lambda"], rows)


def write_periodic_csv(path: str, rows: List[PeriodicRow], d: int) -> None:
    header = (["k", "point_id", "source"]
              + [f"lambda_{i + 1}" for i in range(d)]
              + [f"err_{i + 1}" for i in range(d)]
              + ["norm_err_plus", "norm_err_minus", "delta", "fitted_gamma"])
    out = []
    for r in sorted(rows, key=lambda r: (r.k, r.source, r.point_id)):
        out.append([r.k, r.point_id, r.source, *r.lambdas, *r.errs,
                    r.norm_err_plus, r.norm_err_minus, r.delta, r.fitted_gamma])
    _write_csv(path, header, out)


def write_goodtimes_csv(path: str, gt) -> None:
    mask = gt.member_mask()
    rows = []
    members = 0
    for n in range(1, gt.N + 1):
        members += bool(mask[n])
        rows.append((n, int(mask[n]), members / n))
    _write_csv(path, ["n", "member", "density_so_far"], rows)


# ---------------------------------------------------------------------------
# periodic-point pipeline
# ---------------------------------------------------------------------------


def _mu_estimates(cfg: ExperimentConfig, coc: CocycleSpec, rng):
    x0 = cfg.base.random_point(rng)
    mu = qr_spectrum(coc, cfg.base, x0, cfg.n_steps, seeds=cfg.seeds, rng=rng)
    lp, lm = norm_exponents(coc, cfg.base, x0, cfg.n_steps)
    return x0, mu, lp, lm


def _rows_for_points(cfg, coc, points, k, source, mu, lp, lm, extra=None):
    spectra, npl, nmi = periodic_data_batch(coc, cfg.base, points, k)
    rows = []
    mu_exp = mu.exponents
    for j in range(len(points)):
        errs = tuple(float(abs(mu_exp[i] - spectra[j, i])) for i in range(coc.dim))
        delta, gamma = (0.0, math.inf) if extra is None else extra[j]
        rows.append(PeriodicRow(
            k=k, point_id=j, source=source,
            lambdas=tuple(float(v) for v in spectra[j]),
            errs=errs,
            norm_err_plus=float(abs(lp - npl[j])),
            norm_err_minus=float(abs(lm - nmi[j])),
            delta=delta, fitted_gamma=gamma,
        ))
    return rows


def _enum_rows(cfg, coc, mu, lp, lm):
    rows = []
    caps = []
    for k in range(1, cfg.k_max + 1):
        try:
            points = cfg.base.enumerate_periodic(k, cap=cfg.enum_cap)
        except CapExceeded:
            caps.append(k)
            continue
        rows.extend(_rows_for_points(cfg, coc, points, k, "enum", mu, lp, lm))
    return rows, caps


def _closing_rows(cfg, coc, mu, lp, lm, rng, window_plan=None, x_fixed=None):
    """Recurrence + closing source.

    window_plan: optional list of (lo, hi) windows (suffix-growth filtered);
    without it every return below beta with k <= k_max is used.
    """
    rows = []
    found = 0
    tries = cfg.closing_tries if x_fixed is None else 1
    for t in range(tries):
        x = x_fixed if x_fixed is not None else cfg.base.random_point(rng)
        if window_plan is None:
            ks = cfg.base.find_recurrence(x, cfg.beta, k_max=cfg.k_max)
        else:
            ks = []
            for lo, hi in window_plan:
                if lo > cfg.k_max:
                    break
                ks.extend(cfg.base.find_recurrence(x, cfg.beta,
                                                   window=(lo, min(hi, cfg.k_max))))
            ks = sorted(set(ks))
        for k in ks:
            rep = cfg.base.close_orbit(x, k)
            extra = [(rep.delta, rep.fitted_gamma)]
            new = _rows_for_points(cfg, coc, [rep.p], k, "closing", mu, lp, lm, extra)
            for r in new:
                r.point_id = found
            rows.extend(new)
            found += 1
            if found >= cfg.max_closing_rows:
                return rows
    return rows


def _best_by_k(rows: List[PeriodicRow]) -> dict:
    best: dict = {}
    for r in rows:
        worst_err = max(r.errs)
        if r.k not in best or worst_err < best[r.k]:
            best[r.k] = worst_err
    return best


def _ext_best_by_k(rows: List[PeriodicRow], mu: SpectrumEstimate, d: int) -> dict:
    """Per exterior power i: min over points of the top-i exponent-sum error."""
    mu_sorted = np.sort(mu.exponents)[::-1]
    out: dict = {}
    for i in range(1, d + 1):
        mu_sum = float(mu_sorted[:i].sum())
        tab: dict = {}
        for r in rows:
            p_sum = float(np.sort(np.asarray(r.lambdas))[::-1][:i].sum())
            err = abs(mu_sum - p_sum)
            if r.k not in tab or err < tab[r.k]:
                tab[r.k] = err
        out[i] = tab
    return out


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def run_theorem1(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> ApproxReport:
    """Full-spectrum periodic approximation for the first configured cocycle.

    Estimates the spectrum along random orbits, collects periodic points from
    both sources up to k_max, and reports per-point exponent errors together
    with the exterior-power sum errors that reduce the full spectrum to top
    exponents.
    """
    coc = cfg.cocycles[0]
    rng = cfg.rng()
    x0, mu, lp, lm = _mu_estimates(cfg, coc, rng)
    rows, caps = _enum_rows(cfg, coc, mu, lp, lm)
    rows.extend(_closing_rows(cfg, coc, mu, lp, lm, rng))
    covered = {r.k for r in rows}
    report = ApproxReport(mu_spectrum=mu, mu_norm_plus=lp, mu_norm_minus=lm,
                          rows=rows, best_by_k=_best_by_k(rows),
                          ext_best_by_k=_ext_best_by_k(rows, mu, coc.dim),
                          caps_hit=[k for k in caps if k not in covered])
    if out_dir is not None:
        _emit_report(cfg, report, out_dir)
    return report


def _window_plan(cfg: ExperimentConfig, gt) -> list:
    plan = []
    for n in gt.ns:
        lo = int(math.ceil(n * (1.0 + cfg.sigma)))
        hi = int(math.floor(n * (1.0 + 2.0 * cfg.sigma)))
        if hi >= lo >= 1:
            plan.append((lo, hi))
    return plan


def run_theorem2(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> ApproxReport:
    """Norm-based periodic approximation of the extreme exponents.

    The closing search is driven by the suffix-growth filter: candidate
    return times k sit in windows [n(1+sigma), n(1+2sigma)] over good times n
    of the subadditive trace, mirroring how the large-period points are
    produced.  Norm errors (not eigenvalue errors) are the headline columns.
    """
    coc = cfg.cocycles[0]
    rng = cfg.rng()
    x0, mu, lp, lm = _mu_estimates(cfg, coc, rng)
    trace = subadditive_trace(coc, cfg.base, x0, min(cfg.trace_len, 10**4))
    gt = good_times([trace], eps=cfg.eps, L=cfg.L)
    rows, caps = _enum_rows(cfg, coc, mu, lp, lm)
    plan = _window_plan(cfg, gt)
    closing = _closing_rows(cfg, coc, mu, lp, lm, rng, window_plan=plan, x_fixed=x0)
    if not closing:
        closing = _closing_rows(cfg, coc, mu, lp, lm, rng, window_plan=plan)
    rows.extend(closing)
    if not rows:
        raise NoReturn("no periodic points found: enumeration capped and no "
                       f"window return below beta = {cfg.beta:g}")
    covered = {r.k for r in rows}
    report = ApproxReport(mu_spectrum=mu, mu_norm_plus=lp, mu_norm_minus=lm,
                          rows=rows, best_by_k=_best_by_k(rows),
                          caps_hit=[k for k in caps if k not in covered], goodtimes=gt,
                          large_k_achieved=any(
                              r.k > cfg.n_floor for r in rows if r.source == "closing"))
    if out_dir is not None:
        _emit_report(cfg, report, out_dir)
        write_goodtimes_csv(os.path.join(out_dir, "goodtimes.csv"), gt)
    return report


def run_multi(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> List[ApproxReport]:
    """Simultaneous approximation for every configured cocycle.

    One periodic-point search driven by the joint good-time set of all
    cocycles; each report row for cocycle j refers to the same periodic point.
    """
    rng = cfg.rng()
    x0 = cfg.base.random_point(rng)
    mus = []
    norms = []
    for coc in cfg.cocycles:
        mus.append(qr_spectrum(coc, cfg.base, x0, cfg.n_steps, seeds=cfg.seeds, rng=rng))
        norms.append(norm_exponents(coc, cfg.base, x0, cfg.n_steps))
    traces = [subadditive_trace(coc, cfg.base, x0, min(cfg.trace_len, 10**4))
              for coc in cfg.cocycles]
    gt = good_times(traces, eps=cfg.eps, L=cfg.L)
    plan = _window_plan(cfg, gt)

    # shared periodic points: enumeration plus window-filtered closing
    shared: List[Tuple[int, str, object, float, float]] = []
    caps = []
    for k in range(1, cfg.k_max + 1):
        try:
            pts = cfg.base.enumerate_periodic(k, cap=cfg.enum_cap)
        except CapExceeded:
            caps.append(k)
            continue
        for p in pts:
            shared.append((k, "enum", p, 0.0, math.inf))
    ks = []
    for lo, hi in plan:
        if lo > cfg.k_max:
            break
        ks.extend(cfg.base.find_recurrence(x0, cfg.beta, window=(lo, min(hi, cfg.k_max))))
    for k in sorted(set(ks))[: cfg.max_closing_rows]:
        rep = cfg.base.close_orbit(x0, k)
        shared.append((k, "closing", rep.p, rep.delta, rep.fitted_gamma))

    reports = []
    for j, coc in enumerate(cfg.cocycles):
        mu, (lp, lm) = mus[j], norms[j]
        rows = []
        by_key: dict = {}
        for k, source, p, delta, gamma in shared:
            by_key.setdefault((k, source), []).append((p, delta, gamma))
        for (k, source), entries in sorted(by_key.items()):
            pts = [e[0] for e in entries]
            extra = [(e[1], e[2]) for e in entries]
            rows.extend(_rows_for_points(cfg, coc, pts, k, source, mu, lp, lm, extra))
        covered = {r.k for r in rows}
        report = ApproxReport(mu_spectrum=mu, mu_norm_plus=lp, mu_norm_minus=lm,
                              rows=rows, best_by_k=_best_by_k(rows),
                              caps_hit=[k for k in caps if k not in covered],
                              goodtimes=gt)
        reports.append(report)
        if out_dir is not None:
            sub = os.path.join(out_dir, f"cocycle_{j}")
            os.makedirs(sub, exist_ok=True)
            _emit_report(cfg, report, sub, coc=coc)
    if out_dir is not None:
        write_goodtimes_csv(os.path.join(out_dir, "goodtimes.csv"), gt)
    return reports


def _emit_report(cfg: ExperimentConfig, report: ApproxReport, out_dir: str,
                 coc: Optional[CocycleSpec] = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    coc = coc if coc is not None else cfg.cocycles[0]
    write_spectrum_csv(os.path.join(out_dir, "spectrum.csv"), report.mu_spectrum)
    write_periodic_csv(os.path.join(out_dir, "periodic.csv"), report.rows, coc.dim)


# ---------------------------------------------------------------------------
# telescoping diagnostic
# ---------------------------------------------------------------------------


@dataclass
class TelescopeReport:
    """Exactness and domination data for the product-difference expansion."""

    n: int
    lhs_norm: float
    product_norm: float
    identity_residual: float
    bound_sum: float
    dominance: bool
    term_norms: List[Tuple[float, float, float]]
    decay_margins: Optional[List[float]] = None


def telescope_diagnostic(coc: CocycleSpec, sys, x, p, k: int, n: int,
                         eps: Optional[float] = None,
                         alpha: Optional[float] = None,
                         holder_m: Optional[float] = None,
                         gamma: Optional[float] = None) -> TelescopeReport:
    """Expand A^n_x - A^n_p as a sum over first-difference insertion points.

    The expansion is exact algebra, so the residual is reported against
    1e-8-scale roundoff; the norm bound sum and whether it stays below
    |A^n_x|/2 are evaluated for the instance's measured shadowing data.
    When eps/alpha/holder_m are given, per-step generator differences are
    checked against holder_m * delta^alpha * e^{-4 eps i}.
    """
    if n < 1 or n > k:
        raise ValueError("need 1 <= n <= k")
    mats_x = evaluate_orbit(coc, sys, x, n)
    mats_p = evaluate_orbit(coc, sys, p, n)
    d = coc.dim
    pref_p = [np.eye(d)]
    for i in range(n):
        pref_p.append(mats_p[i] @ pref_p[-1])
    suf_x = [np.eye(d) for _ in range(n + 1)]  # suf_x[i] = A^{n-(i+1)}_{x_{i+1}}
    for i in range(n - 2, -1, -1):
        suf_x[i] = suf_x[i + 1] @ mats_x[i + 1]
    prod_x = mats_x[0] @ np.eye(d)
    for i in range(1, n):
        prod_x = mats_x[i] @ prod_x
    lhs = prod_x - pref_p[n]
    total = np.zeros((d, d))
    term_norms = []
    bound_sum = 0.0
    diffs = []
    for i in range(n):
        diff = mats_x[i] - mats_p[i]
        term = suf_x[i] @ diff @ pref_p[i]
        total += term
        a_norm = float(np.linalg.norm(suf_x[i], 2))
        d_norm = float(np.linalg.norm(diff, 2))
        p_norm = float(np.linalg.norm(pref_p[i], 2))
        term_norms.append((a_norm, d_norm, p_norm))
        bound_sum += a_norm * d_norm * p_norm
        diffs.append(d_norm)
    prod_norm = float(np.linalg.norm(prod_x, 2))
    lhs_norm = float(np.linalg.norm(lhs, 2))
    residual = float(np.linalg.norm(lhs - total, 2)) / max(prod_norm, 1e-300)
    decay = None
    if eps is not None and alpha is not None and holder_m is not None:
        g = gamma if gamma is not None else 0.9 * sys.gamma_hyp
        mvals = np.minimum(np.arange(k + 1), k - np.arange(k + 1))
        dists = np.array([sys.dist(sys.step(x, i), sys.step(p, i)) for i in range(k + 1)])
        clear = dists > 1e-13
        delta = float(np.max(dists[clear] * np.exp(g * mvals[clear]))) if clear.any() else 0.0
        decay = [
            math.log(max(holder_m * delta**alpha, 1e-300)) - 4.0 * eps * i
            - math.log(max(diffs[i], 1e-300))
            for i in range(n)
        ]
    return TelescopeReport(n=n, lhs_norm=lhs_norm, product_norm=prod_norm,
                           identity_residual=residual, bound_sum=bound_sum,
                           dominance=bool(lhs_norm <= 0.5 * prod_norm),
                           term_norms=term_norms, decay_margins=decay)
