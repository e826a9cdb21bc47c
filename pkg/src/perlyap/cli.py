"""Command line interface for the experiment harness.

Every subcommand reads one JSON config (see README for the schema), writes
CSV reports into the output directory, and is deterministic for a fixed
config and seed.  Exit codes: 0 success, 2 config error, 3 search cap
exceeded with partial output, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import sys as _sys

import numpy as np

from .errors import (
    CapExceeded,
    ConfigError,
    NoReturn,
    PerlyapError,
)
from .exponents import good_times, qr_spectrum, subadditive_trace
from .harness import (
    ExperimentConfig,
    run_multi,
    run_theorem1,
    run_theorem2,
    write_goodtimes_csv,
    write_periodic_csv,
    write_spectrum_csv,
    _write_csv,
)
from .pesin import build_cones, cone_check, lyapunov_gram, pesin_member, splitting_at

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAP = 3
EXIT_NUMERIC = 4


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.rng_seed = args.seed
        cfg._validate()
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def cmd_spectrum(args) -> int:
    cfg = _load(args)
    coc = cfg.cocycles[0]
    rng = cfg.rng()
    x0 = cfg.base.random_point(rng)
    est = qr_spectrum(coc, cfg.base, x0, cfg.n_steps, seeds=cfg.seeds, rng=rng)
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_spectrum_csv(os.path.join(cfg.output_dir, "spectrum.csv"), est)
    _say(args, "exponents: " + " ".join(f"{v:.6f}" for v in est.exponents)
         + f"  (spread {est.per_seed_spread:.2e})")
    return EXIT_OK


def cmd_periodic(args) -> int:
    cfg = _load(args)
    report = run_theorem1(cfg, out_dir=cfg.output_dir)
    _say(args, f"rows: {len(report.rows)}; best max-error by k: "
         + " ".join(f"{k}:{v:.4g}" for k, v in sorted(report.best_by_k.items())))
    return EXIT_CAP if report.caps_hit else EXIT_OK


def cmd_theorem1(args) -> int:
    cfg = _load(args)
    report = run_theorem1(cfg, out_dir=cfg.output_dir)
    _say(args, "mu spectrum: " + " ".join(f"{v:.6f}" for v in report.mu_spectrum.exponents))
    for k in sorted(report.best_by_k):
        _say(args, f"k = {k}: min over points of max_i |lambda_i - lambda_i(p)| = "
             f"{report.best_by_k[k]:.6g}")
    for i, tab in sorted(report.ext_best_by_k.items()):
        if tab:
            best = min(tab.values())
            _say(args, f"exterior power {i}: best top-sum error {best:.6g}")
    return EXIT_CAP if report.caps_hit else EXIT_OK


def cmd_theorem2(args) -> int:
    cfg = _load(args)
    report = run_theorem2(cfg, out_dir=cfg.output_dir)
    _say(args, f"mu norm exponents: {report.mu_norm_plus:.6f} {report.mu_norm_minus:.6f}")
    best_norm = min((max(r.norm_err_plus, r.norm_err_minus) for r in report.rows),
                    default=float("inf"))
    _say(args, f"best joint norm error: {best_norm:.6g}; "
         f"large k achieved: {report.large_k_achieved}")
    return EXIT_CAP if report.caps_hit else EXIT_OK


def cmd_multi(args) -> int:
    cfg = _load(args)
    reports = run_multi(cfg, out_dir=cfg.output_dir)
    for j, rep in enumerate(reports):
        best = min((max(r.errs) for r in rep.rows), default=float("inf"))
        _say(args, f"cocycle {j}: best max exponent error {best:.6g}")
    return EXIT_CAP if any(rep.caps_hit for rep in reports) else EXIT_OK


def cmd_goodtimes(args) -> int:
    cfg = _load(args)
    rng = cfg.rng()
    x0 = cfg.base.random_point(rng)
    traces = [subadditive_trace(coc, cfg.base, x0, min(cfg.trace_len, 10**4))
              for coc in cfg.cocycles]
    gt = good_times(traces, eps=cfg.eps, L=cfg.L)
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_goodtimes_csv(os.path.join(cfg.output_dir, "goodtimes.csv"), gt)
    _say(args, f"good times in [{gt.L}, {gt.N}]: {len(gt.ns)} (density {gt.density:.4f})")
    return EXIT_OK


def cmd_pesin(args) -> int:
    cfg = _load(args)
    coc = cfg.cocycles[0]
    rng = cfg.rng()
    rows = []
    members = 0
    for pid in range(cfg.pesin_samples):
        x = cfg.base.random_point(rng)
        split = splitting_at(coc, cfg.base, x)
        metric = lyapunov_gram(coc, cfg.base, x, cfg.eps, split)
        member = pesin_member(metric, cfg.ell)
        members += member
        rows.append((pid, metric.K_eps, int(member)))
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_csv(os.path.join(cfg.output_dir, "pesin.csv"),
               ["point_id", "K_eps", "member"], rows)
    _say(args, f"measured membership fraction at ell = {cfg.ell:g}: "
         f"{members / cfg.pesin_samples:.3f}")
    return EXIT_OK


def cmd_cones(args) -> int:
    cfg = _load(args)
    coc = cfg.cocycles[0]
    rng = cfg.rng()
    instance = None
    for _ in range(cfg.closing_tries):
        x = cfg.base.random_point(rng)
        ks = cfg.base.find_recurrence(x, cfg.beta, k_max=cfg.k_max)
        ks = [k for k in ks if k >= 4]
        if ks:
            instance = (x, ks[0])
            break
    if instance is None:
        raise NoReturn(f"no recurrence below beta = {cfg.beta:g} with k_max = {cfg.k_max}")
    x, k = instance
    rep = cfg.base.close_orbit(x, k)
    cones = build_cones(coc, cfg.base, x, k, cfg.eps)
    crep = cone_check(coc, cfg.base, x, rep.p, k, cones)
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_csv(os.path.join(cfg.output_dir, "cones.csv"),
               ["i", "check", "margin"],
               [(i, c, m) for i, c, m in crep.rows])
    _say(args, f"k = {k}, theta = {cones.theta:.4f}, "
         f"failure fraction {crep.failure_fraction:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perlyap",
        description="Lyapunov exponents of cocycles over hyperbolic systems: "
                    "spectrum estimation and periodic-orbit approximation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "spectrum": (cmd_spectrum, "estimate the Lyapunov spectrum along random orbits"),
        "periodic": (cmd_periodic, "tabulate periodic points and their exponent errors"),
        "theorem1": (cmd_theorem1, "full-spectrum periodic approximation experiment"),
        "theorem2": (cmd_theorem2, "norm-based periodic approximation experiment"),
        "multi": (cmd_multi, "simultaneous approximation for several cocycles"),
        "goodtimes": (cmd_goodtimes, "suffix-growth good-time detection"),
        "pesin": (cmd_pesin, "Lyapunov-norm distortion levels and set membership"),
        "cones": (cmd_cones, "cone invariance along a closing instance"),
    }
    for name, (fn, help_) in commands.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="rng seed override")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=_sys.stderr)
        return EXIT_CONFIG
    except (CapExceeded, NoReturn) as e:
        print(f"search cap: {e}", file=_sys.stderr)
        return EXIT_CAP
    except PerlyapError as e:
        print(f"numerical failure: {e}", file=_sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
