"""Command-line entry point: ``markov-sa <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .decomp import decompose_path, decomposition_report
from .engine import SARunConfig, run_sa
from .errors import SALabError
from .figures import FIGURES, reproduce, write_comparison, write_curves, write_meta, write_runs, write_summary
from .harness import rate_checks, run_ensemble
from .linear import theory_stats, update_fn


def _global_flags(p, suppress=False):
    # flags are accepted before or after the subcommand; SUPPRESS keeps the
    # subparser from clobbering values given before it
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p.add_argument("--config", type=Path, help="JSON experiment config (defaults to the two-state experiment)", **kw)
    p.add_argument("--seed", type=int, help="override base_seed", **kw)
    p.add_argument("--out", type=Path, help="override out_dir", **kw)
    p.add_argument("--threads", type=int, help="worker threads; affects speed only", **(kw or {"default": 1}))
    p.add_argument("--emit-plots", action="store_true", help="also write SVG plots", **kw)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(argparse.ArgumentParser(add_help=False), suppress=True)
    parser = _global_flags(argparse.ArgumentParser(prog="markov-sa", description=__doc__))
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("theory", parents=[common], help="print asymptotic statistics as JSON")
    sub.add_parser("simulate", parents=[common], help="run the ensemble and write summary/runs/curves CSV")
    sub.add_parser("compare", parents=[common], help="empirical vs theory table")
    rp = sub.add_parser("reproduce", parents=[common], help="write the tables behind a figure")
    rp.add_argument("--figure", choices=FIGURES, required=True)
    dp = sub.add_parser("decomp", parents=[common], help="pathwise noise-decomposition diagnostics")
    dp.add_argument("--steps", type=int, default=None, help="diagnostic run length (default min(N, 1e6))")
    sub.add_parser("rates", parents=[common], help="fitted error-rate exponents")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.out is not None:
        cfg.out_dir = str(args.out)
    if args.emit_plots:
        cfg.emit_plots = True
    cfg.__post_init__()
    return cfg


def _dump(obj):
    json.dump(obj, sys.stdout, indent=2, default=lambda o: o.tolist() if isinstance(o, np.ndarray) else str(o))
    sys.stdout.write("\n")


def cmd_theory(cfg, args):
    out = []
    for a, label, model in cfg.models():
        for sched in cfg.schedule_grid():
            d = theory_stats(model, sched).to_dict()
            d.update(a=a, model=label, alpha0=sched.alpha0, thetastar=model.thetastar.tolist())
            out.append(d)
    _dump(out)


def cmd_simulate(cfg, args):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_ensemble(cfg, args.threads)
    write_summary(result, out)
    write_runs(result, out)
    if len({p.label for p in result.points}) == 1:
        write_curves(result, out)
    write_meta(result, out)
    print(f"wrote {out}/summary.csv")


def cmd_compare(cfg, args):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = write_comparison(run_ensemble(cfg, args.threads), out)
    _dump([r.as_dict() for r in rows])


def cmd_reproduce(cfg, args):
    files = reproduce(args.figure, cfg, threads=args.threads)
    for name, path in files.items():
        print(f"{name}: {path}")


def cmd_decomp(cfg, args):
    steps = args.steps or min(cfg.N, 1_000_000)
    reports = []
    for a, label, model in cfg.models():
        for gi, sched in enumerate(cfg.schedule_grid()):
            mean, std = cfg.theta0_for(model)
            rng = np.random.default_rng([cfg.base_seed, gi])
            theta0 = mean + std * rng.standard_normal(model.dim)
            run_cfg = SARunConfig(sched, steps, 0, theta0, model.chain, seed=int(rng.integers(2**63)), keep_path=True)
            terms = decompose_path(model, sched, run_sa(update_fn(model), run_cfg))
            rep = decomposition_report(model, terms)
            rep.update(a=a, model=label, rho=sched.rho, alpha0=sched.alpha0)
            reports.append(rep)
    _dump(reports)


def cmd_rates(cfg, args):
    _dump(rate_checks(cfg, args.threads))


COMMANDS = {
    "theory": cmd_theory,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "reproduce": cmd_reproduce,
    "decomp": cmd_decomp,
    "rates": cmd_rates,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        COMMANDS[args.command](cfg, args)
    except (SALabError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
