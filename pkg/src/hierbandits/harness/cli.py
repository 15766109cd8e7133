"""Command-line entry point: ``hierbandits run|sweep-l|bounds|oracle-check``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from hierbandits.harness.config import ConfigError, parse_config
from hierbandits.harness.output import emit_bounds_csv, emit_csv, emit_plot, emit_sweep_csv
from hierbandits.harness.runner import experiment_bounds, run_experiment, sweep_concurrency
from hierbandits.oraclecheck import model_battery, oracle_battery

log = logging.getLogger("hierbandits")

ORACLE_TOL = 1e-8


def _load(args):
    cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    cfg = cfg.with_overrides(seed=args.seed, replications=args.reps, out_dir=args.out_dir,
                             workers=args.workers)
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg = _load(args)
    res = run_experiment(cfg)
    out = _out_dir(cfg)
    if args.format in ("csv", "both"):
        emit_csv(res.trace, out / "regret.csv")
    if args.format in ("plot", "both"):
        emit_plot(res.trace, out / "regret.svg")
    if cfg.bounds:
        emit_bounds_csv(res.bounds, out / "bounds.csv")
    for a in cfg.agents:
        mean, se = res.trace.final(a)
        bound = res.bounds[a].bound if a in res.bounds else float("nan")
        print(f"{a:12s} final cumulative regret {mean:10.4f} +- {se:.4f}   bound {bound:.4g}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    Ls = [int(x) for x in args.l.split(",") if x.strip()]
    rows, _ = sweep_concurrency(cfg, Ls)
    out = _out_dir(cfg)
    emit_sweep_csv(rows, out / "sweep.csv")
    for r in rows:
        print(f"L={r.L:<3d} rounds={r.rounds:<5d} {r.agent:12s} {r.final_mean:10.4f} +- {r.final_stderr:.4f}")
    return 0


def cmd_bounds(args) -> int:
    cfg = _load(args)
    bounds = experiment_bounds(cfg)
    out = _out_dir(cfg)
    emit_bounds_csv(bounds, out / "bounds.csv")
    for a, rep in bounds.items():
        print(f"{a:12s} {rep.regime:18s} c={rep.c:.4g} c_q={rep.c_q:.4g} c1={rep.c1:.4g} c2={rep.c2:.4g} "
              f"c3={rep.c3:.4g} c4={rep.c4:.4g} bound={rep.bound:.4g}")
    return 0


def cmd_oracle(args) -> int:
    cfg = _load(args)
    rng = np.random.default_rng(cfg.seed)
    generic = oracle_battery(args.instances, rng)
    own = model_battery(cfg.model, args.instances, rng)
    ok = True
    for label, err in (("random models", generic), ("config model", own)):
        status = "PASS" if err.worst <= ORACLE_TOL else "FAIL"
        ok &= status == "PASS"
        print(f"{status} {label}: hyper mean {err.hyper_mean:.2e}, hyper cov {err.hyper_cov:.2e}, "
              f"marginal mean {err.marginal_mean:.2e}, marginal cov {err.marginal_cov:.2e}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hierbandits", description="Hierarchical Thompson sampling experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="experiment config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--reps", type=int, default=None, help="number of replications")
        p.add_argument("--out-dir", default=None)
        p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
        p.add_argument("--format", choices=("csv", "plot", "both"), default="both")
        return p

    common(sub.add_parser("run", help="run every agent and write regret.csv / regret.svg / bounds.csv")) \
        .set_defaults(func=cmd_run)
    p = common(sub.add_parser("sweep-l", help="final HierTS regret as a function of L"))
    p.add_argument("--l", default="1,2,5,10", help="comma-separated L values")
    p.set_defaults(func=cmd_sweep)
    common(sub.add_parser("bounds", help="regret bound constants only")).set_defaults(func=cmd_bounds)
    p = common(sub.add_parser("oracle-check", help="closed-form posteriors vs joint Gaussian conditioning"))
    p.add_argument("--instances", type=int, default=200)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
