"""Command-line driver: ``rennala <subcommand> [options]``."""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .delays import InvalidProfileError
from .optim import RegimeError
from .sweep import GridTooLargeError, run_single, sweep
from .verify import Check, verify_engine, verify_hardness, verify_theory, write_report


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    return cfg


def _outdir(cfg: ExperimentConfig, args) -> Path:
    out = cfg.output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg = _load(args)
    if not cfg.methods:
        raise ConfigError("run needs at least one [[method]] table", None, args.config)
    out = _outdir(cfg, args)
    for m in cfg.methods:
        configs = m.configs()
        if len(configs) != 1:
            raise ConfigError(f"run needs one value per hyperparameter; {m.name} has a grid of "
                              f"{len(configs)} (use sweep)", None, args.config)
        for si, seed in enumerate(cfg.seeds):
            tr = run_single(cfg, m.name, configs[0], 0, si)
            path = out / f"trace_{m.name}_s{seed}.csv"
            tr.to_csv(path)
            final = tr.grad_sq_norm[-1]
            print(f"{m.name} seed={seed}: rounds={tr.rounds} oracle_calls={tr.final_calls} "
                  f"final ||grad||^2={final:.6g}{' (diverged)' if tr.diverged else ''} -> {path}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = cfg.output_dir(args.out)  # created by sweep() once the grid passes the size cap
    res = sweep(cfg, jobs=args.jobs, out=out, plot=not args.no_plot)
    print(f"{'method':<22}{'rank':>5}  {'aggregate':>12}  hyperparameters")
    for method, idxs in res.top.items():
        for i in idxs:
            e = res.entries[i]
            hp = " ".join(f"{k}={v:g}" for k, v in e.hyperparams.items())
            print(f"{method:<22}{res.ranking.index(i) + 1:>5}  {e.aggregate:>12.6g}  {hp}")
    print(f"wrote {out / 'leaderboard.csv'}" + ("" if args.no_plot else f" and {out / 'plot.svg'}"))
    return 0


def _finish(checks, out: Path) -> int:
    for c in checks:
        print(c.line())
    write_report(checks, out / "report.jsonl")
    failed = sum(not c.ok for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed; report: {out / 'report.jsonl'}")
    return 1 if failed else 0


def cmd_verify_theory(args) -> int:
    cfg = _load(args)
    out = _outdir(cfg, args)
    th = cfg.theory
    profile = cfg.profile(cfg.seeds[0])
    checks, report = verify_theory(th["eps"], th["sigma"], th["delta"], th["L_bar"], profile,
                                   th.get("L"))
    print(report.as_text())
    print()
    print(report.as_csv(), end="")
    (out / "complexity.csv").write_text(report.as_csv())
    print()
    return _finish(checks, out)


def cmd_verify_hardness(args) -> int:
    cfg = _load(args)
    out = _outdir(cfg, args)
    checks = verify_hardness(args.T, args.p, args.trials, seed=cfg.master_seed)
    width = max(len(c.name) for c in checks)
    print(f"{'check':<{width}}  {'measured':>14}  {'bound':>14}  result")
    rows = ["check,measured,bound,ok"]
    for c in checks:
        print(f"{c.name:<{width}}  {_cell(c.measured):>14}  {_cell(c.bound):>14}  "
              f"{c.status.lower() if c.ok else 'FAIL'}")
        rows.append(f"{c.name},{c.measured!r},{c.bound!r},{int(c.ok)}")
    (out / "hardness.csv").write_text("\n".join(rows) + "\n")
    print()
    return _finish(checks, out)


def _cell(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def cmd_verify_engine(args) -> int:
    checks = []
    if args.config:
        # validate the configured delay realizations before the generic suite
        try:
            cfg = _load(args)
            for s in cfg.seeds:
                cfg.profile(s)
            checks.append(Check("engine", "config_profiles_valid", True, True, True))
        except (ConfigError, InvalidProfileError) as exc:
            checks.append(Check("engine", "config_profiles_valid", False, True, False, str(exc)))
            cfg = ExperimentConfig()
    else:
        cfg = _load(args)
    out = _outdir(cfg, args)
    checks += verify_engine(cfg.master_seed)
    return _finish(checks, out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rennala", description=(
        "Simulate asynchronous minibatch SGD and momentum variance reduction on "
        "heterogeneous workers, and check the associated complexity formulas."))
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="TOML experiment config")
        p.add_argument("--seed", type=int, default=None, help="master seed (u64)")
        p.add_argument("--out", default=None, help="output directory (env RENNALA_OUT also works)")
        return p

    p = common(sub.add_parser("run", help="single runs; writes trace_*.csv"), True)
    p.set_defaults(func=cmd_run)
    p = common(sub.add_parser("sweep", help="grid sweep; writes leaderboard.csv and plot.svg"), True)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    p.add_argument("--no-plot", action="store_true", help="skip the SVG (it re-runs the top configs)")
    p.set_defaults(func=cmd_sweep)
    p = common(sub.add_parser("verify-theory", help="complexity report and formula checks"))
    p.set_defaults(func=cmd_verify_theory)
    p = common(sub.add_parser("verify-hardness", help="hard-instance property checks"))
    p.add_argument("--T", type=int, default=20, help="chain length")
    p.add_argument("--p", type=float, default=0.2, help="zero-chain probability")
    p.add_argument("--trials", type=int, default=10_000, help="Monte Carlo draws per point")
    p.set_defaults(func=cmd_verify_hardness)
    p = common(sub.add_parser("verify-engine", help="simulator checks against closed forms"))
    p.add_argument("--jobs", type=int, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify_engine)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InvalidProfileError, RegimeError, GridTooLargeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
