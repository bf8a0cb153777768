"""Seeded hyperparameter sweeps over the quadratic benchmark."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import METHOD_IDS, ExperimentConfig, MethodSpec
from .engine import RunTrace, run_method
from .optim import make_method
from .svg import line_plot

__all__ = ["GridTooLargeError", "SweepEntry", "SweepResult", "desk_methods", "full_methods",
           "run_single", "sweep"]

# rough per-round cost of the simulator loop, used only for the grid-size estimate
_SECONDS_PER_ROUND = 1e-5


class GridTooLargeError(RuntimeError):
    pass


def full_methods() -> list[MethodSpec]:
    """The full published quadratic-benchmark grids (162 SGD and 2592 MVR configs)."""
    gammas = [2.0**j for j in range(-15, 3)]
    Bs = [1, 5, 10, 20, 40, 60, 80, 100, 200]
    ps = [0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.5, 0.9]
    return [MethodSpec("rennala_sgd", {"gamma": gammas, "B": Bs}),
            MethodSpec("rennala_mvr", {"gamma": gammas, "B": Bs, "p": ps, "B0": ["B", "B^2"]})]


def desk_methods() -> list[MethodSpec]:
    """Subgrid for desk-scale runs: 6 step sizes, 4 batch sizes, 4 momenta, both B0 rules."""
    gammas = [2.0**j for j in range(-4, 2)]
    Bs = [10, 20, 60, 200]
    ps = [0.01, 0.05, 0.2, 0.5]
    return [MethodSpec("rennala_sgd", {"gamma": gammas, "B": Bs}),
            MethodSpec("rennala_mvr", {"gamma": gammas, "B": Bs, "p": ps, "B0": ["B", "B^2"]})]


@dataclass
class SweepEntry:
    method: str
    config_index: int
    hyperparams: dict
    per_seed: list = field(default_factory=list)

    @property
    def aggregate(self) -> float:
        vals = self.per_seed
        if any(not math.isfinite(v) for v in vals):
            return math.inf
        return float(np.mean(vals))


@dataclass
class SweepResult:
    entries: list
    ranking: list  # entry positions, best first
    top: dict      # method -> entry positions of its best configs

    def leaderboard_rows(self):
        topset = {i for v in self.top.values() for i in v}
        for rank, i in enumerate(self.ranking, 1):
            e = self.entries[i]
            hp = e.hyperparams
            yield {
                "rank": rank, "method": e.method, "config_index": e.config_index,
                "gamma": hp.get("gamma", ""), "B": hp.get("B", ""), "p": hp.get("p", ""),
                "B0": hp.get("B0", ""), "alpha": hp.get("alpha", ""),
                "aggregate": e.aggregate,
                "per_seed": ";".join(repr(v) for v in e.per_seed),
                "top": int(i in topset),
            }

    def write_leaderboard(self, path):
        cols = ["rank", "method", "config_index", "gamma", "B", "p", "B0", "alpha",
                "aggregate", "per_seed", "top"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.leaderboard_rows():
                fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                                  for c in cols) + "\n")

    def best(self, method: str) -> SweepEntry:
        return self.entries[self.top[method][0]]


def _metric_offset(cfg: ExperimentConfig, problem) -> tuple[str, float]:
    if cfg.metric == "f_value":
        return "f_value", problem.min_value()
    return "grad_sq_norm", 0.0


def run_single(cfg: ExperimentConfig, method: str, hp: dict, config_index: int, seed_index: int,
               *, record_every: Optional[int] = None, window_only: bool = False) -> RunTrace:
    """One simulation with the sweep's seed derivation.

    ``window_only`` records just the final 1% of the horizon, which is all the
    ranking metric needs.
    """
    problem = cfg.problem()
    profile = cfg.profile(cfg.seeds[seed_index])
    opt = make_method(method, **hp)
    seed = cfg.run_seed(method, config_index, cfg.seeds[seed_index])
    if window_only:
        every, dense = 2**62, 0.99 * cfg.budget
    else:
        every, dense = (record_every or cfg.record_stride), None
    return run_method(problem, opt, profile, cfg.budget, every, seed,
                      x0=cfg.initial_point(problem), restart=cfg.restart, noise=cfg.noise,
                      dense_after=dense)


def _task(args):
    cfg, method, hp, ci, si = args
    tr = run_single(cfg, method, hp, ci, si, window_only=True)
    column, offset = _metric_offset(cfg, cfg.problem())
    return method, ci, si, tr.final_window_median(cfg.budget, 0.01, column, offset)


def _usable_cpus() -> int:
    # affinity masks matter in containers, where cpu_count() reports the host
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def estimate_seconds(cfg: ExperimentConfig) -> float:
    """Crude wall-clock estimate: rounds implied by seed-0 throughput times a per-round cost."""
    rate = sum(1.0 / t for t in cfg.profile(cfg.seeds[0]).taus)
    total = 0.0
    for m in cfg.methods:
        for hp in m.configs():
            per = 2 if m.name == "rennala_mvr" else 1
            total += cfg.budget * rate / (per * hp["B"])
    return total * len(cfg.seeds) * _SECONDS_PER_ROUND


def sweep(cfg: ExperimentConfig, jobs: Optional[int] = None, out: Optional[Path] = None,
          plot: bool = True) -> SweepResult:
    """Evaluate every config of every method on every seed and rank them.

    Results are keyed by ``(method, config_index, seed_index)``, so the
    outcome does not depend on the order in which the pool finishes tasks.
    """
    if not cfg.methods:
        raise ValueError("config has no [[method]] tables")
    if not cfg.budget > 0:
        raise ValueError("sweep needs a positive budget")
    size = cfg.grid_size()
    if size > cfg.max_grid:
        est = estimate_seconds(cfg)
        raise GridTooLargeError(
            f"grid has {size} runs (cap {cfg.max_grid}); estimated {est / 3600:.1f} CPU-hours "
            f"at ~{_SECONDS_PER_ROUND * 1e6:.0f} us per round")
    entries, tasks = [], []
    pos = {}
    for m in cfg.methods:
        for ci, hp in enumerate(m.configs()):
            pos[(m.name, ci)] = len(entries)
            entries.append(SweepEntry(m.name, ci, hp, [math.nan] * len(cfg.seeds)))
            tasks += [(cfg, m.name, hp, ci, si) for si in range(len(cfg.seeds))]
    jobs = jobs or _usable_cpus()
    if jobs == 1:
        results = map(_task, tasks)
    else:
        pool = ProcessPoolExecutor(jobs)
        results = pool.map(_task, tasks, chunksize=max(1, len(tasks) // (8 * jobs)))
    for method, ci, si, val in results:
        entries[pos[(method, ci)]].per_seed[si] = val
    if jobs != 1:
        pool.shutdown()

    ranking = sorted(range(len(entries)),
                     key=lambda i: (entries[i].aggregate, METHOD_IDS[entries[i].method],
                                    entries[i].config_index))
    top = {}
    for i in ranking:
        lst = top.setdefault(entries[i].method, [])
        if len(lst) < cfg.top_k:
            lst.append(i)
    result = SweepResult(entries, ranking, top)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        result.write_leaderboard(out / "leaderboard.csv")
        if plot:
            plot_top(cfg, result, out / "plot.svg")
    return result


def _seed_mean_curve(cfg, traces, column, offset, npts=400):
    """Seed-averaged metric on a log-spaced time grid (value in force at each time)."""
    t_lo = min(tr.time[1] for tr in traces if len(tr) > 1) if any(len(tr) > 1 for tr in traces) else 1.0
    grid = np.geomspace(max(t_lo, 1e-9), cfg.budget, npts)
    vals = []
    for tr in traces:
        t = np.asarray(tr.time)
        v = np.asarray(getattr(tr, column)) - offset
        idx = np.searchsorted(t, grid, side="right") - 1
        vals.append(v[np.clip(idx, 0, len(v) - 1)])
    return grid, np.mean(vals, axis=0)


def plot_top(cfg: ExperimentConfig, result: SweepResult, path) -> str:
    column, offset = _metric_offset(cfg, cfg.problem())
    series = []
    for method, idxs in result.top.items():
        for i in idxs:
            e = result.entries[i]
            traces = [run_single(cfg, method, e.hyperparams, e.config_index, si,
                                 record_every=cfg.record_stride)
                      for si in range(len(cfg.seeds))]
            if any(tr.diverged for tr in traces):
                continue
            xs, ys = _seed_mean_curve(cfg, traces, column, offset)
            hp = ", ".join(f"{k}={v:g}" for k, v in e.hyperparams.items())
            series.append((f"{method} {hp}", xs, ys))
    ylabel = "f(x) - f*" if column == "f_value" else "||grad f(x)||^2"
    return line_plot(series, path, title=f"{cfg.delay.kind} delays, n={cfg.n}", ylabel=ylabel)
