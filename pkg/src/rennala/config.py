"""Experiment configuration files.

Configs are TOML.  Grammar (every table optional except ``[[method]]`` for
``run``/``sweep``)::

    [problem]
    kind = "quadratic"          # only choice
    dim = 100
    sigma_add = 0.1
    x0 = "spike"                # "spike" = (sqrt(d), 0, ...), or "zero"
    metric = "grad_sq_norm"     # or "f_value" (training-loss view)
    sigma_convention = "total"  # sigma = sqrt(d) * sigma_add ("total") or sigma_add ("additive")

    [delay]
    kind = "sqrt"               # "sqrt" | "uniform" | "mixture" | "fixed"
    n = 10
    permute = true
    peaks = 3
    stddev = 10.0               # mixture component stddev, default n
    taus = [1.0, 2.0]           # only for kind = "fixed"

    [run]
    budget = 1e5                # simulated seconds
    seeds = [0, 1, 2, 3, 4]
    master_seed = 0
    record_stride = 1
    restart = true
    noise = "exact"             # or "aggregate" (same law, faster)
    resample_delays = true      # false: every seed sees the seed-0 delays
    out = "out"                 # RENNALA_OUT overrides
    max_grid = 5000             # sweep aborts above this many runs
    top_k = 3

    [theory]
    eps = 1e-3
    delta = 1.0
    L_bar = 1.0
    sigma = 0.1

    [[method]]
    name = "rennala_mvr"
    gamma = [0.25, 0.5]         # scalar or list
    B = [10, 20]
    p = [0.1]
    B0 = ["B", "B^2"]           # integers or the symbols "B" / "B^2"
    alpha = [1.0]               # inexact variant only

A :class:`ConfigError` carries the offending line when one can be located.
"""

from __future__ import annotations

import itertools
import math
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .delays import DelayModel, DelayProfile, sample_delays
from .problems import QuadraticProblem

__all__ = ["ConfigError", "ExperimentConfig", "MethodSpec", "load_config", "parse_config"]

METHOD_IDS = {"rennala_sgd": 0, "rennala_mvr": 1, "rennala_mvr_inexact": 2}
_METHOD_KEYS = {
    "rennala_sgd": ("gamma", "B"),
    "rennala_mvr": ("gamma", "B", "p", "B0"),
    "rennala_mvr_inexact": ("gamma", "B", "p", "B0", "alpha"),
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        where = path or "<config>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")


@dataclass
class MethodSpec:
    name: str
    grid: dict  # key -> list of values; B0 entries may be "B" or "B^2"

    def configs(self) -> list[dict]:
        keys = _METHOD_KEYS[self.name]
        out = []
        for combo in itertools.product(*(self.grid[k] for k in keys)):
            hp = dict(zip(keys, combo))
            if "B0" in hp:
                hp["B0"] = resolve_b0(hp["B0"], hp["B"])
            out.append(hp)
        return out

    @property
    def size(self) -> int:
        return math.prod(len(self.grid[k]) for k in _METHOD_KEYS[self.name])


def resolve_b0(spec, B: int) -> int:
    if spec == "B":
        return int(B)
    if spec == "B^2":
        return int(B) * int(B)
    return int(spec)


@dataclass
class ExperimentConfig:
    dim: int = 100
    sigma_add: float = 0.1
    x0: str = "spike"
    metric: str = "grad_sq_norm"
    sigma_convention: str = "total"
    delay: DelayModel = field(default_factory=lambda: DelayModel("sqrt"))
    n: int = 10
    budget: float = 1e5
    seeds: list = field(default_factory=lambda: [0])
    master_seed: int = 0
    record_stride: int = 1
    restart: bool = True
    noise: str = "exact"
    resample_delays: bool = True
    out: str = "out"
    max_grid: int = 5000
    top_k: int = 3
    theory: dict = field(default_factory=lambda: {"eps": 1e-3, "delta": 1.0, "L_bar": 1.0,
                                                  "sigma": 0.1})
    methods: list = field(default_factory=list)

    def problem(self) -> QuadraticProblem:
        return QuadraticProblem(self.dim, self.sigma_add)

    def initial_point(self, problem: QuadraticProblem):
        import numpy as np
        return problem.initial_point() if self.x0 == "spike" else np.zeros(problem.dim)

    @property
    def sigma(self) -> float:
        """Noise level in the theory's convention."""
        return self.sigma_add * (math.sqrt(self.dim) if self.sigma_convention == "total" else 1.0)

    def profile(self, seed_index: int) -> DelayProfile:
        """Delay realization for one seed; shared by every method and config."""
        import numpy as np
        idx = seed_index if self.resample_delays else 0
        ss = np.random.SeedSequence([self.master_seed, 0xDE1A7, idx])
        return sample_delays(self.delay, self.n, int(ss.generate_state(1, np.uint64)[0]))

    def run_seed(self, method: str, config_index: int, seed_index: int) -> int:
        import numpy as np
        ss = np.random.SeedSequence([self.master_seed, METHOD_IDS[method], config_index, seed_index])
        return int(ss.generate_state(1, np.uint64)[0])

    def output_dir(self, override: Optional[str] = None) -> Path:
        env = os.environ.get("RENNALA_OUT")
        return Path(override or env or self.out)

    def grid_size(self) -> int:
        return sum(m.size for m in self.methods) * len(self.seeds)


# ---------------------------------------------------------------------------
# parsing


def _locate(text: str, table: Optional[str], key: Optional[str], index: int = 0) -> Optional[int]:
    """1-based line of ``key`` inside the ``index``-th ``[table]``/``[[table]]``."""
    current, seen = None, -1
    header = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.\-]+)\s*\]\]?")
    keyre = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")
    table_line = None
    for no, line in enumerate(text.splitlines(), 1):
        m = header.match(line)
        if m:
            current = m.group(1)
            if current == table:
                seen += 1
                if seen == index:
                    table_line = no
            continue
        if key is None or current != table or seen != index:
            continue
        k = keyre.match(line)
        if k and k.group(1) == key:
            return no
    return table_line


class _Reader:
    def __init__(self, data: dict, text: str, path: Optional[str]):
        self.data, self.text, self.path = data, text, path

    def err(self, msg, table=None, key=None, index=0):
        return ConfigError(msg, _locate(self.text, table, key, index), self.path)

    def get(self, tbl: dict, table: str, key: str, kind, default, index=0, check=None, what=""):
        if key not in tbl:
            return default
        v = tbl[key]
        if kind is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if kind is not None and not isinstance(v, kind) or (kind is int and isinstance(v, bool)):
            raise self.err(f"{key} must be {_kind_name(kind)}, got {v!r}", table, key, index)
        if check is not None and not check(v):
            raise self.err(f"{key} {what}, got {v!r}", table, key, index)
        return v


def _kind_name(kind) -> str:
    if isinstance(kind, tuple):
        return " or ".join(_kind_name(k) for k in kind)
    return {int: "an integer", float: "a number", str: "a string", bool: "a boolean",
            list: "a list"}.get(kind, str(kind))


def parse_config(text: str, path: Optional[str] = None) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", int(m.group(1)) if m else None, path) from None
    r = _Reader(data, text, path)
    known = {"problem", "delay", "run", "theory", "method"}
    for k in data:
        if k not in known:
            raise r.err(f"unknown table or key {k!r}", k, None)
    cfg = ExperimentConfig()

    pr = data.get("problem", {})
    _no_extra(r, pr, "problem", {"kind", "dim", "sigma_add", "x0", "metric", "sigma_convention"})
    r.get(pr, "problem", "kind", str, "quadratic", check=lambda v: v == "quadratic",
          what='must be "quadratic"')
    cfg.dim = r.get(pr, "problem", "dim", int, cfg.dim, check=lambda v: v >= 1, what="must be >= 1")
    cfg.sigma_add = r.get(pr, "problem", "sigma_add", float, cfg.sigma_add,
                          check=lambda v: v >= 0, what="must be >= 0")
    cfg.x0 = r.get(pr, "problem", "x0", str, cfg.x0, check=lambda v: v in ("spike", "zero"),
                   what='must be "spike" or "zero"')
    cfg.metric = r.get(pr, "problem", "metric", str, cfg.metric,
                       check=lambda v: v in ("grad_sq_norm", "f_value"),
                       what='must be "grad_sq_norm" or "f_value"')
    cfg.sigma_convention = r.get(pr, "problem", "sigma_convention", str, cfg.sigma_convention,
                                 check=lambda v: v in ("total", "additive"),
                                 what='must be "total" or "additive"')

    dl = data.get("delay", {})
    _no_extra(r, dl, "delay", {"kind", "n", "permute", "peaks", "stddev", "taus", "lo", "hi"})
    kind = r.get(dl, "delay", "kind", str, "sqrt",
                 check=lambda v: v in ("sqrt", "uniform", "mixture", "fixed"),
                 what='must be one of "sqrt", "uniform", "mixture", "fixed"')
    taus = r.get(dl, "delay", "taus", list, None)
    if kind == "fixed":
        if taus is None:
            raise r.err('kind = "fixed" needs a taus list', "delay", "kind")
        try:
            DelayProfile(tuple(float(t) for t in taus))
        except (ValueError, TypeError) as exc:
            raise r.err(str(exc), "delay", "taus") from None
    cfg.n = r.get(dl, "delay", "n", int, len(taus) if taus else cfg.n,
                  check=lambda v: v >= 1, what="must be >= 1")
    if taus is not None and len(taus) != cfg.n:
        raise r.err(f"taus has {len(taus)} entries but n = {cfg.n}", "delay", "taus")
    cfg.delay = DelayModel(
        kind=kind,
        permute=r.get(dl, "delay", "permute", bool, True),
        peaks=r.get(dl, "delay", "peaks", int, 3, check=lambda v: v >= 1, what="must be >= 1"),
        stddev=r.get(dl, "delay", "stddev", float, None, check=lambda v: v > 0, what="must be > 0"),
        lo=r.get(dl, "delay", "lo", float, None),
        hi=r.get(dl, "delay", "hi", float, None),
        taus=tuple(float(t) for t in taus) if taus is not None else None,
    )

    rn = data.get("run", {})
    _no_extra(r, rn, "run", {"budget", "seeds", "master_seed", "record_stride", "restart", "noise",
                             "resample_delays", "out", "max_grid", "top_k"})
    cfg.budget = r.get(rn, "run", "budget", float, cfg.budget,
                       check=lambda v: math.isfinite(v) and v >= 0, what="must be finite and >= 0")
    seeds = r.get(rn, "run", "seeds", list, cfg.seeds)
    if not seeds or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
        raise r.err("seeds must be a nonempty list of nonnegative integers", "run", "seeds")
    if len(set(seeds)) != len(seeds):
        raise r.err("seeds must be distinct", "run", "seeds")
    cfg.seeds = list(seeds)
    cfg.master_seed = r.get(rn, "run", "master_seed", int, 0, check=lambda v: v >= 0,
                            what="must be >= 0")
    cfg.record_stride = r.get(rn, "run", "record_stride", int, 1, check=lambda v: v >= 1,
                              what="must be >= 1")
    cfg.restart = r.get(rn, "run", "restart", bool, True)
    cfg.noise = r.get(rn, "run", "noise", str, "exact", check=lambda v: v in ("exact", "aggregate"),
                      what='must be "exact" or "aggregate"')
    cfg.resample_delays = r.get(rn, "run", "resample_delays", bool, True)
    cfg.out = r.get(rn, "run", "out", str, cfg.out)
    cfg.max_grid = r.get(rn, "run", "max_grid", int, cfg.max_grid, check=lambda v: v >= 1,
                         what="must be >= 1")
    cfg.top_k = r.get(rn, "run", "top_k", int, 3, check=lambda v: v >= 1, what="must be >= 1")

    th = data.get("theory", {})
    _no_extra(r, th, "theory", {"eps", "delta", "L_bar", "sigma", "L"})
    for key in ("eps", "delta", "L_bar", "sigma", "L"):
        if key in th:
            cfg.theory[key] = r.get(th, "theory", key, float, None,
                                    check=lambda v: v >= 0 and math.isfinite(v),
                                    what="must be finite and >= 0")

    methods = data.get("method", [])
    if not isinstance(methods, list):
        raise r.err("use [[method]] (an array of tables)", "method", None)
    for i, m in enumerate(methods):
        cfg.methods.append(_parse_method(r, m, i))
    return cfg


def _no_extra(r: _Reader, tbl: dict, table: str, allowed: set, index: int = 0):
    if not isinstance(tbl, dict):
        raise r.err(f"[{table}] must be a table", table, None)
    for k in tbl:
        if k not in allowed:
            raise r.err(f"unknown key {k!r} in [{table}]", table, k, index)


def _parse_method(r: _Reader, m: dict, i: int) -> MethodSpec:
    name = m.get("name")
    if name not in _METHOD_KEYS:
        raise r.err(f"method name must be one of {sorted(_METHOD_KEYS)}, got {name!r}",
                    "method", "name" if "name" in m else None, i)
    keys = _METHOD_KEYS[name]
    _no_extra(r, m, "method", {"name", *keys}, i)
    grid = {}
    for key in keys:
        if key not in m:
            raise r.err(f"{name} needs {key!r}", "method", None, i)
        vals = m[key] if isinstance(m[key], list) else [m[key]]
        if not vals:
            raise r.err(f"grid for {key!r} is empty", "method", key, i)
        for v in vals:
            if not _valid(key, v):
                raise r.err(f"invalid {key} value {v!r}", "method", key, i)
        grid[key] = [float(v) if key in ("gamma", "p", "alpha") else v for v in vals]
    return MethodSpec(name, grid)


def _valid(key: str, v: Any) -> bool:
    if isinstance(v, bool):
        return False
    if key == "gamma":
        return isinstance(v, (int, float)) and 0 < v < math.inf
    if key in ("p",):
        return isinstance(v, (int, float)) and 0 < v <= 1
    if key == "alpha":
        return isinstance(v, (int, float)) and 0 <= v <= 1
    if key == "B":
        return isinstance(v, int) and v >= 1
    if key == "B0":
        return v in ("B", "B^2") or (isinstance(v, int) and v >= 1)
    return False


def load_config(path) -> ExperimentConfig:
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
    return parse_config(text, path)
