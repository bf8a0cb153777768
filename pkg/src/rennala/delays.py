"""Worker speed models.

Two models are supported:

* the fixed model, where worker ``i`` needs ``taus[i]`` seconds per stochastic
  gradient (:class:`DelayProfile`), and
* the universal model, where worker ``i`` completes
  ``floor(integral of rate_i over [t1, t2])`` gradients in ``[t1, t2]``
  (:class:`RateFunction`, piecewise constant so integrals are exact).

:func:`sample_delays` draws the three delay profiles used by the quadratic
experiments (square-root, uniform and Gaussian mixture).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "DelayModel",
    "DelayProfile",
    "RateFunction",
    "gradients_completed",
    "sample_delays",
]


class InvalidProfileError(ValueError):
    """Raised when worker computation times violate the fixed computation model."""


@dataclass(frozen=True)
class DelayProfile:
    """Per-worker seconds per stochastic gradient.

    The order of ``taus`` is the worker order used by the simulator; it may be
    a permutation of the sorted profile.
    """

    taus: tuple[float, ...]

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        if len(taus) == 0:
            raise InvalidProfileError("a delay profile needs at least one worker")
        for i, t in enumerate(taus):
            if not (t > 0.0) or not math.isfinite(t):
                raise InvalidProfileError(
                    f"worker {i} has computation time {t!r}; the fixed computation "
                    "model requires 0 < tau_i < inf for every worker"
                )
        object.__setattr__(self, "taus", taus)

    @property
    def n(self) -> int:
        return len(self.taus)

    def sorted_view(self) -> np.ndarray:
        """Computation times in nondecreasing order."""
        return np.sort(np.asarray(self.taus, dtype=float))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.taus, dtype=float)

    def rate_functions(self) -> list["RateFunction"]:
        """Constant-rate functions equivalent to this profile."""
        return [RateFunction.constant(t) for t in self.taus]


@dataclass(frozen=True)
class RateFunction:
    """Piecewise-constant gradient rate ``p_i(s)`` (gradients per second).

    ``rates[j]`` holds on ``[breakpoints[j], breakpoints[j+1])`` and the last
    piece extends to infinity.  ``periods`` optionally stores the exact
    seconds-per-gradient of each piece; when present it is used instead of
    ``1 / rate`` so that constant-rate functions reproduce ``floor(t / tau)``
    bit for bit.
    """

    breakpoints: tuple[float, ...]
    rates: tuple[float, ...]
    periods: Optional[tuple[float, ...]] = field(default=None)

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        rates = tuple(float(r) for r in self.rates)
        if len(bps) == 0 or len(bps) != len(rates):
            raise ValueError("breakpoints and rates must be nonempty and of equal length")
        if bps[0] != 0.0:
            raise ValueError("the first breakpoint must be 0")
        if any(b1 <= b0 for b0, b1 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(not (r >= 0.0) or not math.isfinite(r) for r in rates):
            raise ValueError("rates must be finite and nonnegative")
        if self.periods is None:
            periods = tuple(1.0 / r if r > 0 else math.inf for r in rates)
        else:
            periods = tuple(float(p) for p in self.periods)
            if len(periods) != len(rates):
                raise ValueError("periods must match rates")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "periods", periods)

    @classmethod
    def constant(cls, tau: float) -> "RateFunction":
        """Rate ``1/tau`` for all times (the fixed computation model)."""
        if not tau > 0:
            raise InvalidProfileError(f"tau must be positive, got {tau!r}")
        return cls((0.0,), (1.0 / tau,), (float(tau),))

    def _pieces(self):
        bps = self.breakpoints
        for j, (r, per) in enumerate(zip(self.rates, self.periods)):
            end = bps[j + 1] if j + 1 < len(bps) else math.inf
            yield bps[j], end, r, per

    def integral(self, t1: float, t2: float) -> float:
        """Exact integral of the rate over ``[t1, t2]``."""
        if t2 < t1:
            raise ValueError(f"t2={t2} precedes t1={t1}")
        total = 0.0
        for a, b, r, per in self._pieces():
            lo, hi = max(a, t1), min(b, t2)
            if hi > lo and r > 0:
                total += (hi - lo) / per
        return total

    def time_to_reach(self, start: float, amount: float) -> float:
        """Smallest ``t >= start`` with ``integral(start, t) >= amount``.

        Returns ``inf`` if the rate never accumulates ``amount``.
        """
        if amount <= 0:
            return start
        acc = 0.0
        for a, b, r, per in self._pieces():
            if b <= start:
                continue
            lo = max(a, start)
            if r == 0:
                continue
            need = amount - acc
            span = b - lo
            if span == math.inf or span / per >= need:
                return lo + need * per
            acc += span / per
        return math.inf

    def is_zero(self) -> bool:
        return self.rates[-1] == 0.0 and all(r == 0.0 for r in self.rates)


def gradients_completed(rate: RateFunction, t1: float, t2: float) -> int:
    """Number of gradients a worker finishes in ``[t1, t2]`` under the universal model."""
    if t1 < 0:
        raise ValueError("t1 must be nonnegative")
    return int(math.floor(rate.integral(t1, t2)))


@dataclass(frozen=True)
class DelayModel:
    """Configuration of a delay distribution.

    ``kind`` is one of ``"sqrt"``, ``"uniform"``, ``"mixture"`` or ``"fixed"``.
    ``lo``/``hi`` default to ``[1, 10 n]``; ``stddev`` defaults to ``n``.
    """

    kind: str = "sqrt"
    permute: bool = True
    peaks: int = 3
    stddev: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    taus: Optional[tuple[float, ...]] = None


def sample_delays(model: DelayModel | str, n: int, seed: int | Sequence[int] = 0) -> DelayProfile:
    """Draw a delay profile for ``n`` workers.

    Deterministic in ``(model, n, seed)``.
    """
    if isinstance(model, str):
        model = DelayModel(kind=model)
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"worker count must be a positive integer, got {n!r}")
    rng = np.random.default_rng(seed)
    lo = 1.0 if model.lo is None else float(model.lo)
    hi = 10.0 * n if model.hi is None else float(model.hi)

    if model.kind == "sqrt":
        taus = np.sqrt(np.arange(1, n + 1, dtype=float))
        if model.permute:
            taus = taus[rng.permutation(n)]
    elif model.kind == "uniform":
        if lo >= hi:
            raise ValueError(f"uniform delays need lo < hi, got [{lo}, {hi}]")
        taus = rng.uniform(lo, hi, size=n)
    elif model.kind == "mixture":
        if model.peaks < 1:
            raise ValueError(f"mixture needs at least one peak, got {model.peaks}")
        if lo >= hi:
            raise ValueError(f"mixture support needs lo < hi, got [{lo}, {hi}]")
        stddev = float(n) if model.stddev is None else float(model.stddev)
        centers = rng.uniform(lo, hi, size=model.peaks)
        assign = rng.integers(0, model.peaks, size=n)
        taus = np.clip(rng.normal(centers[assign], stddev), lo, hi)
    elif model.kind == "fixed":
        if model.taus is None or len(model.taus) != n:
            raise ValueError("fixed delays need exactly n explicit taus")
        taus = np.asarray(model.taus, dtype=float)
    else:
        raise ValueError(f"unknown delay model {model.kind!r}")
    return DelayProfile(tuple(float(t) for t in taus))
