"""Closed-form time and oracle complexities.

Everything here is a pure function of the delay profile and the problem
constants ``(eps, sigma, delta, L_bar)``.  Big-O expressions are evaluated
with explicit constants: 2 and 4 for the initialization and pair rounds of
Rennala MVR, 24 for the iteration counts, and ``c = 1`` for the lower bound.
The SGD bound carries no constant of its own in the literature we follow; it
reuses 24 and says so in :attr:`ComplexityReport.conventions`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .delays import DelayProfile, RateFunction
from .optim import _ceil, theorem3_params

__all__ = [
    "ComplexityReport",
    "UnreachableTargetError",
    "complexity_report",
    "lower_time_bound",
    "mvr_time_bound",
    "sgd_time_bound",
    "t_of_b",
    "universal_completion_times",
    "universal_sgd_completion_times",
]

SGD_CONSTANT = 24.0


def _sorted_taus(profile) -> np.ndarray:
    if isinstance(profile, DelayProfile):
        return profile.sorted_view()
    taus = np.sort(np.asarray(profile, dtype=float))
    if taus.size == 0 or np.any(taus <= 0):
        raise ValueError("need at least one positive computation time")
    return taus


def t_of_b(profile, b: float) -> tuple[float, int]:
    """``min over m of (sum_{i<=m} 1/tau_i)^{-1} (b + m)`` and the smallest minimizing ``m``.

    ``m`` is 1-based; the taus are taken in sorted order.
    """
    taus = _sorted_taus(profile)
    m = np.arange(1, taus.size + 1)
    vals = (b + m) / np.cumsum(1.0 / taus)
    j = int(np.argmin(vals))
    return float(vals[j]), j + 1


def mvr_time_bound(eps, sigma, delta, L_bar, profile) -> float:
    """``2 T(B0) + 4 K T(B)`` with the step-size/batch choices of the MVR theorem."""
    prm = theorem3_params(eps, sigma, delta, L_bar, strict=True)
    return 2.0 * t_of_b(profile, prm.B0)[0] + 4.0 * prm.K * t_of_b(profile, prm.B)[0]


def _sgd_batch(eps, sigma) -> int:
    return max(1, _ceil(sigma * sigma / eps))


def sgd_time_bound(eps, sigma, delta, L, profile) -> float:
    """``(24 L delta / eps) T(ceil(sigma^2/eps))`` for Rennala SGD."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return SGD_CONSTANT * L * delta / eps * t_of_b(profile, _sgd_batch(eps, sigma))[0]


def lower_time_bound(eps, sigma, delta, L_bar, profile, c: float = 1.0) -> float:
    """``c (L_bar delta min(sqrt(eps)/sigma, 1) / eps + 1) T(sigma^2/eps)``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    ratio = 1.0 if sigma == 0 else min(math.sqrt(eps) / sigma, 1.0)
    return c * (L_bar * delta * ratio / eps + 1.0) * t_of_b(profile, sigma * sigma / eps)[0]


@dataclass
class ComplexityReport:
    t_of_B: float
    mvr_time: float
    sgd_time: float
    lower_time: float
    mvr_oracle: int
    sgd_oracle: int
    argmin_m: dict
    params: dict
    conventions: list = field(default_factory=list)

    def rows(self):
        yield "T(B)", self.t_of_B
        yield "mvr_time", self.mvr_time
        yield "sgd_time", self.sgd_time
        yield "lower_time", self.lower_time
        yield "mvr_oracle", self.mvr_oracle
        yield "sgd_oracle", self.sgd_oracle
        for k, v in self.argmin_m.items():
            yield f"argmin_m[{k}]", v
        for k, v in self.params.items():
            yield f"param[{k}]", v

    def as_text(self) -> str:
        rows = list(self.rows())
        width = max(len(k) for k, _ in rows)
        lines = [f"{k:<{width}}  {v:.10g}" if isinstance(v, float) else f"{k:<{width}}  {v}"
                 for k, v in rows]
        lines += [f"# {c}" for c in self.conventions]
        return "\n".join(lines)

    def as_csv(self) -> str:
        out = ["quantity,value"]
        out += [f"{k},{v!r}" if isinstance(v, float) else f"{k},{v}" for k, v in self.rows()]
        return "\n".join(out) + "\n"


def complexity_report(eps, sigma, delta, L_bar, profile, L=None) -> ComplexityReport:
    """Evaluate every bound for one parameter point; ``L`` defaults to ``L_bar``."""
    L = L_bar if L is None else L
    prm = theorem3_params(eps, sigma, delta, L_bar, strict=True)
    tB, mB = t_of_b(profile, prm.B)
    _, mB0 = t_of_b(profile, prm.B0)
    sgd_b = _sgd_batch(eps, sigma)
    _, m_sgd = t_of_b(profile, sgd_b)
    _, m_low = t_of_b(profile, sigma * sigma / eps)
    k_sgd = _ceil(SGD_CONSTANT * L * delta / eps)
    return ComplexityReport(
        t_of_B=tB,
        mvr_time=mvr_time_bound(eps, sigma, delta, L_bar, profile),
        sgd_time=sgd_time_bound(eps, sigma, delta, L, profile),
        lower_time=lower_time_bound(eps, sigma, delta, L_bar, profile),
        mvr_oracle=prm.B0 + 2 * prm.K * prm.B,
        sgd_oracle=k_sgd * sgd_b,
        argmin_m={"B": mB, "B0": mB0, "sgd_batch": m_sgd, "lower": m_low},
        params={"gamma": prm.gamma, "p": prm.p, "B": prm.B, "B0": prm.B0, "K": prm.K,
                "sgd_batch": sgd_b, "sgd_K": k_sgd},
        conventions=[
            "sgd_time uses constant 24 (borrowed from the MVR iteration bound; no constant is published)",
            "lower_time uses c = 1",
        ],
    )


class UnreachableTargetError(RuntimeError):
    """The workers can never complete the requested number of gradients."""


def _increments(rate: RateFunction, start: float, t: float, unit: float) -> int:
    """Number of ``unit``-sized blocks worker finishes in ``[start, t]``, consistent with
    :meth:`RateFunction.time_to_reach`."""
    if t < start:
        return 0
    c = int(math.floor(rate.integral(start, t) / unit))
    # the float integral can sit one block off an exact breakpoint
    while c > 0 and rate.time_to_reach(start, c * unit) > t:
        c -= 1
    while rate.time_to_reach(start, (c + 1) * unit) <= t:
        c += 1
    return c


def _first_time(rates: Sequence[RateFunction], start: float, target: int, unit: float,
                tol: float = 1e-9) -> float:
    """``min{t >= start : sum_i floor(integral_start^t p_i / unit) >= target}``."""
    if target <= 0:
        return start

    def count(t):
        return sum(_increments(r, start, t, unit) for r in rates)

    reach = [r.time_to_reach(start, target * unit) for r in rates]
    hi = min(reach)
    if hi == math.inf:
        # no single worker suffices; try pooling until the total saturates
        span = 1.0
        while True:
            hi = start + span
            if count(hi) >= target:
                break
            if all(r.rates[-1] == 0 for r in rates) and hi > max(r.breakpoints[-1] for r in rates):
                raise UnreachableTargetError(f"rates never accumulate {target} blocks")
            span *= 2.0
            if span > 1e300:
                raise UnreachableTargetError(f"rates never accumulate {target} blocks")
    lo = start
    if count(lo) >= target:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if count(mid) >= target:
            hi = mid
        else:
            lo = mid
    # snap to the exact breakpoint where the floor sum reaches the target
    candidates = set()
    for r in rates:
        c_lo, c_hi = _increments(r, start, lo, unit), _increments(r, start, hi, unit)
        for j in range(c_lo + 1, c_hi + 1):
            candidates.add(r.time_to_reach(start, j * unit))
    for t in sorted(candidates):
        if lo < t <= hi and count(t) >= target:
            return t
    return hi


def universal_completion_times(rates: Sequence[RateFunction], B0: int, B: int, K: int) -> list[float]:
    """Round boundaries ``T^0..T^K`` of Rennala MVR under time-varying worker rates.

    ``T^0`` is when ``B0`` single gradients are done; each later boundary is when
    ``B`` gradient pairs (two gradients each) are done since the previous one,
    with all workers reset at every boundary.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    if all(r.is_zero() for r in rates):
        raise UnreachableTargetError("all rates are identically zero")
    times = [_first_time(rates, 0.0, B0, 1.0)]
    for _ in range(K):
        times.append(_first_time(rates, times[-1], B, 2.0))
    return times


def universal_sgd_completion_times(rates: Sequence[RateFunction], batch: int, K: int) -> list[float]:
    """Round boundaries ``T^0 = 0, T^1..T^K`` of Rennala SGD with ``batch`` gradients per round."""
    if all(r.is_zero() for r in rates):
        raise UnreachableTargetError("all rates are identically zero")
    times = [0.0]
    for _ in range(K):
        times.append(_first_time(rates, times[-1], batch, 1.0))
    return times
