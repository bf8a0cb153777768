"""Update rules for Rennala SGD, Rennala MVR and the inexact MVR variant.

The pure functions (:func:`mvr_init`, :func:`mvr_step`, :func:`sgd_step`,
:func:`inexact_mvr_step`) transform immutable state records.  The method
classes at the bottom package them for the simulator: each declares its
payload kind (single gradients or gradient pairs), the points at which the
next round's gradients are evaluated, and how a collected round is consumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .problems import OracleSample, Problem

__all__ = [
    "AlreadyStationaryError",
    "InexactRennalaMVR",
    "LowNoiseRegimeError",
    "Minibatch",
    "MvrState",
    "RegimeError",
    "RennalaMVR",
    "RennalaSGD",
    "SgdState",
    "Theorem3Params",
    "inexact_mvr_step",
    "mvr_init",
    "mvr_step",
    "sgd_step",
    "theorem3_params",
]

SINGLE = "single"
PAIR = "pair"


@dataclass(frozen=True)
class MvrState:
    x: np.ndarray
    g: np.ndarray
    gamma: float
    p: float
    B: int
    B0: int
    alpha: float = 1.0
    k: int = 0
    oracle_calls: int = 0
    # last round's minibatch mean, used by the inexact variant only
    grad_old: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if not 0 < self.p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.B < 1 or self.B0 < 1:
            raise ValueError("B and B0 must be at least 1")


@dataclass(frozen=True)
class SgdState:
    x: np.ndarray
    gamma: float
    B: int
    k: int = 0
    oracle_calls: int = 0


@dataclass(frozen=True)
class Minibatch:
    """Minibatch means of one round.

    ``g_plus`` averages gradients at the new point; ``g_minus`` averages the
    same samples at the old point and is ``None`` for single-gradient rounds.
    """

    g_plus: np.ndarray
    g_minus: Optional[np.ndarray]
    count: int


def _evolve(state, **changes):
    # dataclasses.replace minus __post_init__: the hyperparameters never change
    # between rounds, so re-validating them is pure overhead in the hot loop
    new = object.__new__(type(state))
    new.__dict__.update(state.__dict__)
    new.__dict__.update(changes)
    return new


def _require_finite(*arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite value in optimizer input")


def mvr_init(
    problem: Problem,
    x0: np.ndarray,
    B0: int,
    seed: int = 0,
    *,
    gamma: float,
    p: float,
    B: int,
    alpha: float = 1.0,
    first_sample: int = 0,
) -> MvrState:
    """Initial estimator: mean of ``B0`` stochastic gradients at ``x0``."""
    if B0 < 1:
        raise ValueError("B0 must be at least 1")
    x0 = problem.check_dim(x0)
    samples = [OracleSample(seed, first_sample + j) for j in range(B0)]
    (g0,) = problem.mean_stochastic_grads([x0], samples)
    return MvrState(x=x0, g=g0, gamma=gamma, p=p, B=B, B0=B0, alpha=alpha,
                    oracle_calls=B0, grad_old=g0)


def mvr_next_point(state: MvrState) -> np.ndarray:
    return state.x - state.gamma * state.g


def mvr_step(state: MvrState, batch: Minibatch, *, check_finite: bool = True) -> MvrState:
    """One round of exact MVR.

    ``x' = x - gamma g`` uses only the current estimator; the batch, evaluated
    at ``(x, x')`` with shared samples, then gives
    ``g' = g_plus + (1 - p)(g - g_minus)``.

    ``g_minus`` may be omitted only when ``p == 1`` (the worker skips the
    old-point gradient and the round costs ``B`` evaluations instead of ``2B``).
    """
    if batch.count != state.B:
        raise ValueError(f"batch has {batch.count} arrivals, expected B={state.B}")
    if check_finite:
        _require_finite(state.x, state.g, batch.g_plus, batch.g_minus)
    x_new = state.x - state.gamma * state.g
    if batch.g_minus is None:
        if state.p != 1.0:
            raise ValueError("g_minus may only be dropped when p == 1")
        g_new = batch.g_plus
        calls = state.B
    else:
        g_new = batch.g_plus + (1.0 - state.p) * (state.g - batch.g_minus)
        calls = 2 * state.B
    return _evolve(state, x=x_new, g=g_new, k=state.k + 1,
                   oracle_calls=state.oracle_calls + calls)


def sgd_step(state: SgdState, batch: Minibatch, *, check_finite: bool = True) -> SgdState:
    """``x' = x - gamma * g_plus``."""
    if batch.count != state.B:
        raise ValueError(f"batch has {batch.count} arrivals, expected B={state.B}")
    if batch.g_minus is not None:
        raise ValueError("SGD consumes single gradients; g_minus must be absent")
    if check_finite:
        _require_finite(state.x, batch.g_plus)
    return _evolve(state, x=state.x - state.gamma * batch.g_plus, k=state.k + 1,
                   oracle_calls=state.oracle_calls + state.B)


def inexact_mvr_step(
    state: MvrState,
    grad_new: np.ndarray,
    grad_old: Optional[np.ndarray] = None,
    *,
    count: Optional[int] = None,
    check_finite: bool = True,
) -> MvrState:
    """Inexact MVR round with correction scale ``alpha``.

    ``g' = (1-p) g + p grad_new + alpha (1-p)(grad_new - grad_old)`` where
    ``grad_old`` is last round's minibatch mean (cached in the state) rather
    than a re-evaluation with the current samples.  The expression is arranged
    as ``grad_new + (1-p)(g - (alpha grad_old + (1-alpha) grad_new))`` so that
    ``alpha = 1`` with a freshly evaluated ``grad_old`` reproduces
    :func:`mvr_step` bit for bit.
    """
    if grad_old is None:
        grad_old = state.grad_old
    if grad_old is None:
        raise ValueError("no cached gradient: seed grad_old from the initialization")
    if count is not None and count != state.B:
        raise ValueError(f"batch has {count} arrivals, expected B={state.B}")
    if check_finite:
        _require_finite(state.x, state.g, grad_new, grad_old)
    a = state.alpha
    x_new = state.x - state.gamma * state.g
    anchor = a * grad_old + (1.0 - a) * grad_new
    g_new = grad_new + (1.0 - state.p) * (state.g - anchor)
    return _evolve(state, x=x_new, g=g_new, k=state.k + 1,
                   oracle_calls=state.oracle_calls + state.B, grad_old=grad_new)


class RegimeError(ValueError):
    """Parameters fall outside the regime where the step-size/batch formulas apply."""


class LowNoiseRegimeError(RegimeError):
    pass


class AlreadyStationaryError(RegimeError):
    pass


@dataclass(frozen=True)
class Theorem3Params:
    gamma: float
    p: float
    B: int
    B0: int
    K: int
    regime: str  # "mvr", "low_noise" or "stationary"


def _ceil(v: float) -> int:
    # guard against values like 60.000000000000007 that are integers up to rounding
    r = round(v)
    if abs(v - r) <= 1e-12 * max(1.0, abs(v)):
        return int(r)
    return math.ceil(v)


def theorem3_params(eps: float, sigma: float, delta: float, L_bar: float,
                    *, strict: bool = False) -> Theorem3Params:
    """Step size, momentum, batch sizes and round count for target accuracy ``eps``.

    In the regime ``eps < sigma**2`` and ``eps < 2 L_bar delta``:
    ``gamma = 1/(4 L_bar)``, ``p = sqrt(eps)/sigma``, ``B = ceil(6 sigma/sqrt(eps))``,
    ``B0 = ceil(6 sigma**2/eps)`` and ``K = ceil(24 delta L_bar/eps + sigma/sqrt(eps))``.

    Outside it the fallbacks are returned with ``regime`` set accordingly
    (or raised when ``strict``):

    * ``sigma**2 <= eps``: ``p = 1`` (plain minibatch SGD), batch sizes from the
      same formulas with ``p = 1``, floored at 1;
    * ``2 L_bar delta <= eps``: the starting point is already stationary, ``K = 0``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if sigma < 0 or delta < 0 or not L_bar > 0:
        raise ValueError("need sigma >= 0, delta >= 0 and L_bar > 0")
    gamma = 1.0 / (4.0 * L_bar)
    if eps >= 2.0 * L_bar * delta:
        if strict:
            raise AlreadyStationaryError(
                f"eps={eps} >= 2 L_bar delta={2 * L_bar * delta}: x0 is already eps-stationary")
        return Theorem3Params(gamma, 1.0, 1, 1, 0, "stationary")
    K = _ceil(24.0 * delta * L_bar / eps + sigma / math.sqrt(eps))
    if sigma * sigma <= eps:
        if strict:
            raise LowNoiseRegimeError(f"sigma^2={sigma * sigma} <= eps={eps}: use p = 1")
        B = max(1, _ceil(6.0 * sigma * sigma / eps))
        return Theorem3Params(gamma, 1.0, B, B, K, "low_noise")
    p = math.sqrt(eps) / sigma
    B = _ceil(6.0 * sigma / math.sqrt(eps))
    B0 = _ceil(6.0 * sigma * sigma / eps)
    return Theorem3Params(gamma, p, B, B0, K, "mvr")


class RennalaSGD:
    """Collect ``B`` single gradients at ``x``, step with their mean."""

    name = "rennala_sgd"

    def __init__(self, gamma: float, B: int):
        self.gamma = float(gamma)
        self.B = int(B)
        if self.B < 1:
            raise ValueError("B must be at least 1")
        self.payload_kind = SINGLE
        self.init_size = 0

    def hyperparams(self) -> dict:
        return {"gamma": self.gamma, "B": self.B}

    def initial_state(self, x0):
        return SgdState(x=np.asarray(x0, dtype=float), gamma=self.gamma, B=self.B)

    def initialize(self, state, g0):
        raise RuntimeError("Rennala SGD has no initialization phase")

    def query_points(self, state):
        return [state.x]

    def update(self, state, means):
        return sgd_step(state, Minibatch(means[0], None, self.B), check_finite=False)


class RennalaMVR:
    """Exact Rennala MVR: rounds of ``B`` gradient pairs at ``(x^k, x^{k+1})``.

    With ``ignore_minus=True`` (allowed only for ``p = 1``) workers compute the
    new-point gradient alone, which turns the method into Rennala SGD with a
    one-round lookahead.
    """

    name = "rennala_mvr"

    def __init__(self, gamma: float, p: float, B: int, B0: int, ignore_minus: bool = False):
        self.gamma, self.p = float(gamma), float(p)
        self.B, self.B0 = int(B), int(B0)
        if ignore_minus and self.p != 1.0:
            raise ValueError("ignore_minus requires p == 1")
        self.ignore_minus = ignore_minus
        self.payload_kind = SINGLE if ignore_minus else PAIR
        self.init_size = self.B0
        MvrState(np.zeros(1), np.zeros(1), self.gamma, self.p, self.B, self.B0)  # validate

    def hyperparams(self) -> dict:
        return {"gamma": self.gamma, "p": self.p, "B": self.B, "B0": self.B0}

    def initial_state(self, x0):
        x0 = np.asarray(x0, dtype=float)
        return MvrState(x=x0, g=np.zeros_like(x0), gamma=self.gamma, p=self.p,
                        B=self.B, B0=self.B0)

    def initialize(self, state, g0):
        return replace(state, g=g0, oracle_calls=self.B0, grad_old=g0)

    def query_points(self, state):
        x_next = mvr_next_point(state)
        return [x_next] if self.ignore_minus else [state.x, x_next]

    def update(self, state, means):
        if self.ignore_minus:
            batch = Minibatch(means[0], None, self.B)
        else:
            batch = Minibatch(means[1], means[0], self.B)
        return mvr_step(state, batch, check_finite=False)


class InexactRennalaMVR(RennalaMVR):
    """MVR variant that reuses last round's gradients instead of re-evaluating."""

    name = "rennala_mvr_inexact"

    def __init__(self, gamma: float, p: float, B: int, B0: int, alpha: float):
        super().__init__(gamma, p, B, B0)
        self.alpha = float(alpha)
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        self.payload_kind = SINGLE

    def hyperparams(self) -> dict:
        return {**super().hyperparams(), "alpha": self.alpha}

    def initial_state(self, x0):
        return replace(super().initial_state(x0), alpha=self.alpha)

    def query_points(self, state):
        return [mvr_next_point(state)]

    def update(self, state, means):
        return inexact_mvr_step(state, means[0], count=self.B, check_finite=False)


def make_method(name: str, **hp):
    """Build a method from its config name and hyperparameters."""
    if name == "rennala_sgd":
        return RennalaSGD(hp["gamma"], hp["B"])
    if name == "rennala_mvr":
        return RennalaMVR(hp["gamma"], hp["p"], hp["B"], hp["B0"], hp.get("ignore_minus", False))
    if name == "rennala_mvr_inexact":
        return InexactRennalaMVR(hp["gamma"], hp["p"], hp["B"], hp["B0"], hp["alpha"])
    raise ValueError(f"unknown method {name!r}")
