"""Stochastic first-order oracles.

The shipped problem is the tridiagonal quadratic

    f(x) = 1/2 x^T A x - b^T x,   A = (1/4) tridiag(-1, 2, -1),   b = (-1/4, 0, ..., 0)

with the additive-noise oracle ``grad f(x; zeta) = grad f(x) + zeta``,
``zeta ~ N(0, sigma_add^2 I)``.  The noise of a sample depends only on its
identity, so two evaluations of the same sample at different points differ
by exactly ``A (x - y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

__all__ = [
    "OracleSample",
    "Problem",
    "QuadraticProblem",
    "SampleOracle",
    "make_oracle",
]


@dataclass(frozen=True)
class OracleSample:
    """Identity of one data sample: the run seed plus a per-run sample counter."""

    run_seed: int
    index: int


def _philox(run_seed: int, index: int) -> np.random.Generator:
    # two 64-bit key words: counter-based, so any sample can be regenerated in isolation
    key = [int(run_seed) & 0xFFFFFFFFFFFFFFFF, int(index) & 0xFFFFFFFFFFFFFFFF]
    return np.random.Generator(np.random.Philox(key=key))


class Problem:
    """Minimal oracle interface; subclasses provide ``dim``, ``value``,
    ``exact_grad`` and ``stochastic_grad``."""

    dim: int

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def exact_grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stochastic_grad(self, x: np.ndarray, sample: OracleSample) -> np.ndarray:
        raise NotImplementedError

    def grad_sq_norm(self, x: np.ndarray) -> float:
        g = self.exact_grad(x)
        return float(g @ g)

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.dim)

    def check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of shape ({self.dim},), got {x.shape}")
        return x

    def mean_stochastic_grads(
        self, points: Sequence[np.ndarray], samples: Sequence[OracleSample]
    ) -> list[np.ndarray]:
        """Minibatch means at each point; every point sees the same samples."""
        return [
            batch_mean(np.stack([self.stochastic_grad(x, s) for s in samples]))
            for x in points
        ]


def batch_mean(rows: np.ndarray) -> np.ndarray:
    """Mean over axis 0, with exactly rounded column sums for large batches."""
    count = rows.shape[0]
    if count >= 10_000:
        return np.array([math.fsum(col) for col in rows.T]) / count
    return rows.sum(axis=0) / count


class QuadraticProblem(Problem):
    """Tridiagonal quadratic benchmark with additive Gaussian gradient noise.

    Parameters
    ----------
    dim : int
        Dimension ``d``.
    sigma_add : float
        Per-coordinate noise standard deviation.  The total noise variance is
        ``d * sigma_add**2``.
    """


    def __init__(self, dim: int = 100, sigma_add: float = 0.1):
        if dim < 1:
            raise ValueError("dim must be at least 1")
        if sigma_add < 0:
            raise ValueError("sigma_add must be nonnegative")
        self.dim = int(dim)
        self.sigma_add = float(sigma_add)
        self.b = np.zeros(self.dim)
        self.b[0] = -0.25

    def __repr__(self):
        return f"QuadraticProblem(dim={self.dim}, sigma_add={self.sigma_add})"

    @property
    def A(self) -> np.ndarray:
        """Dense copy of the Hessian (for tests and small checks)."""
        d = self.dim
        return 0.5 * np.eye(d) - 0.25 * np.eye(d, k=1) - 0.25 * np.eye(d, k=-1)

    def hess_vec(self, v: np.ndarray) -> np.ndarray:
        out = 0.5 * v
        out[1:] -= 0.25 * v[:-1]
        out[:-1] -= 0.25 * v[1:]
        return out

    def initial_point(self) -> np.ndarray:
        x0 = np.zeros(self.dim)
        x0[0] = math.sqrt(self.dim)
        return x0

    def value(self, x):
        x = self.check_dim(x)
        return float(0.5 * x @ self.hess_vec(x) - self.b @ x)

    def exact_grad(self, x):
        x = self.check_dim(x)
        return self.hess_vec(x) - self.b

    def grad_sq_norm(self, x):
        g = self.exact_grad(x)
        return float(g @ g)

    def noise(self, sample: OracleSample) -> np.ndarray:
        return self.sigma_add * _philox(sample.run_seed, sample.index).standard_normal(self.dim)

    def stochastic_grad(self, x, sample):
        return self.exact_grad(x) + self.noise(sample)

    def mean_stochastic_grads(self, points, samples):
        if self.sigma_add == 0.0:
            zeta = np.zeros(self.dim)
        else:
            zeta = batch_mean(np.stack([self.noise(s) for s in samples]))
        return [self.exact_grad(x) + zeta for x in points]

    @property
    def sigma(self) -> float:
        """Total noise standard deviation ``sqrt(d) * sigma_add``."""
        return math.sqrt(self.dim) * self.sigma_add

    def eigenvalues(self) -> np.ndarray:
        d = self.dim
        return linalg.eigh_tridiagonal(np.full(d, 0.5), np.full(d - 1, -0.25), eigvals_only=True)

    def smoothness(self) -> float:
        """Largest eigenvalue of ``A``; equals both L and the mean-squared L-bar."""
        return float(self.eigenvalues()[-1])

    def minimizer(self) -> np.ndarray:
        d = self.dim
        ab = np.zeros((3, d))
        ab[0, 1:] = -0.25
        ab[1, :] = 0.5
        ab[2, :-1] = -0.25
        return linalg.solve_banded((1, 1), ab, self.b)

    def min_value(self) -> float:
        return float(-0.5 * self.b @ self.minimizer())

    def suboptimality(self, x0: np.ndarray | None = None) -> float:
        x0 = self.initial_point() if x0 is None else x0
        return self.value(x0) - self.min_value()


class SampleOracle:
    """Per-run gradient source used by the simulator.

    ``mode="exact"`` evaluates every sample individually from its counter-based
    key.  ``mode="aggregate"`` is available for additive Gaussian noise only: the
    minibatch-mean noise ``N(0, sigma_add^2 / B I)`` is drawn directly from a
    sequential per-run stream, which has the same distribution at a fraction
    of the cost.
    """

    def __init__(self, problem: Problem, run_seed: int, mode: str = "exact"):
        if mode not in ("exact", "aggregate"):
            raise ValueError(f"unknown oracle mode {mode!r}")
        if mode == "aggregate" and not isinstance(problem, QuadraticProblem):
            raise ValueError("aggregate mode needs an additive Gaussian noise problem")
        self.problem = problem
        self.run_seed = int(run_seed)
        self.mode = mode
        self._stream = np.random.default_rng([self.run_seed, 0xA66]) if mode == "aggregate" else None

    def mean_grads(self, points: Sequence[np.ndarray], first: int, count: int) -> list[np.ndarray]:
        if self.mode == "exact":
            samples = [OracleSample(self.run_seed, first + j) for j in range(count)]
            return self.problem.mean_stochastic_grads(points, samples)
        prob = self.problem
        zeta = (prob.sigma_add / math.sqrt(count)) * self._stream.standard_normal(prob.dim)
        return [prob.hess_vec(x) - prob.b + zeta for x in points]


def make_oracle(problem: Problem, run_seed: int, mode: str = "exact") -> SampleOracle:
    return SampleOracle(problem, run_seed, mode)
