"""Zero-chain hard instance for stochastic nonconvex optimization.

The chain function on ``R^T`` is

    F_T(x) = -Psi(1) Phi(x_1) + sum_{i=2}^T [Psi(-x_{i-1}) Phi(-x_i) - Psi(x_{i-1}) Phi(x_i)]

with ``Psi(t) = exp(1 - 1/(2t-1)^2)`` for ``t > 1/2`` (zero otherwise) and
``Phi(t) = sqrt(e) * int_{-inf}^t exp(-s^2/2) ds``.  Its stochastic gradient
``gbar`` multiplies coordinate ``i`` of ``grad F_T`` by
``1 + Theta_i(x) (xi/p - 1)`` with ``xi ~ Bernoulli(p)``, which hides the next
chain coordinate unless ``xi = 1``.

All functions accept a single point of shape ``(T,)`` or a batch ``(N, T)``.
The ``check_*`` helpers measure the quantities bounded by the known lemmas
(returning measured values and bounds rather than asserting).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

__all__ = [
    "ChainInstance",
    "RescaledChain",
    "chain_grad",
    "chain_value",
    "gamma_bump",
    "gamma_bump_deriv",
    "lower_bound_parameters",
    "phi",
    "prog",
    "psi",
    "theta",
    "zero_chain_grad",
]

# chain constants: Delta_0, ell_1, gamma_inf; estimator constants varsigma, ell_1 bar
DELTA0 = 12.0
ELL1 = 152.0
GAMMA_INF = 23.0
VARSIGMA = 23.0
ELL1_BAR = 328.0

_SQRT_E = math.sqrt(math.e)
_PHI_SCALE = _SQRT_E * math.sqrt(2.0 * math.pi)


def prog(x, alpha: float = 0.0):
    """Largest 1-based index with ``|x_i| > alpha``; 0 if none (virtual ``x_0 = 1``)."""
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    x = np.asarray(x, dtype=float)
    above = np.abs(x) > alpha
    T = x.shape[-1]
    # index of the last True along the last axis, 0 when there is none
    last = T - np.argmax(above[..., ::-1], axis=-1)
    res = np.where(above.any(axis=-1), last, 0)
    return int(res) if res.ndim == 0 else res


def psi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t > 0.5
    out[m] = np.exp(1.0 - 1.0 / (2.0 * t[m] - 1.0) ** 2)
    return out if out.ndim else float(out)


def psi_deriv(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t > 0.5
    u = 2.0 * t[m] - 1.0
    out[m] = np.exp(1.0 - 1.0 / u**2) * 4.0 / u**3
    return out if out.ndim else float(out)


def phi(t):
    """``sqrt(e) * sqrt(2 pi) * StdNormalCDF(t)``."""
    r = _PHI_SCALE * special.ndtr(np.asarray(t, dtype=float))
    return r if np.ndim(r) else float(r)


def phi_deriv(t):
    r = _SQRT_E * np.exp(-0.5 * np.asarray(t, dtype=float) ** 2)
    return r if np.ndim(r) else float(r)


def _bump(t):
    """Unnormalized bump ``Lambda`` supported on ``(1/4, 1/2)``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = (t > 0.25) & (t < 0.5)
    out[m] = np.exp(-1.0 / (100.0 * (t[m] - 0.25) * (0.5 - t[m])))
    return out


def _bump_deriv(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = (t > 0.25) & (t < 0.5)
    tm = t[m]
    q = (tm - 0.25) * (0.5 - tm)
    out[m] = np.exp(-1.0 / (100.0 * q)) * (0.75 - 2.0 * tm) / (100.0 * q * q)
    return out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass
class ChainInstance:
    """Chain length ``T`` plus the precomputed normalization of the smooth step.

    ``quadrature_resolution`` is the (even) number of composite-Simpson
    intervals on ``[1/4, 1/2]``.  Cumulative Simpson values at panel edges are
    kept, so evaluating the step needs only one short Gauss-Legendre segment.
    """

    T: int
    quadrature_resolution: int = 10_000
    gamma_norm_const: float = field(init=False)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        n = int(self.quadrature_resolution)
        if n < 1000:
            raise ValueError("quadrature_resolution must be at least 1000")
        n += n % 2
        self.quadrature_resolution = n
        h = 0.25 / n
        nodes = 0.25 + h * np.arange(n + 1)
        f = _bump(nodes)
        panels = (h / 3.0) * (f[:-2:2] + 4.0 * f[1:-1:2] + f[2::2])
        self._panel_width = 2 * h
        self._cum = np.concatenate([[0.0], np.cumsum(panels)])
        self.gamma_norm_const = float(self._cum[-1])

    def _partial(self, t: np.ndarray) -> np.ndarray:
        """``int_{1/4}^t Lambda`` for ``t`` in ``[1/4, 1/2]``."""
        npan = len(self._cum) - 1
        j = np.clip(np.floor((t - 0.25) / self._panel_width).astype(int), 0, npan - 1)
        a = 0.25 + j * self._panel_width
        half = 0.5 * (t - a)
        pts = a[..., None] + half[..., None] * (_GL_NODES + 1.0)
        seg = half * (_bump(pts) @ _GL_WEIGHTS)
        return self._cum[j] + seg


def gamma_bump(inst: ChainInstance, t):
    """Smooth nondecreasing step: 0 for ``t <= 1/4``, 1 for ``t >= 1/2``."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 0.5, 1.0, 0.0)
    m = (t > 0.25) & (t < 0.5)
    if np.any(m):
        out[m] = np.clip(inst._partial(t[m]) / inst.gamma_norm_const, 0.0, 1.0)
    return out if out.ndim else float(out)


def gamma_bump_deriv(inst: ChainInstance, t, order: int = 1):
    """First or second derivative of :func:`gamma_bump`."""
    if order == 1:
        r = _bump(t) / inst.gamma_norm_const
    elif order == 2:
        r = _bump_deriv(t) / inst.gamma_norm_const
    else:
        raise ValueError("order must be 1 or 2")
    return r if np.ndim(r) else float(r)


def _check_T(inst, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != inst.T:
        raise ValueError(f"expected points in R^{inst.T}, got shape {x.shape}")
    return x


def _with_x0(x):
    one = np.ones(x.shape[:-1] + (1,))
    return np.concatenate([one, x], axis=-1)


def chain_value(inst: ChainInstance, x):
    x = _check_T(inst, x)
    prev = _with_x0(x)[..., :-1]
    terms = psi(-prev) * phi(-x) - psi(prev) * phi(x)
    r = terms.sum(axis=-1)
    return r if np.ndim(r) else float(r)


def chain_grad(inst: ChainInstance, x):
    x = _check_T(inst, x)
    prev = _with_x0(x)[..., :-1]
    g = -psi(-prev) * phi_deriv(-x) - psi(prev) * phi_deriv(x)
    # contribution of term i+1 through its Psi(x_i) factor
    nxt = x[..., 1:]
    cur = x[..., :-1]
    g[..., :-1] += -psi_deriv(-cur) * phi(-nxt) - psi_deriv(cur) * phi(nxt)
    return g


def theta(inst: ChainInstance, x, i=None):
    """``Gamma(1 - ||Gamma(|x_{>=i}|)||_2)``; all ``i = 1..T`` at once when ``i`` is None."""
    x = _check_T(inst, x)
    g2 = gamma_bump(inst, np.abs(x)) ** 2
    tail = np.cumsum(g2[..., ::-1], axis=-1)[..., ::-1]
    th = gamma_bump(inst, 1.0 - np.sqrt(tail))
    if i is None:
        return th
    if not 1 <= i <= inst.T:
        raise ValueError("i must lie in 1..T")
    r = th[..., i - 1]
    return r if np.ndim(r) else float(r)


def zero_chain_grad(inst: ChainInstance, x, xi, p: float):
    """Probability-``p`` zero-chain estimator ``grad F_T(x) * nu(x, xi)``.

    ``xi`` may be a scalar or an array broadcasting against the leading axes of ``x``.
    """
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    x = _check_T(inst, x)
    xi = np.asarray(xi, dtype=float)
    nu = 1.0 + theta(inst, x) * (xi[..., None] / p - 1.0)
    return chain_grad(inst, x) * nu


def gbar_moments(inst: ChainInstance, x, p: float):
    """Exact mean and variance ``E||gbar - grad F||^2`` (two-point expectation over xi)."""
    g1 = zero_chain_grad(inst, x, 1.0, p)
    g0 = zero_chain_grad(inst, x, 0.0, p)
    mean = p * g1 + (1 - p) * g0
    gf = chain_grad(inst, x)
    var = p * np.sum((g1 - gf) ** 2, axis=-1) + (1 - p) * np.sum((g0 - gf) ** 2, axis=-1)
    return mean, var


@dataclass
class RescaledChain:
    """``f(x) = (L lam^2 / ell_1) F_T(x / lam)`` with ``lam = (ell_1 / L) sqrt(2 eps)``."""

    inst: ChainInstance
    L: float
    eps: float

    @property
    def lam(self) -> float:
        return ELL1 / self.L * math.sqrt(2.0 * self.eps)

    def value(self, x):
        return self.L * self.lam**2 / ELL1 * chain_value(self.inst, np.asarray(x) / self.lam)

    def grad(self, x):
        return self.L * self.lam / ELL1 * chain_grad(self.inst, np.asarray(x) / self.lam)


def lower_bound_parameters(eps, sigma, delta, L_bar) -> dict:
    """Bernoulli ``p``, smoothness ``L``, scale ``lam`` and chain length ``T`` of the hard instance."""
    p = min(2.0 * eps * VARSIGMA**2 / sigma**2, 1.0) if sigma > 0 else 1.0
    L = ELL1 / ELL1_BAR * L_bar * math.sqrt(p)
    lam = ELL1 / L * math.sqrt(2.0 * eps)
    T = int(math.floor(L * delta / (2.0 * DELTA0 * ELL1 * eps)))
    return {"p": p, "L": L, "lam": lam, "T": T}


# ---------------------------------------------------------------------------
# point generators and lemma measurements


def sample_points(T: int, n: int, rng: np.random.Generator, delta: float = 1e-3) -> np.ndarray:
    """Test points: dense uniform on [-2, 2]^T, sparse prefixes, and near-threshold values.

    A third of the points are dense, a third have a random-length prefix of
    large coordinates followed by small ones (so progress is below T), and a
    third put every coordinate at ``+-(c +- delta)`` for ``c`` in ``{1/4, 1/2, 1}``
    or zero.
    """
    n1, n2 = n // 3, n // 3
    n3 = n - n1 - n2
    dense = rng.uniform(-2.0, 2.0, size=(n1, T))
    k = rng.integers(0, T + 1, size=n2)
    big = rng.uniform(-2.0, 2.0, size=(n2, T))
    small = rng.uniform(-0.6, 0.6, size=(n2, T)) * (rng.random((n2, T)) < 0.5)
    prefix = np.where(np.arange(T) < k[:, None], big, small)
    levels = np.array([0.0, 0.25 - delta, 0.25 + delta, 0.5 - delta, 0.5 + delta,
                       1.0 - delta, 1.0 + delta])
    near = rng.choice(levels, size=(n3, T)) * rng.choice([-1.0, 1.0], size=(n3, T))
    # keep a random suffix at zero so the progress varies
    cut = rng.integers(0, T + 1, size=n3)
    near = np.where(np.arange(T) < cut[:, None], near, 0.0)
    return np.concatenate([dense, prefix, near])


def chain_inf_estimate(inst: ChainInstance, rng: np.random.Generator, n_random: int = 100_000):
    """Upper estimate of ``inf F_T`` from random points, a line search and coordinate descent."""
    T = inst.T
    best, best_x = math.inf, None
    done = 0
    while done < n_random:
        m = min(10_000, n_random - done)
        pts = rng.uniform(-4.0, 4.0, size=(m, T))
        vals = chain_value(inst, pts)
        j = int(np.argmin(vals))
        if vals[j] < best:
            best, best_x = float(vals[j]), pts[j].copy()
        done += m
    # the infimum is approached along the fully activated chain x = s * ones
    for s in np.linspace(0.0, 40.0, 401):
        v = chain_value(inst, np.full(T, s))
        if v < best:
            best, best_x = v, np.full(T, s)
    x = best_x.copy()
    for _ in range(3):
        for j in range(T):
            def f1(v, j=j):
                x[j] = v
                return chain_value(inst, x)
            res = optimize.minimize_scalar(f1, bounds=(-40.0, 40.0), method="bounded")
            x[j] = res.x if res.fun < f1(x[j]) else x[j]
            best = min(best, chain_value(inst, x))
    return best


def check_ft_props(inst: ChainInstance, points: np.ndarray, inf_estimate: float | None = None,
                   rng: np.random.Generator | None = None) -> dict:
    """Measure the chain-function properties on ``points``.

    Returns a dict with, for each property, the measured quantity, the bound and
    whether it holds.  The lower-gradient property is checked at coordinate
    ``prog_1(x) + 1`` for points with ``prog_1(x) < T``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    T = inst.T
    if inf_estimate is None:
        inf_estimate = chain_inf_estimate(inst, rng)
    gap = chain_value(inst, np.zeros(T)) - inf_estimate
    grads = chain_grad(inst, points)
    linf = float(np.max(np.abs(grads)))
    p_half = prog(points, 0.5)
    p_grad = prog(grads, 0.0)
    zc_violations = int(np.sum(p_grad > p_half + 1))
    p_one = _prog_one(points)
    active = p_one < T
    if np.any(active):
        idx = p_one[active]  # 0-based column of coordinate prog_1 + 1
        entries = np.abs(grads[active, idx])
        min_entry = float(entries.min())
    else:
        min_entry = math.inf
    return {
        "T": T,
        "value_gap": {"measured": float(gap), "bound": DELTA0 * T, "ok": gap <= DELTA0 * T},
        "grad_linf": {"measured": linf, "bound": GAMMA_INF, "ok": linf <= GAMMA_INF},
        "zero_chain": {"measured": zc_violations, "bound": 0, "ok": zc_violations == 0},
        "large_gradient": {"measured": min_entry, "bound": 1.0, "ok": min_entry > 1.0,
                           "n_points": int(np.sum(active))},
    }


def _prog_one(points):
    # prog_1 allows alpha = 1, outside prog's [0, 1) domain
    above = np.abs(points) > 1.0
    T = points.shape[-1]
    last = T - np.argmax(above[..., ::-1], axis=-1)
    return np.where(above.any(axis=-1), last, 0)


def check_gbar(inst: ChainInstance, points: np.ndarray, p: float, draws: int,
               rng: np.random.Generator) -> dict:
    """Monte Carlo checks of the zero-chain estimator at each point.

    * unbiasedness: every coordinate of the sample mean within 4 standard
      errors of ``grad F_T``;
    * variance: sample ``E||gbar - grad F||^2`` at most ``varsigma^2 (1-p)/p``
      plus 4 standard errors;
    * activation: the frequency of ``prog_0(gbar) = prog_{1/4}(x) + 1`` at most
      ``p`` plus 4 standard errors, and ``prog_0(gbar) > prog_{1/4}(x) + 1`` never.
    """
    bound_var = VARSIGMA**2 * (1 - p) / p
    se_freq = math.sqrt(p * (1 - p) / draws)
    worst_bias, worst_var_excess, worst_freq_excess = 0.0, -math.inf, -math.inf
    jumps = 0
    max_exact_var = 0.0
    for x in points:
        xi = (rng.random(draws) < p).astype(float)
        gs = zero_chain_grad(inst, x, xi, p)
        gf = chain_grad(inst, x)
        mean = gs.mean(axis=0)
        se = gs.std(axis=0, ddof=1) / math.sqrt(draws)
        z = np.abs(mean - gf)
        # floor for summation rounding, which matters when xi barely varies
        ratio = z / (se + 1e-12 * (1.0 + np.abs(gf)))
        worst_bias = max(worst_bias, float(ratio.max()))
        sq = np.sum((gs - gf) ** 2, axis=1)
        var_se = sq.std(ddof=1) / math.sqrt(draws)
        worst_var_excess = max(worst_var_excess, float(sq.mean() - bound_var - 4 * var_se))
        _, exact_var = gbar_moments(inst, x, p)
        max_exact_var = max(max_exact_var, float(exact_var))
        base = prog(x, 0.25)
        pg = prog(gs, 0.0)
        jumps += int(np.sum(pg > base + 1))
        freq = float(np.mean(pg == base + 1))
        worst_freq_excess = max(worst_freq_excess, freq - p - 4 * se_freq)
    return {
        "p": p,
        "unbiased": {"measured": worst_bias, "bound": 4.0, "ok": worst_bias <= 4.0},
        "variance": {"measured": worst_var_excess, "bound": 0.0, "ok": worst_var_excess <= 0.0,
                     "exact_max": max_exact_var, "limit": bound_var},
        "activation": {"measured": worst_freq_excess, "bound": 0.0, "ok": worst_freq_excess <= 0.0},
        "no_jump": {"measured": jumps, "bound": 0, "ok": jumps == 0},
    }


def gbar_lipschitz_ratio(inst: ChainInstance, x, y, p: float) -> float:
    """``E||gbar(x) - gbar(y)||^2 / ||x - y||^2`` (exact over the two values of xi)."""
    d1 = zero_chain_grad(inst, x, 1.0, p) - zero_chain_grad(inst, y, 1.0, p)
    d0 = zero_chain_grad(inst, x, 0.0, p) - zero_chain_grad(inst, y, 0.0, p)
    num = p * np.sum(d1**2, axis=-1) + (1 - p) * np.sum(d0**2, axis=-1)
    return num / np.sum((np.asarray(x) - np.asarray(y)) ** 2, axis=-1)
