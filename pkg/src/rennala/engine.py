"""Discrete-event simulation of the server and its workers.

Time is simulated.  Worker ``i`` needs ``tau_i`` seconds per gradient and
``2 tau_i`` per gradient pair.  The server collects the first ``b`` arrivals of
a round; a worker restarts immediately after each delivery.  Completion times
are computed as ``origin + count * cost`` rather than by accumulation, so a
schedule is reproducible bit for bit and independent of where it starts.

At a round boundary the default is to discard in-flight work (``restart=True``).
With ``restart=False`` each worker first finishes its stale computation, which
is thrown away, and only then starts on the new round.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .delays import DelayProfile
from .optim import PAIR, SINGLE
from .problems import Problem, SampleOracle

__all__ = [
    "Arrival",
    "Cluster",
    "RunTrace",
    "SimClock",
    "WorkerState",
    "collect_batch",
    "run_method",
]


@dataclass
class WorkerState:
    worker_id: int
    busy_until: Optional[float] = None
    assigned_round: Optional[int] = None
    payload_kind: Optional[str] = None

    @property
    def idle(self) -> bool:
        return self.busy_until is None


@dataclass(frozen=True)
class Arrival:
    worker_id: int
    time: float
    round: int
    sample_seed: int
    payload_kind: str


@dataclass
class SimClock:
    now: float = 0.0
    event_queue: list = field(default_factory=list)

    def push(self, time: float, worker_id: int):
        heapq.heappush(self.event_queue, (time, worker_id))

    def pop(self) -> tuple[float, int]:
        time, wid = heapq.heappop(self.event_queue)
        if time < self.now:
            raise RuntimeError("event scheduled in the past")
        self.now = time
        return time, wid


def _cost(tau: float, kind: str) -> float:
    if kind == SINGLE:
        return tau
    if kind == PAIR:
        return 2.0 * tau
    raise ValueError(f"unknown payload kind {kind!r}")


class Cluster:
    """Server view of ``n`` workers with fixed computation times.

    Each call to :meth:`collect` is one round.  Sample seeds are handed out
    from a per-cluster counter in delivery order.
    """

    def __init__(self, profile: DelayProfile):
        self.profile = profile
        self.taus = profile.taus
        self.workers = [WorkerState(i) for i in range(profile.n)]
        self.clock = SimClock()
        self.round = 0
        self.next_sample = 0
        # restart rounds are shift-invariant: (b, kind) -> (offsets, worker ids, next completions)
        self._schedules: dict = {}

    @property
    def now(self) -> float:
        return self.clock.now

    def _simulate(self, b, kind, origins, stale):
        """Event loop: returns delivery times, worker ids and each worker's next completion."""
        clock = SimClock(now=min(origins) if len(origins) else 0.0)
        costs = [_cost(t, kind) for t in self.taus]
        counts = [0] * len(costs)
        for i, o in enumerate(origins):
            first = stale[i] if stale is not None and stale[i] is not None else o + costs[i]
            clock.push(first, i)
        times, ids = [], []
        while len(times) < b:
            t, i = clock.pop()
            if stale is not None and stale[i] is not None:
                # stale work completes and is discarded; the fresh computation starts now
                origins[i] = t
                stale[i] = None
                clock.push(origins[i] + costs[i], i)
                continue
            times.append(t)
            ids.append(i)
            counts[i] += 1
            clock.push(origins[i] + (counts[i] + 1) * costs[i], i)
        nxt = [None] * len(costs)
        for t, i in clock.event_queue:
            nxt[i] = t
        return times, ids, nxt

    def collect(self, b: int, kind: str = SINGLE, start: Optional[float] = None,
                restart: bool = True, record: bool = True):
        """Run one round; returns ``(finish, arrivals)``.

        ``arrivals`` is ``None`` when ``record`` is false.
        """
        if b < 1:
            raise ValueError("b must be at least 1")
        start = self.clock.now if start is None else float(start)
        if start < self.clock.now:
            raise ValueError("cannot start a round in the past")
        n = len(self.taus)
        if restart:
            key = (b, kind)
            sched = self._schedules.get(key)
            if sched is None:
                sched = self._simulate(b, kind, [0.0] * n, None)
                self._schedules[key] = sched
            offsets, ids, nxt = sched
            times = [start + o for o in offsets] if record else [start + offsets[-1]]
            busy = [start + o for o in nxt]
        else:
            # work finishing after `start` targets the previous round's points
            stale = [w.busy_until if w.busy_until is not None and w.busy_until > start else None
                     for w in self.workers]
            times, ids, busy = self._simulate(b, kind, [start] * n, stale)
        finish = times[-1]
        first = self.next_sample
        arrivals = None
        if record:
            arrivals = [Arrival(i, t, self.round, first + j, kind)
                        for j, (t, i) in enumerate(zip(times, ids))]
        for w in self.workers:
            w.busy_until = busy[w.worker_id]
            w.assigned_round = self.round
            w.payload_kind = kind
        self.clock.now = finish
        self.next_sample += b
        self.round += 1
        return finish, arrivals


def collect_batch(profile: DelayProfile, b: int, kind: str = SINGLE, start: float = 0.0,
                  restart: bool = True, busy_until: Optional[Sequence[float]] = None):
    """Time to collect ``b`` arrivals starting at ``start``.

    With ``restart=False`` the workers are mid-computation on stale work that
    completes at ``busy_until`` (default: the worst case, a computation begun
    exactly at ``start``).  Returns ``(finish, arrivals)``.
    """
    if profile is None or profile.n == 0:
        raise ValueError("empty profile")
    cluster = Cluster(profile)
    cluster.clock.now = float(start)
    if not restart:
        if busy_until is None:
            busy_until = [start + _cost(t, kind) for t in profile.taus]
        if len(busy_until) != profile.n:
            raise ValueError("busy_until needs one entry per worker")
        for w, t in zip(cluster.workers, busy_until):
            w.busy_until = float(t)
    return cluster.collect(b, kind, start=start, restart=restart)


@dataclass
class RunTrace:
    """Time-stamped optimization records."""

    time: list = field(default_factory=list)
    iter: list = field(default_factory=list)
    grad_sq_norm: list = field(default_factory=list)
    f_value: list = field(default_factory=list)
    oracle_calls: list = field(default_factory=list)
    diverged: bool = False
    rounds: int = 0
    final_calls: int = 0
    engine_calls: int = 0

    HEADER = ("time", "iter", "grad_sq_norm", "f_value", "oracle_calls")

    def add(self, time, it, gsq, fval, calls):
        self.time.append(float(time))
        self.iter.append(int(it))
        self.grad_sq_norm.append(float(gsq))
        self.f_value.append(float(fval))
        self.oracle_calls.append(int(calls))

    def __len__(self):
        return len(self.time)

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.time, self.iter, self.grad_sq_norm,
                                self.f_value, self.oracle_calls])

    def rows(self):
        return zip(self.time, self.iter, self.grad_sq_norm, self.f_value, self.oracle_calls)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.HEADER) + "\n")
            for t, k, gsq, fv, c in self.rows():
                fh.write(f"{t:.17g},{k},{gsq:.17g},{fv:.17g},{c}\n")

    @classmethod
    def from_csv(cls, path) -> "RunTrace":
        tr = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != cls.HEADER:
                raise ValueError(f"unexpected trace header {header}")
            for row in reader:
                tr.add(float(row[0]), int(row[1]), float(row[2]), float(row[3]), int(row[4]))
        return tr

    def final_window_median(self, horizon: float, fraction: float = 0.01,
                            column: str = "grad_sq_norm", offset: float = 0.0) -> float:
        """Median of ``column - offset`` over the last ``fraction`` of ``[0, horizon]``.

        The value in force when the window opens counts as a sample, so a window
        without any round boundary still has a value.
        """
        if self.diverged:
            return math.inf
        lo = horizon * (1.0 - fraction)
        t = np.asarray(self.time)
        v = np.asarray(getattr(self, column)) - offset
        inside = t >= lo
        vals = list(v[inside])
        before = np.nonzero(~inside)[0]
        if before.size and not (t == lo).any():
            vals.append(v[before[-1]])
        return float(np.median(vals))


# blow-ups are reported through trace.diverged, not numpy warnings
@np.errstate(over="ignore", invalid="ignore")
def run_method(problem: Problem, optimizer, profile: DelayProfile, budget: float,
               record_every: int = 1, seed: int = 0, *, x0=None, restart: bool = True,
               max_rounds: Optional[int] = None, noise: str = "exact",
               dense_after: Optional[float] = None, callback=None) -> RunTrace:
    """Simulate ``optimizer`` on ``problem`` until simulated time exceeds ``budget``.

    A round whose last arrival lands after ``budget`` is not applied.  Records are
    taken at ``t = 0`` and after every ``record_every``-th round (every round once
    ``time >= dense_after``).  The run stops early, flagged ``diverged``, when
    the iterate stops being finite.

    ``callback(k, t, state)`` is invoked after initialization (``k = 0``) and
    after every applied round.  ``RunTrace.engine_calls`` counts gradient
    evaluations from the simulator side (a pair counts twice), independently
    of the optimizer's own counter.
    """
    if not budget >= 0:
        raise ValueError("budget must be nonnegative")
    if record_every < 1:
        raise ValueError("record_every must be at least 1")
    x0 = problem.initial_point() if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (problem.dim,):
        raise ValueError(f"optimizer start point has shape {x0.shape}, problem dim is {problem.dim}")
    cluster = Cluster(profile)
    oracle = SampleOracle(problem, seed, noise)
    trace = RunTrace()
    state = optimizer.initial_state(x0)
    trace.add(0.0, 0, problem.grad_sq_norm(x0), problem.value(x0), 0)
    dense_after = math.inf if dense_after is None else dense_after

    t = 0.0
    calls = 0
    if optimizer.init_size > 0:
        finish, _ = cluster.collect(optimizer.init_size, SINGLE, start=0.0, restart=True, record=False)
        if finish > budget:
            return trace
        (g0,) = oracle.mean_grads([state.x], 0, optimizer.init_size)
        state = optimizer.initialize(state, g0)
        t = finish
        calls = optimizer.init_size
    if callback is not None:
        callback(0, t, state)
    per_round = optimizer.B * (2 if optimizer.payload_kind == PAIR else 1)

    B, kind = optimizer.B, optimizer.payload_kind
    k = 0
    pending = None
    while max_rounds is None or k < max_rounds:
        points = optimizer.query_points(state)
        first = cluster.next_sample
        finish, _ = cluster.collect(B, kind, start=t, restart=restart, record=False)
        if finish > budget:
            break
        means = oracle.mean_grads(points, first, B)
        state = optimizer.update(state, means)
        t = finish
        k += 1
        calls += per_round
        if callback is not None:
            callback(k, t, state)
        x = state.x
        if not math.isfinite(x @ x):
            trace.diverged = True
            trace.add(t, k, math.inf, math.inf, state.oracle_calls)
            break
        if k % record_every == 0 or t >= dense_after:
            if pending is not None and t >= dense_after:
                # the value in force when the dense window opens
                trace.add(pending[0], pending[1], problem.grad_sq_norm(pending[2]),
                          problem.value(pending[2]), pending[3])
            pending = None
            trace.add(t, k, problem.grad_sq_norm(x), problem.value(x), state.oracle_calls)
        else:
            pending = (t, k, x, state.oracle_calls)
    if pending is not None and dense_after < math.inf:
        trace.add(pending[0], pending[1], problem.grad_sq_norm(pending[2]),
                  problem.value(pending[2]), pending[3])
    trace.rounds = k
    trace.final_calls = state.oracle_calls
    trace.engine_calls = calls
    return trace
