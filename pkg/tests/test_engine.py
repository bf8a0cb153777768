import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rennala.delays import DelayProfile
from rennala.engine import Cluster, RunTrace, SimClock, collect_batch, run_method
from rennala.optim import PAIR, SINGLE, InexactRennalaMVR, RennalaMVR, RennalaSGD
from rennala.problems import QuadraticProblem
from rennala.theory import t_of_b


def brute_force_finish(taus, b, cost_factor=1.0):
    """Independent oracle: the b-th smallest of all completion times j * c_i."""
    times = []
    for tau in taus:
        c = cost_factor * tau
        times += [j * c for j in range(1, b + 1)]
    return sorted(times)[b - 1]


def test_two_worker_example():
    finish, arr = collect_batch(DelayProfile((1.0, 2.0)), 3)
    assert finish == 2.0
    assert [(a.worker_id, a.time) for a in arr] == [(0, 1.0), (0, 2.0), (1, 2.0)]
    assert [a.sample_seed for a in arr] == [0, 1, 2]


def test_pair_single_worker():
    assert collect_batch(DelayProfile((1.0,)), 2, PAIR)[0] == 4.0


def test_three_worker_bound():
    finish, _ = collect_batch(DelayProfile((1.0, 2.0, 4.0)), 10)
    assert finish <= 52 / 7
    assert finish == 6.0


def test_empty_profile_rejected():
    with pytest.raises(ValueError):
        collect_batch(None, 3)


def test_batch_size_validation():
    with pytest.raises(ValueError):
        collect_batch(DelayProfile((1.0,)), 0)


def test_bad_payload_kind():
    with pytest.raises(ValueError):
        collect_batch(DelayProfile((1.0,)), 1, "triple")


taus_st = st.lists(st.floats(0.1, 100.0), min_size=1, max_size=32)


@settings(max_examples=300, deadline=None)
@given(taus=taus_st, b=st.integers(1, 500), start=st.floats(0.0, 1e4))
def test_restart_collection_within_T(taus, b, start):
    prof = DelayProfile(tuple(taus))
    finish, arr = collect_batch(prof, b, start=start)
    assert finish - start <= t_of_b(prof, b)[0] * (1 + 1e-12)
    assert finish == start + brute_force_finish(taus, b) or math.isclose(
        finish, start + brute_force_finish(taus, b), rel_tol=1e-15)


@settings(max_examples=300, deadline=None)
@given(taus=taus_st, b=st.integers(1, 500))
def test_worst_case_offsets_within_2T(taus, b):
    prof = DelayProfile(tuple(taus))
    finish, _ = collect_batch(prof, b, restart=False)
    assert finish <= 2 * t_of_b(prof, b)[0]


@settings(max_examples=200, deadline=None)
@given(taus=taus_st, b=st.integers(1, 300))
def test_pair_round_within_4_min(taus, b):
    prof = DelayProfile(tuple(taus))
    finish, _ = collect_batch(prof, b, PAIR)
    assert finish <= 4 * t_of_b(prof, b)[0] / 2 * 2  # 2 T(b) on doubled times, below 4 T(b)
    assert finish == brute_force_finish(taus, b, 2.0)


@settings(max_examples=100, deadline=None)
@given(taus=taus_st, b=st.integers(1, 100), kind=st.sampled_from([SINGLE, PAIR]))
def test_arrival_times_on_worker_grid(taus, b, kind):
    prof = DelayProfile(tuple(taus))
    _, arr = collect_batch(prof, b, kind, start=3.0)
    cost = 2.0 if kind == PAIR else 1.0
    counts = {}
    last = -math.inf
    for a in arr:
        counts[a.worker_id] = counts.get(a.worker_id, 0) + 1
        assert a.time == 3.0 + counts[a.worker_id] * (cost * taus[a.worker_id])
        assert a.payload_kind == kind
        assert a.time >= last
        last = a.time


def test_simultaneous_arrivals_by_worker_id():
    _, arr = collect_batch(DelayProfile((2.0, 1.0, 2.0)), 4)
    assert [(a.worker_id, a.time) for a in arr] == [(1, 1.0), (0, 2.0), (1, 2.0), (2, 2.0)]


def test_stale_work_semantics():
    # worker 0 is stuck on stale work until t=5; worker 1 is free
    finish, arr = collect_batch(DelayProfile((1.0, 3.0)), 2, restart=False, busy_until=[5.0, 0.0])
    assert [(a.worker_id, a.time) for a in arr] == [(1, 3.0), (0, 6.0)]
    assert finish == 6.0


def test_cluster_rounds_and_clock():
    cl = Cluster(DelayProfile((1.0, 1.5)))
    f1, a1 = cl.collect(3)
    f2, a2 = cl.collect(2, PAIR)
    assert f1 == 2.0 and f2 == f1 + 3.0
    assert cl.round == 2 and cl.next_sample == 5
    assert {a.round for a in a2} == {1}
    with pytest.raises(ValueError):
        cl.collect(1, start=0.0)
    for w in cl.workers:
        assert w.busy_until >= cl.now


def test_sim_clock_orders_events():
    c = SimClock()
    for t, w in [(2.0, 1), (1.0, 3), (2.0, 0)]:
        c.push(t, w)
    assert [c.pop() for _ in range(3)] == [(1.0, 3), (2.0, 0), (2.0, 1)]
    assert c.now == 2.0


def quad():
    return QuadraticProblem(20, 0.1)


def test_budget_below_first_completion():
    tr = run_method(quad(), RennalaSGD(0.1, 1), DelayProfile((1.0,)), 0.5)
    assert len(tr) == 1 and tr.iter == [0] and tr.time == [0.0]
    tr = run_method(quad(), RennalaMVR(0.1, 0.5, 1, 1), DelayProfile((1.0,)), 0.5)
    assert len(tr) == 1


def test_zero_step_constant_metric():
    prob = QuadraticProblem(100, 0.1)
    tr = run_method(prob, RennalaSGD(0.0, 3), DelayProfile((1.0, 2.0)), 100.0)
    assert len(tr) > 10
    assert len(set(tr.grad_sq_norm)) == 1


def test_run_is_deterministic(tmp_path):
    prof = DelayProfile((1.0, 1.7, 2.2))
    args = (quad(), RennalaMVR(0.2, 0.3, 4, 16), prof, 200.0)
    a = run_method(*args, seed=5)
    b = run_method(*args, seed=5)
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c = run_method(*args, seed=6)
    assert c.grad_sq_norm != a.grad_sq_norm


def test_trace_csv_roundtrip(tmp_path):
    tr = run_method(quad(), RennalaSGD(0.3, 2), DelayProfile((0.7, 1.1)), 30.0, seed=1)
    tr.to_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "time,iter,grad_sq_norm,f_value,oracle_calls"
    back = RunTrace.from_csv(tmp_path / "t.csv")
    assert back.time == tr.time and back.grad_sq_norm == tr.grad_sq_norm
    assert back.f_value == tr.f_value and back.oracle_calls == tr.oracle_calls


def test_record_stride_and_dense_window():
    prof = DelayProfile((1.0,))
    tr = run_method(quad(), RennalaSGD(0.1, 1), prof, 100.0, record_every=10, dense_after=95.0)
    assert tr.iter[:4] == [0, 10, 20, 30]
    assert tr.iter[-6:] == [95, 96, 97, 98, 99, 100]


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        run_method(quad(), RennalaSGD(0.1, 1), DelayProfile((1.0,)), 10.0, x0=np.zeros(3))


def test_divergence_flag():
    prob = QuadraticProblem(10, 0.1)
    tr = run_method(prob, RennalaSGD(1e6, 1), DelayProfile((1.0,)), 1e6, x0=np.ones(10))
    assert tr.diverged and tr.final_window_median(1e6) == math.inf


@pytest.mark.parametrize("seed", range(5))
def test_oracle_counts(seed):
    rng = np.random.default_rng(seed)
    prof = DelayProfile(tuple(rng.uniform(0.5, 3.0, size=4)))
    B, B0, K = 3, 11, 7
    for opt, want in [(RennalaMVR(0.1, 0.4, B, B0), B0 + 2 * K * B), (RennalaSGD(0.1, B), K * B),
                      (InexactRennalaMVR(0.1, 0.4, B, B0, 0.1), B0 + K * B)]:
        tr = run_method(quad(), opt, prof, math.inf, max_rounds=K, seed=seed)
        assert tr.rounds == K
        assert tr.final_calls == tr.engine_calls == tr.oracle_calls[-1] == want


def test_round_boundaries_match_cluster():
    prof = DelayProfile((1.3, 0.7, 2.9))
    times = []
    run_method(quad(), RennalaMVR(0.1, 0.5, 4, 9), prof, math.inf, max_rounds=5,
               callback=lambda k, t, s: times.append(t))
    cl = Cluster(prof)
    ref = [cl.collect(9, SINGLE)[0]] + [cl.collect(4, PAIR)[0] for _ in range(5)]
    assert times == ref


def test_final_window_median_includes_value_in_force():
    tr = RunTrace()
    for t, v in [(0.0, 9.0), (50.0, 4.0), (98.0, 3.0), (99.5, 1.0)]:
        tr.add(t, 0, v, 0.0, 0)
    assert tr.final_window_median(100.0) == 2.0  # median of {3 (in force at 99), 1}
    assert tr.final_window_median(100.0, fraction=0.5) == 3.0  # {4, 3, 1}


@pytest.mark.parametrize("budget", [5.0, 37.0, 400.0])
def test_sparse_recording_keeps_value_in_force(budget):
    # window-only recording must give the same final-window median as recording every round
    prof = DelayProfile((1.0, 2.5, 4.0))
    opt = RennalaMVR(0.3, 0.2, 3, 3)
    full = run_method(quad(), opt, prof, budget, seed=2)
    sparse = run_method(quad(), opt, prof, budget, record_every=2**62, seed=2, dense_after=0.99 * budget)
    assert sparse.final_window_median(budget) == full.final_window_median(budget)
