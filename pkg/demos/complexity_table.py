"""Bound comparison as the worker count grows (sqrt delays)."""

from rennala.delays import sample_delays
from rennala.theory import complexity_report

eps, sigma, delta, L = 1e-4, 1.0, 1.0, 1.0
print(f"{'n':>6} {'T(B)':>10} {'mvr':>12} {'sgd':>12} {'lower':>12} {'sgd/mvr':>8}")
for n in (1, 10, 100, 1000, 10000):
    r = complexity_report(eps, sigma, delta, L, sample_delays("sqrt", n, seed=0))
    print(f"{n:6d} {r.t_of_B:10.3f} {r.mvr_time:12.4g} {r.sgd_time:12.4g} {r.lower_time:12.4g} "
          f"{r.sgd_time / r.mvr_time:8.2f}")
