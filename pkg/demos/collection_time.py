"""How long does one round take?  Simulated finish times against T(b)."""

import numpy as np

from rennala.delays import DelayProfile, sample_delays
from rennala.engine import collect_batch
from rennala.theory import t_of_b

prof = DelayProfile((1.0, 2.0, 4.0))
finish, arrivals = collect_batch(prof, 10)
print("three workers (1, 2, 4), b = 10")
for a in arrivals:
    print(f"  t={a.time:4.1f}  worker {a.worker_id}")
print(f"finish {finish}  vs  T(10) = {t_of_b(prof, 10)[0]:.4f} (argmin m = {t_of_b(prof, 10)[1]})")

# with pairs each job costs twice as long
print("pairs:", collect_batch(prof, 10, "pair")[0])

# the sqrt model with n = 10: ratio of simulated time to T(b), restart and stale modes
prof = sample_delays("sqrt", 10, seed=0)
print("\n   b   restart/T(b)   stale/T(b)")
for b in (1, 5, 20, 100, 500):
    T = t_of_b(prof, b)[0]
    r = collect_batch(prof, b)[0] / T
    s = collect_batch(prof, b, restart=False)[0] / T
    print(f"{b:4d}   {r:12.3f}   {s:10.3f}")

rng = np.random.default_rng(1)
worst = max(collect_batch(p, b)[0] / t_of_b(p, b)[0]
            for p, b in ((DelayProfile(tuple(rng.uniform(0.1, 100, rng.integers(1, 33)))),
                          int(rng.integers(1, 501))) for _ in range(300)))
print(f"\nworst restart ratio over 300 random profiles: {worst:.4f}")
