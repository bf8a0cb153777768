"""SGD against MVR on the noisy quadratic, one tuned-looking config each.

Writes demos/out/race.svg.  Budget is 2e4 simulated seconds so this runs in
a few seconds; the desk sweeps in configs/ go to 1e5.
"""

from pathlib import Path

from rennala.delays import sample_delays
from rennala.engine import run_method
from rennala.optim import RennalaMVR, RennalaSGD
from rennala.problems import QuadraticProblem
from rennala.svg import line_plot

prob = QuadraticProblem(100, 0.1)
budget = 2e4
series = []
for kind in ("sqrt", "uniform"):
    prof = sample_delays(kind, 10, seed=0)
    for name, opt in (("sgd", RennalaSGD(0.0625, 200)), ("mvr", RennalaMVR(0.5, 0.01, 60, 3600))):
        tr = run_method(prob, opt, prof, budget, record_every=5, seed=1, noise="aggregate")
        med = tr.final_window_median(budget)
        print(f"{kind:8s} {name}: rounds={tr.rounds:6d}  final-1% median ||grad||^2 = {med:.3e}")
        series.append((f"{kind} {name}", tr.time[1:], tr.grad_sq_norm[1:]))

out = Path(__file__).resolve().parent / "out"
out.mkdir(exist_ok=True)
line_plot(series, out / "race.svg", title="quadratic, n=10", ylabel="||grad f||^2")
print("plot:", out / "race.svg")
