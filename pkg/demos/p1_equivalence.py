"""With p = 1 and the old-point gradients ignored, MVR is plain minibatch SGD."""

import numpy as np

from rennala.delays import sample_delays
from rennala.problems import QuadraticProblem
from rennala.verify import p1_iterates

prob = QuadraticProblem(50, 0.1)
prof = sample_delays("uniform", 6, seed=3)
mvr, sgd = p1_iterates(prob, prof, gamma=0.4, B=7, rounds=25, seed=11)
print(f"{len(mvr)} iterates each; max |difference| = {max(np.max(np.abs(a - b)) for a, b in zip(mvr, sgd))}")
print("bitwise identical:", all(np.array_equal(a, b) for a, b in zip(mvr, sgd)))
