"""The chain function and its masked stochastic gradient.

Progress advances one coordinate at a time, and only when the coin lands
heads.
"""

import numpy as np

from rennala.hardness import ChainInstance, chain_grad, chain_value, prog, zero_chain_grad

T, p = 8, 0.2
inst = ChainInstance(T)
rng = np.random.default_rng(0)

x = np.zeros(T)
print(f"F(0) = {chain_value(inst, x):.5f}, grad support: {np.flatnonzero(chain_grad(inst, x)) + 1}")

# gradient descent driven by the estimator; count steps until every coordinate is reached
steps, heads = 0, 0
while prog(x, 0.0) < T and steps < 10_000:
    xi = float(rng.random() < p)
    heads += xi
    x = x - 0.05 * zero_chain_grad(inst, x, xi, p)
    steps += 1
print(f"reached prog_0 = {prog(x, 0.0)} after {steps} steps ({int(heads)} heads, p = {p})")
print(f"progress values now: prog_0={prog(x, 0.0)}, prog_1/4={prog(x, 0.25)}, prog_1/2={prog(x, 0.5)}")
print(f"F(x) = {chain_value(inst, x):.4f}")
