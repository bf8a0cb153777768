import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rennala.problems import OracleSample, QuadraticProblem, SampleOracle, batch_mean


@pytest.fixture(scope="module")
def q100():
    return QuadraticProblem(100, 0.1)


def dense_grad(prob, x):
    # independent oracle: explicit matrix
    return prob.A @ x - prob.b


def test_grad_at_spike_start(q100):
    g = q100.exact_grad(q100.initial_point())
    assert g[:2].tolist() == [5.25, -2.5]
    assert not g[2:].any()
    assert q100.grad_sq_norm(q100.initial_point()) == 33.8125


def test_grad_at_zero(q100):
    g = q100.exact_grad(np.zeros(100))
    assert g[0] == 0.25 and not g[1:].any()


def test_minimizer_is_stationary(q100):
    xs = q100.minimizer()
    assert q100.grad_sq_norm(xs) < 1e-24
    # closed form x*_i = -(d + 1 - i)/(d + 1)
    i = np.arange(1, 101)
    np.testing.assert_allclose(xs, -(101 - i) / 101, rtol=1e-12)


def test_min_value_closed_form():
    # f* = -1/2 b^T A^{-1} b with x*_1 = -d/(d+1): -(1/8) d/(d+1) = -5/44 for d = 10
    prob = QuadraticProblem(10, 0.0)
    assert prob.min_value() == pytest.approx(-5 / 44, rel=1e-13)
    A = prob.A
    assert prob.min_value() == pytest.approx(-0.5 * prob.b @ np.linalg.solve(A, prob.b), rel=1e-13)


def test_eigenvalues(q100):
    lam = q100.eigenvalues()
    ref = np.linalg.eigvalsh(q100.A)
    np.testing.assert_allclose(lam, ref, atol=1e-13)
    assert 0 < lam[0] and lam[-1] < 1
    assert q100.smoothness() == pytest.approx(0.5 * (1 + math.cos(math.pi / 101)), rel=1e-13)


@pytest.mark.parametrize("d", [1, 2, 3, 7])
@given(data=st.data())
@settings(max_examples=25)
def test_grad_matches_dense_matrix(d, data):
    prob = QuadraticProblem(d, 0.1)
    x = data.draw(arrays(float, d, elements=st.floats(-1e3, 1e3)))
    np.testing.assert_allclose(prob.exact_grad(x), dense_grad(prob, x), rtol=1e-12, atol=1e-9)
    assert prob.value(x) == pytest.approx(0.5 * x @ prob.A @ x - prob.b @ x, rel=1e-9, abs=1e-9)


def test_dimension_mismatch(q100):
    with pytest.raises(ValueError):
        q100.exact_grad(np.zeros(99))
    with pytest.raises(ValueError):
        q100.stochastic_grad(np.zeros(3), OracleSample(0, 0))


def test_noiseless_oracle_is_exact():
    prob = QuadraticProblem(20, 0.0)
    x = np.linspace(-1, 1, 20)
    np.testing.assert_array_equal(prob.stochastic_grad(x, OracleSample(4, 9)), prob.exact_grad(x))


@given(seed=st.integers(0, 2**63), idx=st.integers(0, 2**40))
@settings(max_examples=30)
def test_same_sample_difference_is_exact(seed, idx):
    prob = QuadraticProblem(30, 0.3)
    rng = np.random.default_rng(idx % 1000)
    x, y = rng.normal(size=30), rng.normal(size=30)
    s = OracleSample(seed, idx)
    diff = prob.stochastic_grad(x, s) - prob.stochastic_grad(y, s)
    np.testing.assert_allclose(diff, prob.A @ (x - y), atol=1e-12)
    np.testing.assert_array_equal(prob.noise(s), prob.noise(OracleSample(seed, idx)))


def test_noise_variance_monte_carlo(q100):
    z = np.stack([q100.noise(OracleSample(11, i)) for i in range(10_000)])
    sq = np.sum(z * z, axis=1)
    se = sq.std(ddof=1) / math.sqrt(len(sq))
    assert abs(sq.mean() - 1.0) <= 4 * se
    # unbiased: ||mean||^2 is (sigma_add^2 / N) * chi^2_d
    m2 = float(np.sum(z.mean(axis=0) ** 2))
    scale = 0.01 / 10_000
    assert abs(m2 - 100 * scale) <= 4 * math.sqrt(2 * 100) * scale


def test_sigma_conventions(q100):
    assert q100.sigma == pytest.approx(1.0)
    assert q100.sigma_add == 0.1


def test_batch_mean_compensated():
    rows = np.full((20_000, 2), 0.1)
    rows[0, 0] = 1e16
    rows[1, 0] = -1e16
    m = batch_mean(rows)
    assert m[0] == math.fsum(rows[:, 0]) / 20_000
    assert m[1] == pytest.approx(0.1, rel=1e-15)


def test_mean_stochastic_grads_shares_samples(q100):
    samples = [OracleSample(3, j) for j in range(7)]
    x, y = np.zeros(100), np.ones(100)
    gx, gy = q100.mean_stochastic_grads([x, y], samples)
    ref = np.mean([q100.stochastic_grad(x, s) for s in samples], axis=0)
    np.testing.assert_allclose(gx, ref, atol=1e-14)
    np.testing.assert_allclose(gx - gy, q100.A @ (x - y), atol=1e-13)


def test_aggregate_oracle_distribution():
    prob = QuadraticProblem(50, 0.2)
    orc = SampleOracle(prob, 5, "aggregate")
    x = np.zeros(50)
    devs = np.stack([orc.mean_grads([x], 0, 16)[0] - prob.exact_grad(x) for _ in range(4000)])
    sq = np.sum(devs**2, axis=1)
    want = 50 * 0.04 / 16
    assert abs(sq.mean() - want) <= 4 * sq.std(ddof=1) / math.sqrt(len(sq))


def test_oracle_mode_validation():
    with pytest.raises(ValueError):
        SampleOracle(QuadraticProblem(3), 0, "bogus")


def test_bad_construction():
    with pytest.raises(ValueError):
        QuadraticProblem(0)
    with pytest.raises(ValueError):
        QuadraticProblem(3, -0.1)
