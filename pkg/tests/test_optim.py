import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rennala.optim import (AlreadyStationaryError, InexactRennalaMVR, LowNoiseRegimeError,
                           Minibatch, MvrState, RennalaMVR, RennalaSGD, SgdState,
                           inexact_mvr_step, make_method, mvr_init, mvr_step, sgd_step,
                           theorem3_params)
from rennala.problems import OracleSample, QuadraticProblem


def scalar_state(g=4.0, p=0.5, gamma=0.1, alpha=1.0, B=1):
    return MvrState(x=np.array([1.0]), g=np.array([g]), gamma=gamma, p=p, B=B, B0=1, alpha=alpha)


def test_mvr_scalar_example():
    s = mvr_step(scalar_state(), Minibatch(np.array([2.0]), np.array([3.0]), 1))
    assert s.g[0] == 2.5
    assert s.x[0] == 1.0 - 0.1 * 4.0
    assert s.k == 1 and s.oracle_calls == 2


def test_mvr_p1_ignores_history():
    s = mvr_step(scalar_state(p=1.0), Minibatch(np.array([7.0]), np.array([-50.0]), 1))
    assert s.g[0] == 7.0


def test_mvr_correction_cancels():
    st_ = scalar_state(g=3.0, p=0.3)
    s = mvr_step(st_, Minibatch(np.array([1.5]), np.array([3.0]), 1))
    assert s.g[0] == 1.5


def test_step_uses_old_estimator_only():
    st_ = scalar_state()
    batch = Minibatch(np.array([np.nan]), np.array([np.nan]), 1)
    s = mvr_step(st_, batch, check_finite=False)
    assert np.isfinite(s.x).all()
    with pytest.raises(FloatingPointError):
        mvr_step(st_, batch)


def test_count_mismatch():
    with pytest.raises(ValueError):
        mvr_step(scalar_state(B=2), Minibatch(np.array([1.0]), np.array([1.0]), 1))
    with pytest.raises(ValueError):
        sgd_step(SgdState(np.zeros(1), 0.1, 3), Minibatch(np.zeros(1), None, 2))


def test_missing_minus_only_for_p1():
    with pytest.raises(ValueError):
        mvr_step(scalar_state(p=0.5), Minibatch(np.array([1.0]), None, 1))
    s = mvr_step(scalar_state(p=1.0), Minibatch(np.array([1.0]), None, 1))
    assert s.oracle_calls == 1


@pytest.mark.parametrize("kw", [dict(p=0.0), dict(p=1.5), dict(alpha=1.5), dict(gamma=-1.0),
                                dict(B=0)])
def test_state_validation(kw):
    with pytest.raises(ValueError):
        scalar_state(**kw)


def test_sgd_step_examples():
    prob = QuadraticProblem(5, 0.0)
    x = np.arange(5.0)
    s = sgd_step(SgdState(x, 0.0, 2), Minibatch(prob.exact_grad(x), None, 2))
    np.testing.assert_array_equal(s.x, x)
    s = sgd_step(SgdState(x, 0.3, 2), Minibatch(prob.exact_grad(x), None, 2))
    np.testing.assert_allclose(s.x, x - 0.3 * (prob.A @ x - prob.b), atol=1e-15)
    assert s.oracle_calls == 2


def test_inexact_scalar_example():
    st_ = scalar_state(g=1.0, p=0.1, alpha=0.01)
    s = inexact_mvr_step(st_, np.array([2.0]), np.array([0.0]))
    assert s.g[0] == pytest.approx(1.118, abs=1e-15)


def test_inexact_alpha0_p1_is_sgd_estimator():
    st_ = scalar_state(g=9.0, p=1.0, alpha=0.0)
    s = inexact_mvr_step(st_, np.array([2.0]), np.array([-3.0]))
    assert s.g[0] == 2.0


def test_inexact_equal_gradients_is_momentum():
    st_ = scalar_state(g=1.0, p=0.25, alpha=0.7)
    s = inexact_mvr_step(st_, np.array([2.0]), np.array([2.0]))
    assert s.g[0] == pytest.approx(0.75 * 1.0 + 0.25 * 2.0, abs=1e-15)


def test_inexact_caches_gradient_and_needs_seed():
    st_ = scalar_state()
    with pytest.raises(ValueError):
        inexact_mvr_step(st_, np.array([1.0]))
    s1 = inexact_mvr_step(st_, np.array([1.0]), np.array([0.5]))
    s2 = inexact_mvr_step(s1, np.array([3.0]))
    np.testing.assert_array_equal(s1.grad_old, [1.0])
    assert s2.grad_old[0] == 3.0


vec = arrays(float, 6, elements=st.floats(-100, 100))


@settings(max_examples=100)
@given(x=vec, g=vec, gp=vec, gm=vec, p=st.floats(0.001, 1.0), gamma=st.floats(0.0, 2.0))
def test_inexact_alpha1_reproduces_exact(x, g, gp, gm, p, gamma):
    st_ = MvrState(x=x, g=g, gamma=gamma, p=p, B=3, B0=3, alpha=1.0)
    a = mvr_step(st_, Minibatch(gp, gm, 3))
    b = inexact_mvr_step(st_, gp, gm, count=3)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.g, b.g)


@settings(max_examples=100)
@given(x=vec, g=vec, gp=vec, gm=vec, gamma=st.floats(0.0, 2.0))
def test_p1_mvr_matches_sgd_step(x, g, gp, gm, gamma):
    # same x-trajectory when both consume the same g_plus stream
    m = mvr_step(MvrState(x=x, g=g, gamma=gamma, p=1.0, B=2, B0=2), Minibatch(gp, gm, 2))
    s = sgd_step(SgdState(x, gamma, 2), Minibatch(g, None, 2))
    np.testing.assert_array_equal(m.x, s.x)
    np.testing.assert_array_equal(m.g, gp)


def test_mvr_init_noiseless():
    prob = QuadraticProblem(8, 0.0)
    x0 = np.linspace(0, 1, 8)
    s = mvr_init(prob, x0, 1, gamma=0.1, p=0.5, B=4)
    np.testing.assert_array_equal(s.g, prob.exact_grad(x0))
    assert s.oracle_calls == 1


def test_mvr_init_variance():
    prob = QuadraticProblem(100, 0.1)
    x0 = prob.initial_point()
    devs = []
    for seed in range(30):
        s = mvr_init(prob, x0, 2000, seed, gamma=0.1, p=0.5, B=4)
        devs.append(np.sum((s.g - prob.exact_grad(x0)) ** 2))
        assert s.oracle_calls == 2000
    devs = np.array(devs)
    # each deviation is (sigma_add^2/B0) chi^2_100 with mean 5e-4 and sd sqrt(200)*5e-6
    assert abs(devs.mean() - 5e-4) <= 4 * math.sqrt(200) * 5e-6 / math.sqrt(30)


def test_mvr_init_dimension_mismatch():
    with pytest.raises(ValueError):
        mvr_init(QuadraticProblem(4), np.zeros(3), 2, gamma=0.1, p=0.5, B=1)


def test_p1_estimator_unbiased_monte_carlo():
    prob = QuadraticProblem(10, 0.5)
    x_new = np.linspace(-1, 1, 10)
    st_ = MvrState(x=np.zeros(10), g=np.ones(10), gamma=0.0, p=1.0, B=4, B0=4)
    draws = []
    for j in range(10_000):
        samples = [OracleSample(77, 4 * j + i) for i in range(4)]
        gm, gp = prob.mean_stochastic_grads([st_.x, x_new], samples)
        draws.append(mvr_step(st_, Minibatch(gp, gm, 4)).g)
    draws = np.array(draws)
    se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - prob.exact_grad(x_new)) <= 4 * se)


def test_theorem3_examples():
    prm = theorem3_params(0.01, 1.0, 1.0, 1.0)
    assert (prm.gamma, prm.p, prm.B, prm.B0, prm.K) == (0.25, 0.1, 60, 600, 2410)
    assert prm.regime == "mvr"
    prm = theorem3_params(0.04, 1.0, 1.0, 1.0)
    assert (prm.p, prm.B, prm.B0) == (0.2, 30, 150)


def test_theorem3_oracle_formula():
    # independent evaluation with fractions where possible
    for eps, sigma, delta, L in [(1e-3, 0.5, 2.0, 3.0), (0.02, 1.3, 0.7, 0.9)]:
        prm = theorem3_params(eps, sigma, delta, L)
        assert prm.B == math.ceil(6 * sigma / math.sqrt(eps) - 1e-9)
        assert prm.B0 == math.ceil(6 * sigma**2 / eps - 1e-9)
        assert prm.K == math.ceil(24 * delta * L / eps + sigma / math.sqrt(eps) - 1e-9)


def test_theorem3_fallbacks():
    lo = theorem3_params(0.5, 0.5, 10.0, 1.0)
    assert lo.regime == "low_noise" and lo.p == 1.0
    with pytest.raises(LowNoiseRegimeError):
        theorem3_params(0.5, 0.5, 10.0, 1.0, strict=True)
    st_ = theorem3_params(1.0, 5.0, 0.1, 1.0)
    assert st_.regime == "stationary" and st_.K == 0
    with pytest.raises(AlreadyStationaryError):
        theorem3_params(1.0, 5.0, 0.1, 1.0, strict=True)
    with pytest.raises(ValueError):
        theorem3_params(0.0, 1.0, 1.0, 1.0)


def test_method_factory():
    assert isinstance(make_method("rennala_sgd", gamma=0.1, B=3), RennalaSGD)
    m = make_method("rennala_mvr", gamma=0.1, p=0.2, B=3, B0=9)
    assert isinstance(m, RennalaMVR) and m.payload_kind == "pair" and m.init_size == 9
    i = make_method("rennala_mvr_inexact", gamma=0.1, p=0.2, B=3, B0=9, alpha=0.01)
    assert isinstance(i, InexactRennalaMVR) and i.payload_kind == "single"
    with pytest.raises(ValueError):
        make_method("adam", gamma=0.1)
    with pytest.raises(ValueError):
        RennalaMVR(0.1, 0.5, 2, 2, ignore_minus=True)
