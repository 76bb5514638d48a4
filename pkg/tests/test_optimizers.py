import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rlpinns.optimizers import LbfgsState, OptimizerError, adam_init, adam_step, lbfgs_step


def test_adam_first_step():
    st_ = adam_init(1, lr=0.1)
    p, st_ = adam_step(st_, np.array([1.0]), np.array([1.0]))
    assert p[0] == pytest.approx(0.9, abs=1e-6)
    assert st_.step_count == 1


def test_adam_zero_gradient_is_fixed_point():
    p0 = np.array([1.0, -2.0])
    p, _ = adam_step(adam_init(2), p0, np.zeros(2))
    np.testing.assert_array_equal(p, p0)


def test_adam_deterministic_and_pure():
    s = adam_init(3, lr=0.01)
    p0 = np.array([1.0, 2.0, 3.0])
    g = np.array([0.1, -0.2, 0.3])
    a = adam_step(s, p0, g)
    b = adam_step(s, p0, g)
    np.testing.assert_array_equal(a[0], b[0])
    assert s.step_count == 0 and not np.any(s.m)


def test_adam_rejects_bad_gradient():
    with pytest.raises(OptimizerError, match="non-finite"):
        adam_step(adam_init(2), np.zeros(2), np.array([1.0, np.inf]))
    with pytest.raises(OptimizerError):
        adam_step(adam_init(2), np.zeros(2), np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20), st.integers(1, 30))
def test_adam_step_bounded(grads, steps):
    g = np.array(grads)
    s = adam_init(g.size, lr=1e-2)
    p = np.zeros(g.size)
    for _ in range(steps):
        new, s = adam_step(s, p, g)
        assert np.all(np.abs(new - p) <= s.lr / (1 - s.beta1) + 1e-12)
        p = new


def quadratic(x):
    d = np.array([1.0, 10.0])
    return 0.5 * float(x @ (d * x)), d * x


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


def test_lbfgs_quadratic():
    s = LbfgsState()
    x = np.array([1.0, 1.0])
    for _ in range(10):
        x, s = lbfgs_step(s, x, quadratic)
    assert quadratic(x)[0] < 1e-10


def test_lbfgs_stationary_point():
    s = LbfgsState()
    x, s = lbfgs_step(s, np.zeros(2), quadratic)
    np.testing.assert_array_equal(x, [0, 0])


def test_lbfgs_rosenbrock_monotone():
    s = LbfgsState()
    x = np.array([-1.2, 1.0])
    prev = rosenbrock(x)[0]
    for _ in range(200):
        x, s = lbfgs_step(s, x, rosenbrock)
        assert s.loss <= prev
        prev = s.loss
        assert len(s.history) <= s.capacity
        assert all(sv @ yv > 0 for sv, yv in s.history)
    assert rosenbrock(x)[0] < 1e-6


def test_lbfgs_fallback_flagged():
    x0 = np.array([1.0, 1.0])

    def evaluate(x):
        # no trial point ever decreases the loss, so both searches fail
        return (1.0 if np.array_equal(x, x0) else 2.0), np.array([1.0, 1.0])

    s = LbfgsState()
    x, s = lbfgs_step(s, x0, evaluate)
    assert s.last_fallback and s.fallbacks == 1
    np.testing.assert_array_equal(x, x0)


def test_lbfgs_rejects_nonfinite():
    with pytest.raises(OptimizerError):
        lbfgs_step(LbfgsState(), np.zeros(2), lambda x: (np.nan, np.zeros(2)))
