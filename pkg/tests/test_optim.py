import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepnurbs.errors import NonFiniteGradient
from deepnurbs.optim import AdamConfig, TrainState, adam_step


def run_quadratic(scale, steps=10_000, theta0=1.0, target=0.0):
    state = TrainState.start(np.array([theta0]))
    for _ in range(steps):
        state = adam_step(state, scale * (state.theta - target))
    return state


def test_first_step_hand_value():
    state = adam_step(TrainState.start(np.zeros(1)), np.ones(1))
    # m_hat = v_hat = 1 after bias correction, so theta_1 = -lr / (1 + eps)
    hand = -1e-3 / (1 + 1e-8)
    assert abs(state.theta[0] - hand) < 1e-12
    # the quoted -9.99999e-4 is this value truncated to six digits
    assert -1e-3 < state.theta[0] < -9.99999e-4
    assert state.step == 2


def test_zero_gradient_changes_only_step():
    fresh = adam_step(TrainState.start(np.array([0.3, -2.0])), np.zeros(2))
    np.testing.assert_array_equal(fresh.theta, [0.3, -2.0])
    np.testing.assert_array_equal(fresh.m, 0.0)
    np.testing.assert_array_equal(fresh.v, 0.0)
    assert fresh.step == 2


def test_matches_textbook_recurrence():
    rng = np.random.default_rng(0)
    cfg = AdamConfig(learning_rate=0.01, beta1=0.8, beta2=0.99, epsilon=1e-6)
    theta = rng.standard_normal(4)
    m = v = np.zeros(4)
    state = TrainState.start(theta.copy())
    for i in range(1, 30):
        g = rng.standard_normal(4)
        m = 0.8 * m + 0.2 * g
        v = 0.99 * v + 0.01 * g * g
        theta = theta - 0.01 * (m / (1 - 0.8**i)) / (np.sqrt(v / (1 - 0.99**i)) + 1e-6)
        state = adam_step(state, g, cfg)
    np.testing.assert_allclose(state.theta, theta, rtol=1e-14)
    assert np.all(state.v >= 0)


def test_converges_on_quadratic():
    state = run_quadratic(1.0)
    assert abs(state.theta[0]) < 1e-6


@pytest.mark.parametrize("scale", [1.0, 10.0, 1000.0])
def test_minimizer_independent_of_loss_scale(scale):
    state = run_quadratic(scale, target=0.25)
    assert abs(state.theta[0] - 0.25) < 1e-5


@settings(max_examples=25, deadline=None)
@given(g=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6))
def test_first_step_magnitude_is_learning_rate(g):
    g = np.array(g)
    state = adam_step(TrainState.start(np.zeros(g.size)), g)
    expected = -1e-3 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(state.theta, expected, rtol=1e-12, atol=1e-300)


def test_non_finite_gradient_raises():
    state = TrainState.start(np.zeros(3))
    with pytest.raises(NonFiniteGradient) as err:
        adam_step(state, np.array([0.0, np.nan, np.inf]))
    assert err.value.bad_count == 2 and err.value.step == 1


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        adam_step(TrainState.start(np.zeros(3)), np.zeros(2))
