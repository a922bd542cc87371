import numpy as np
import pytest

from xmodal.errors import NumericalError
from xmodal.network import AdamState, adam_step


def _fresh(value):
    params = {"p": np.array(value, dtype=np.float64)}
    return params, AdamState.zeros_like(params)


def test_zero_gradient_is_fixed_point():
    params, state = _fresh([1.0, -2.0, 3.0])
    before = params["p"].copy()
    adam_step(params, {"p": np.zeros(3)}, state, t=1)
    np.testing.assert_array_equal(params["p"], before)


def test_first_step_closed_form():
    # t=1, fresh state: m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps)
    lr, eps = 1e-3, 1e-8
    for g in (0.5, -3.0, 1e-4):
        params, state = _fresh([0.0])
        adam_step(params, {"p": np.array([g])}, state, t=1, lr=lr, eps=eps)
        expected = -lr * g / (abs(g) + eps)
        assert params["p"][0] == pytest.approx(expected, rel=1e-12)
        # approximately lr in magnitude, signed against the gradient
        assert params["p"][0] == pytest.approx(-lr * np.sign(g), rel=1e-3)


def test_two_steps_match_reference_recurrence():
    # independent re-evaluation of the published update equations
    lr, b1, b2, eps = 2e-3, 0.9, 0.999, 1e-8
    gs = [np.array([0.3, -1.2]), np.array([-0.7, 0.4])]
    params, state = _fresh([1.0, 1.0])
    m = np.zeros(2)
    v = np.zeros(2)
    theta = np.array([1.0, 1.0])
    for t, g in enumerate(gs, start=1):
        adam_step(params, {"p": g.copy()}, state, t=t, lr=lr, beta1=b1, beta2=b2, eps=eps)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    np.testing.assert_allclose(params["p"], theta, rtol=1e-14)


def test_deterministic_given_identical_inputs():
    out = []
    for _ in range(2):
        params, state = _fresh([0.25, -0.75])
        adam_step(params, {"p": np.array([0.1, 0.9])}, state, t=1)
        adam_step(params, {"p": np.array([-0.2, 0.3])}, state, t=2)
        out.append((params["p"].tobytes(), state.m["p"].tobytes(), state.v["p"].tobytes()))
    assert out[0] == out[1]


def test_non_finite_gradient_rejected():
    params, state = _fresh([1.0])
    with pytest.raises(NumericalError, match="non-finite gradient"):
        adam_step(params, {"p": np.array([np.nan])}, state, t=1)


def test_bad_step_index():
    params, state = _fresh([1.0])
    with pytest.raises(ValueError):
        adam_step(params, {"p": np.zeros(1)}, state, t=0)
