import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from topiceval.netcore import (
    AdamState,
    DenseLayer,
    adam_step,
    cross_entropy,
    finite_diff_gradcheck,
    linear_forward,
    normalized_entropy,
    relu,
    softmax,
)

finite = st.floats(-50, 50, allow_nan=False)


def test_linear_forward():
    assert list(linear_forward(DenseLayer(np.eye(2), np.zeros(2)), [3, 4])) == [3, 4]
    assert list(linear_forward(DenseLayer(np.zeros((2, 3)), [1, 2]), [5, 6, 7])) == [1, 2]
    assert list(linear_forward(DenseLayer([[1, 1]], [0]), [2, 5])) == [7]
    with pytest.raises(ValueError):
        linear_forward(DenseLayer(np.eye(2), np.zeros(2)), [1, 2, 3])


def test_relu():
    assert list(relu(np.array([-1.0, 0.0, 2.0]))) == [0, 0, 2]
    assert not relu(-np.arange(1, 5.0)).any()
    x = np.arange(4.0)
    assert np.array_equal(relu(x), x)


def test_softmax_examples():
    assert list(softmax(np.zeros(2))) == [0.5, 0.5]
    assert np.allclose(softmax(np.full(4, 123.0)), 0.25, atol=0, rtol=0)
    p = softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0) and p[1] < 1e-300


@given(arrays(np.float64, st.integers(1, 20), elements=finite), st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(z, c):
    p = softmax(z)
    assert abs(p.sum() - 1) <= 1e-12
    assert np.max(np.abs(softmax(z + c) - p)) <= 1e-12


def test_cross_entropy():
    assert cross_entropy(np.full(4, 0.25), 2) == pytest.approx(math.log(4), abs=1e-12)
    assert cross_entropy(np.array([0.0, 1.0]), 1) == 0
    assert cross_entropy(np.array([1.0, 1e-20]), 1) == pytest.approx(-math.log(1e-12))


@given(arrays(np.float64, st.integers(1, 10), elements=finite), st.data())
def test_cross_entropy_nonnegative(z, data):
    label = data.draw(st.integers(0, len(z) - 1))
    assert cross_entropy(softmax(z), label) >= 0


def test_normalized_entropy():
    assert normalized_entropy(np.full(26, 1 / 26)) == pytest.approx(1.0, abs=1e-12)
    assert normalized_entropy(np.array([1.0, 0, 0])) == 0.0


def test_adam_zero_gradient_leaves_params():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    assert list(p["w"]) == [1.0, -2.0]


def test_adam_first_step_closed_form():
    g = np.array([0.5, -3.0, 1e-3])
    p = {"w": np.zeros(3)}
    state = AdamState(lr=1e-3)
    adam_step(p, {"w": g}, state)
    assert state.t == 1
    assert np.allclose(p["w"], -1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-12, atol=0)


def test_adam_deterministic_and_checks_shapes():
    def run():
        p = {"w": np.ones((2, 2))}
        s = AdamState()
        for k in range(3):
            adam_step(p, {"w": np.full((2, 2), k - 1.0)}, s)
        return p["w"]
    assert np.array_equal(run(), run())
    with pytest.raises(ValueError):
        adam_step({"w": np.ones(2)}, {"w": np.ones(3)}, AdamState())


def test_gradcheck_quadratic():
    theta = {"t": np.array([3.0])}

    def fn(x, y):
        return float(theta["t"][0] ** 2), {"t": 2 * theta["t"]}

    assert finite_diff_gradcheck(fn, theta, None, None, eps=1e-5) < 1e-9


def test_gradcheck_catches_wrong_gradient():
    theta = {"t": np.array([3.0, -1.0])}

    def fn(x, y):
        return float(np.sum(theta["t"] ** 2)), {"t": 4 * theta["t"]}

    assert finite_diff_gradcheck(fn, theta, None, None) > 0.1


def test_gradcheck_subsamples_at_least_200():
    theta = {"t": np.linspace(-1, 1, 1000)}
    calls = []

    def fn(x, y):
        calls.append(1)
        return float(np.sum(np.sin(theta["t"]))), {"t": np.cos(theta["t"])}

    err = finite_diff_gradcheck(fn, theta, None, None, max_coords=50)
    assert err < 1e-8
    assert len(calls) == 1 + 2 * 200
