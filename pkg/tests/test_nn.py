import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stftkan import ndcore
from stftkan.errors import DataError, UsageError
from stftkan.gradcheck import check_layer, numeric_grad, rel_error
from stftkan.nn import AdamState, Linear, LrSchedule, ReLU, adam_step, weighted_cross_entropy


def ce_oracle(logits, labels, weights):
    """Explicit probabilities, no max shift."""
    total, norm = 0.0, 0.0
    for row, y in zip(logits, labels):
        p = math.exp(row[y]) / sum(math.exp(v) for v in row)
        total += -weights[y] * math.log(p)
        norm += weights[y]
    return total / norm


def test_linear_forward(f64):
    layer = Linear(2, 1, None)
    layer.params["weight"][...] = [[2.0, -1.0]]
    layer.params["bias"][...] = [0.5]
    np.testing.assert_array_equal(layer.forward(np.array([[1.0, 3.0]])), [[-0.5]])


def test_linear_gradcheck():
    with ndcore.precision(np.float64):
        rng = ndcore.Rng(0)
        assert check_layer(Linear(5, 3, rng), rng.uniform(-1, 1, (4, 5)), rng).max_rel_error < 1e-6


def test_relu():
    r = ReLU()
    np.testing.assert_array_equal(r.forward(np.array([[-1.0, 0.0, 2.0]])), [[0, 0, 2]])
    np.testing.assert_array_equal(r.backward(np.ones((1, 3))), [[0, 0, 1]])


def test_ce_uniform_logits_is_log_c():
    loss, _ = weighted_cross_entropy(np.zeros((4, 7)), [0, 1, 2, 3])
    assert loss == pytest.approx(math.log(7), rel=1e-12)


@given(st.integers(0, 2**16))
def test_ce_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(0, 3, (5, 4))
    labels = rng.integers(0, 4, 5)
    weights = rng.uniform(0.5, 5, 4)
    loss, _ = weighted_cross_entropy(logits, labels, weights)
    assert abs(loss - ce_oracle(logits, labels, weights)) < 1e-8


def test_ce_gradient(f64):
    rng = ndcore.Rng(2)
    logits = rng.normal(1.0, (3, 5))
    labels = np.array([0, 4, 2])
    weights = np.array([1.0, 2.0, 3.0, 1.0, 4.0])
    _, grad = weighted_cross_entropy(logits, labels, weights)
    num = numeric_grad(lambda: weighted_cross_entropy(logits, labels, weights)[0], logits)
    assert rel_error(grad, num) < 1e-7


def test_ce_large_logits_stable():
    loss, grad = weighted_cross_entropy(np.array([[1000.0, 0.0]]), [0])
    assert loss == pytest.approx(0.0, abs=1e-12) and np.all(np.isfinite(grad))


def test_ce_bad_label():
    with pytest.raises(DataError):
        weighted_cross_entropy(np.zeros((1, 3)), [3])


def test_adam_first_step_magnitude():
    p = {"w": np.array([1.0, -2.0])}
    state = AdamState(lr=0.1, weight_decay=0.0)
    adam_step(p, {"w": np.array([0.5, -3.0])}, state)
    # bias-corrected first step moves each coordinate by lr against the gradient sign
    np.testing.assert_allclose(p["w"], [0.9, -1.9], rtol=1e-6)


def test_adam_weight_decay_coupled():
    p = {"w": np.array([2.0])}
    state = AdamState(lr=0.1, weight_decay=0.5)
    adam_step(p, {"w": np.array([0.0])}, state)
    assert p["w"][0] == pytest.approx(1.9, rel=1e-6)


def test_adam_minimizes_quadratic():
    p = {"w": np.array([3.0, -4.0])}
    state = AdamState(lr=0.05, weight_decay=0.0)
    for _ in range(500):
        adam_step(p, {"w": 2 * p["w"]}, state)
    assert np.max(np.abs(p["w"])) < 0.05


def test_schedule_constant_by_default():
    s = LrSchedule()
    assert all(s.lr_at(e) == 1e-3 for e in (0, 150, 300))


def test_schedule_cosine():
    s = LrSchedule(1e-2, 0.0, 10)
    assert s.lr_at(0) == pytest.approx(1e-2)
    assert s.lr_at(5) == pytest.approx(5e-3)
    assert s.lr_at(10) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(UsageError):
        s.lr_at(11)
