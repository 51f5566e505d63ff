import numpy as np
import pytest

from stftkan import ndcore
from stftkan.errors import ConfigError, DimensionError, NumericalError


def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ndcore.matmul(a, np.eye(2)), a)
    np.testing.assert_array_equal(ndcore.matmul(np.eye(2), a), a)


def test_matmul_column():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ndcore.matmul(a, np.array([[0.0], [1.0]])), [[2.0], [4.0]])


def test_matmul_empty_inner():
    out = ndcore.matmul(np.zeros((1, 0)), np.zeros((0, 1)))
    assert out.shape == (1, 1) and out[0, 0] == 0.0


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        ndcore.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_matmul_nonfinite():
    with pytest.raises(NumericalError):
        ndcore.matmul(np.array([[np.inf]]), np.array([[1.0]]))


def test_reduce_max_tie_lowest_index():
    value, idx = ndcore.reduce(np.array([3.0, 1.0, 3.0]), 0, "max")
    assert value == 3.0 and idx == 0


def test_reduce_mean_and_empty():
    assert ndcore.reduce(np.array([2.0, 4.0]), 0, "mean")[0] == 3.0
    with pytest.raises(DimensionError):
        ndcore.reduce(np.array([]), 0, "sum")


def test_reduce_argmax_indexes_maximum(rng):
    t = np.round(rng.uniform(-2, 2, (6, 5, 4)), 1)  # rounding forces ties
    for axis in range(3):
        values, idx = ndcore.reduce(t, axis, "max")
        np.testing.assert_array_equal(np.take_along_axis(t, np.expand_dims(idx, axis), axis).squeeze(axis), values)
        np.testing.assert_array_equal(values, t.max(axis=axis))


def test_rng_determinism():
    a = ndcore.rng_uniform(ndcore.Rng(0), 0.0, 1.0, (5, 3))
    b = ndcore.rng_uniform(ndcore.Rng(0), 0.0, 1.0, (5, 3))
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, ndcore.rng_uniform(ndcore.Rng(1), 0.0, 1.0, (5, 3)))


def test_rng_uniform_mean():
    draws = ndcore.Rng(0).uniform(0.0, 1.0, 10**6)
    assert abs(float(draws.mean()) - 0.5) < 0.01
    assert draws.min() >= 0.0 and draws.max() < 1.0


def test_rng_bad_range():
    with pytest.raises(ConfigError):
        ndcore.Rng(0).uniform(1.0, 1.0, 3)


def test_rng_state_roundtrip():
    r = ndcore.Rng(7)
    r.uniform(0, 1, 10)
    saved = r.state
    a = r.uniform(0, 1, 4)
    r.state = saved
    assert a.tobytes() == r.uniform(0, 1, 4).tobytes()


def test_precision_context():
    assert ndcore.get_dtype() == np.float32
    with ndcore.precision(np.float64):
        assert ndcore.Rng(0).uniform(0, 1, 2).dtype == np.float64
    assert ndcore.get_dtype() == np.float32
    with pytest.raises(ConfigError):
        ndcore.set_dtype(np.int32)
