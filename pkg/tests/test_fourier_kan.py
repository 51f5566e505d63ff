import math

import numpy as np
import pytest

from stftkan import ndcore
from stftkan.fourier_kan import FourierKanLayer, fourier_kan_param_count
from stftkan.gradcheck import check_layer


def test_matches_double_sum(f64):
    rng = ndcore.Rng(5)
    layer = FourierKanLayer(3, 2, 4, rng)
    layer.params["bias"] = rng.normal(1.0, (2,))
    x = rng.uniform(-3, 3, (1, 3))
    a, b = layer.params["a"], layer.params["b"]
    expected = []
    for o in range(2):
        total = layer.params["bias"][o]
        for i in range(3):
            for k in range(1, 5):
                total += a[o, i, k - 1] * math.cos(k * x[0, i]) + b[o, i, k - 1] * math.sin(k * x[0, i])
        expected.append(total)
    np.testing.assert_allclose(layer.forward(x)[0], expected, rtol=1e-12)


def test_param_count():
    assert fourier_kan_param_count(1024, 7, 1) == 14343
    assert FourierKanLayer(10, 4, 3, ndcore.Rng(0)).param_count() == 2 * 4 * 10 * 3 + 4


def test_periodic_in_input(f64):
    layer = FourierKanLayer(4, 3, 2, ndcore.Rng(0))
    x = ndcore.Rng(1).uniform(-1, 1, (2, 4))
    np.testing.assert_allclose(layer.forward(x + 2 * np.pi), layer.forward(x), atol=1e-12)


def test_init_sigma():
    layer = FourierKanLayer(100, 50, 2, ndcore.Rng(0))
    assert np.std(layer.params["b"]) == pytest.approx(1 / math.sqrt(200), rel=0.05)


@pytest.mark.parametrize("seed", range(3))
def test_gradcheck(seed):
    with ndcore.precision(np.float64):
        rng = ndcore.Rng(seed)
        assert check_layer(FourierKanLayer(4, 3, 3, rng), rng.uniform(-2, 2, (3, 4)), rng).max_rel_error < 1e-5
