"""Central finite-difference checks of every analytic gradient.

All checks run in float64. The error of a tensor is
``max|analytic - numeric| / max(max|analytic|, max|numeric|)`` and is 0 when
both are identically zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndcore
from .fourier_kan import FourierKanLayer
from .model import Architecture, LiteDgcnn, StftLayerSpec, Variant
from .nn import Linear, weighted_cross_entropy
from .stft_kan import StftKanConfig, StftKanLayer

STEP = 1e-6


def numeric_grad(f, array: np.ndarray, h: float = STEP) -> np.ndarray:
    """d f() / d array by central differences, perturbing ``array`` in place."""
    grad = np.zeros(array.shape, dtype=np.float64)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = f()
        flat[i] = orig - h
        minus = f()
        flat[i] = orig
        out[i] = (plus - minus) / (2.0 * h)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


@dataclass
class GradResult:
    name: str
    max_rel_error: float
    tensors: dict


def check_layer(layer, x: np.ndarray, rng: ndcore.Rng, name: str | None = None) -> GradResult:
    """Check ``sum(layer(x) * R)`` for a fixed random ``R`` against finite differences."""
    x = np.array(x, dtype=np.float64)
    probe = np.asarray(rng.normal(1.0, (x.shape[0], _out_dim(layer))), dtype=np.float64)

    def loss():
        return float(np.sum(layer.forward(x) * probe))

    layer.forward(x)
    grad_x = layer.backward(probe)
    analytic = {k: np.array(v) for k, v in layer.grads.items()}
    errors = {"x": rel_error(grad_x, numeric_grad(loss, x))}
    for key, param in layer.params.items():
        errors[key] = rel_error(analytic[key], numeric_grad(loss, param))
    return GradResult(name or layer.name, max(errors.values()), errors)


def _out_dim(layer) -> int:
    if isinstance(layer, StftKanLayer):
        return layer.cfg.d_out
    return layer.d_out


def gradcheck_architecture() -> Architecture:
    """Scaled-down liteDGCNN: widths 6->8->16, 16->32, 64->C, k=4."""
    stft = {
        "ecl1": StftLayerSpec(3, 2, 2, True, "boxcar"),
        "ecl2": StftLayerSpec(2, 4, 2, False, "blackman"),
        "fel": StftLayerSpec(3, 6, 4, True, "bartlett"),
        "cl": StftLayerSpec(2, 20, 7, False, "hann"),
    }
    return Architecture(hidden=8, edge_out=16, emb_dims=32, k=4, stft=stft,
                        hybrid_cl=StftLayerSpec(3, 16, 5, False, "kaiser"))


def check_model(variant, seed: int = 0, n_points: int = 32, num_classes: int = 3) -> GradResult:
    """End-to-end weighted cross-entropy gradient check on one random cloud."""
    with ndcore.precision(np.float64):
        rng = ndcore.Rng(seed)
        model = LiteDgcnn(variant, num_classes, rng, gradcheck_architecture())
        cloud = rng.uniform(-1.0, 1.0, (2, n_points, 3))
        labels = np.array([0, num_classes - 1])
        weights = rng.uniform(0.5, 2.0, (num_classes,))
        graph = model.build_graph(cloud)

        def loss():
            return weighted_cross_entropy(model.forward(cloud, graph), labels, weights)[0]

        _, g = weighted_cross_entropy(model.forward(cloud, graph), labels, weights)
        analytic = {k: np.array(v) for k, v in model.backward(g).items()}
        errors = {}
        for key, param in model.parameters().items():
            errors[key] = rel_error(analytic[key], numeric_grad(loss, param))
    return GradResult(f"model[{Variant.parse(variant).label}]", max(errors.values()), errors)


def layer_cases(rng: ndcore.Rng):
    """(name, layer, input) triples covering overlap, padding and truncation."""
    cases = []
    stft_cfgs = {
        "stft_kan[overlap]": StftKanConfig(12, 3, 4, 2, 3, "hann", True),
        "stft_kan[pad]": StftKanConfig(3, 2, 5, 1, 2, "kaiser"),
        "stft_kan[truncate]": StftKanConfig(11, 2, 4, 3, 2, "blackman"),
        "stft_kan[w2]": StftKanConfig(6, 4, 2, 2, 3, "boxcar", True),
        "stft_kan[nobias]": StftKanConfig(9, 2, 3, 3, 2, "hamming", use_bias=False),
    }
    for name, cfg in stft_cfgs.items():
        layer = StftKanLayer(cfg, rng, name=name)
        layer.params = {k: v + rng.normal(0.1, v.shape) for k, v in layer.params.items()}
        cases.append((name, layer, rng.uniform(-1.0, 1.0, (3, cfg.d_in))))
    fk = FourierKanLayer(5, 3, 3, rng, name="fourier_kan")
    fk.params["bias"] = rng.normal(0.1, (3,))
    cases.append(("fourier_kan", fk, rng.uniform(-2.0, 2.0, (4, 5))))
    cases.append(("linear", Linear(7, 4, rng), rng.uniform(-1.0, 1.0, (5, 7))))
    return cases


def run_all(seed: int = 0) -> list[GradResult]:
    results = []
    with ndcore.precision(np.float64):
        rng = ndcore.Rng(seed)
        for name, layer, x in layer_cases(rng):
            results.append(check_layer(layer, x, rng, name))
    for variant in Variant:
        results.append(check_model(variant, seed))
    return results
