"""liteDGCNN: one EdgeConv block, a per-point expansion layer, max+mean pooling, classifier.

Four variants swap the layer family used in each stage:

    mlp           linear+ReLU edge layers, linear+ReLU expansion, linear classifier
    stft-kan      STFT-KAN in all four positions
    stft-kan-mlp  linear+ReLU edge layers, STFT-KAN expansion and classifier
    fourier-kan   Fourier-KAN in all four positions
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import graph as G
from . import ndcore
from .errors import ConfigError, DataError, DimensionError, UsageError
from .fourier_kan import FourierKanLayer, fourier_kan_param_count
from .nn import Layer, Linear, ReLU
from .stft_kan import StftKanConfig, StftKanLayer
from .windows import DEFAULT_KAISER_BETA, WindowKind


class Variant(enum.IntEnum):
    MLP = 0
    STFT_KAN = 1
    STFT_KAN_MLP = 2
    FOURIER_KAN = 3

    @classmethod
    def parse(cls, name) -> "Variant":
        if isinstance(name, Variant):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for v in cls:
            if v.label == key:
                return v
        raise ConfigError(f"unknown variant {name!r}; expected one of {', '.join(v.label for v in cls)}")

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")


@dataclass(frozen=True)
class StftLayerSpec:
    """Framing hyperparameters of one STFT-KAN layer; widths come from the architecture."""

    grid_size: int
    window_size: int
    stride: int
    smooth_init: bool = False
    window: WindowKind = WindowKind.BOXCAR
    beta: float = DEFAULT_KAISER_BETA
    use_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "window", WindowKind.parse(self.window))

    def config(self, d_in: int, d_out: int) -> StftKanConfig:
        return StftKanConfig(d_in, d_out, self.window_size, self.stride, self.grid_size,
                             self.window, self.smooth_init, self.use_bias, self.beta)


STAGES = ("ecl1", "ecl2", "fel", "cl")

# minimal configuration used for the layer-by-layer comparison
DEFAULT_STFT = {
    "ecl1": StftLayerSpec(3, 2, 2, True, WindowKind.BOXCAR),
    "ecl2": StftLayerSpec(1, 28, 5, False, WindowKind.BLACKMAN),
    "fel": StftLayerSpec(7, 52, 20, True, WindowKind.BARTLETT),
    "cl": StftLayerSpec(6, 197, 10, False, WindowKind.HANN),
}
HYBRID_CL = StftLayerSpec(7, 197, 7, False, WindowKind.HANN)


@dataclass(frozen=True)
class Architecture:
    in_dim: int = 3
    hidden: int = 64
    edge_out: int = 128
    emb_dims: int = 1024
    k: int = 8
    stft: dict = field(default_factory=lambda: dict(DEFAULT_STFT))
    hybrid_cl: StftLayerSpec = HYBRID_CL
    fourier_grid: int = 1

    def widths(self, num_classes: int) -> dict[str, tuple[int, int]]:
        return {
            "ecl1": (2 * self.in_dim, self.hidden),
            "ecl2": (self.hidden, self.edge_out),
            "fel": (self.edge_out, self.emb_dims),
            "cl": (2 * self.emb_dims, num_classes),
        }

    def stft_spec(self, variant: Variant, stage: str) -> StftLayerSpec:
        if variant == Variant.STFT_KAN_MLP and stage == "cl":
            return self.hybrid_cl
        return self.stft[stage]

    def layer_kinds(self, variant: Variant) -> dict[str, str]:
        if variant == Variant.MLP:
            return dict.fromkeys(STAGES, "linear")
        if variant == Variant.STFT_KAN:
            return dict.fromkeys(STAGES, "stft")
        if variant == Variant.STFT_KAN_MLP:
            return {"ecl1": "linear", "ecl2": "linear", "fel": "stft", "cl": "stft"}
        return dict.fromkeys(STAGES, "fourier")


def scaled_architecture(hidden: int, edge_out: int, emb_dims: int, k: int,
                        stft: dict | None = None, hybrid_cl: StftLayerSpec | None = None) -> Architecture:
    """Smaller widths for tests and smoke runs. ``stft`` must fit the new widths."""
    base = Architecture()
    arch = replace(base, hidden=hidden, edge_out=edge_out, emb_dims=emb_dims, k=k,
                   stft=dict(stft or base.stft), hybrid_cl=hybrid_cl or base.hybrid_cl)
    return arch


def param_count(variant, num_classes: int = 7, arch: Architecture | None = None) -> int:
    """Closed-form trainable parameter count, without building the model."""
    variant = Variant.parse(variant)
    arch = arch or Architecture()
    total = 0
    kinds = arch.layer_kinds(variant)
    for stage, (d_in, d_out) in arch.widths(num_classes).items():
        kind = kinds[stage]
        if kind == "linear":
            total += d_in * d_out + d_out
        elif kind == "stft":
            total += arch.stft_spec(variant, stage).config(d_in, d_out).param_count()
        else:
            total += fourier_kan_param_count(d_in, d_out, arch.fourier_grid)
    return total


class LiteDgcnn:
    def __init__(self, variant, num_classes: int, rng: ndcore.Rng | None = None,
                 arch: Architecture | None = None):
        self.variant = Variant.parse(variant)
        if num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {num_classes}")
        self.num_classes = int(num_classes)
        self.arch = arch or Architecture()
        kinds = self.arch.layer_kinds(self.variant)
        widths = self.arch.widths(self.num_classes)
        self.layers: dict[str, Layer] = {}
        for stage in STAGES:
            d_in, d_out = widths[stage]
            kind = kinds[stage]
            if kind == "linear":
                layer = Linear(d_in, d_out, rng, name=stage)
            elif kind == "stft":
                spec = self.arch.stft_spec(self.variant, stage)
                layer = StftKanLayer(spec.config(d_in, d_out), rng, name=stage)
            else:
                layer = FourierKanLayer(d_in, d_out, self.arch.fourier_grid, rng, name=stage)
            self.layers[stage] = layer
        self.edge_stack = self._stack(["ecl1", "ecl2"])
        self.fel_stack = self._stack(["fel"])
        self._cache = None

    def _stack(self, stages) -> list[Layer]:
        out = []
        for stage in stages:
            layer = self.layers[stage]
            out.append(layer)
            if isinstance(layer, Linear):
                out.append(ReLU())
        return out

    # parameters -------------------------------------------------------
    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{s}.{k}": v for s, layer in self.layers.items() for k, v in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{s}.{k}": v for s, layer in self.layers.items() for k, v in layer.grads.items()}

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers.values())

    def astype(self, dtype) -> "LiteDgcnn":
        for layer in self.layers.values():
            layer.astype(dtype)
        self._cache = None
        return self

    @property
    def dtype(self):
        return next(iter(self.layers["cl"].params.values())).dtype

    # passes -----------------------------------------------------------
    def build_graph(self, clouds: np.ndarray) -> np.ndarray:
        clouds = np.asarray(clouds)
        if clouds.shape[-2] <= self.arch.k:
            raise DataError(f"cloud has {clouds.shape[-2]} points, need more than k={self.arch.k}")
        return G.knn(clouds, self.arch.k).neighbor_idx

    def forward(self, clouds: np.ndarray, neighbor_idx: np.ndarray | None = None) -> np.ndarray:
        """Logits for one cloud ``(n, 3)`` -> ``(C,)`` or a batch ``(B, n, 3)`` -> ``(B, C)``."""
        clouds = np.asarray(clouds)
        single = clouds.ndim == 2
        if single:
            clouds = clouds[None]
            if neighbor_idx is not None and neighbor_idx.ndim == 2:
                neighbor_idx = neighbor_idx[None]
        if clouds.ndim != 3 or clouds.shape[-1] != self.arch.in_dim:
            raise DimensionError(f"expected clouds (B, n, {self.arch.in_dim}), got {clouds.shape}")
        B, n, _ = clouds.shape
        k = self.arch.k
        if n <= k:
            raise DataError(f"cloud has {n} points, need more than k={k}")
        if neighbor_idx is None:
            neighbor_idx = self.build_graph(clouds)
        x = clouds.astype(self.dtype, copy=False)

        h = G.edge_features(x, neighbor_idx).reshape(B * n * k, -1)
        for layer in self.edge_stack:
            h = layer.forward(h)
        h = h.reshape(B * n, k, -1)
        h, edge_arg = G.edge_aggregate_max(h)
        for layer in self.fel_stack:
            h = layer.forward(h)
        h = h.reshape(B, n, -1)
        pooled, pool_arg = G.global_pool(h)
        logits = self.layers["cl"].forward(pooled)
        self._cache = (B, n, neighbor_idx, edge_arg, pool_arg)
        return logits[0] if single else logits

    def backward(self, grad_logits: np.ndarray, input_grad: bool = False):
        """Backpropagate; fills each layer's ``grads``. Returns the gradient set.

        With ``input_grad`` also returns the gradient with respect to the clouds.
        """
        if self._cache is None:
            raise UsageError("backward called before forward")
        B, n, neighbor_idx, edge_arg, pool_arg = self._cache
        g = np.asarray(grad_logits).reshape(B, -1).astype(self.dtype, copy=False)
        k = self.arch.k
        g = self.layers["cl"].backward(g)
        g = G.global_pool_backward(g, pool_arg, n).reshape(B * n, -1)
        for layer in reversed(self.fel_stack):
            g = layer.backward(g)
        g = G.edge_aggregate_max_backward(g, edge_arg, k).reshape(B * n * k, -1)
        for layer in reversed(self.edge_stack):
            g = layer.backward(g)
        grads = self.gradients()
        if input_grad:
            gx = G.edge_features_backward(g.reshape(B, n, k, -1), neighbor_idx)
            return grads, gx
        return grads

    def clear_cache(self) -> None:
        self._cache = None
        for layer in self.edge_stack + self.fel_stack + [self.layers["cl"]]:
            layer.clear_cache()


def build(variant, num_classes: int = 7, rng: ndcore.Rng | None = None,
          arch: Architecture | None = None) -> LiteDgcnn:
    return LiteDgcnn(variant, num_classes, rng if rng is not None else ndcore.Rng(0), arch)
