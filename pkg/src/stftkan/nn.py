"""Conventional building blocks: layer protocol, linear, ReLU, loss, Adam, LR schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ndcore
from .errors import DataError, DimensionError, NumericalError, UsageError


class Layer:
    """Stateful layer with cached forward inputs.

    ``forward`` caches whatever ``backward`` needs; ``backward`` fills
    ``self.grads`` (same keys as ``self.params``) and returns the gradient
    with respect to the input. Inputs are 2-D ``(rows, features)``.
    """

    name = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self) -> None:
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def astype(self, dtype) -> "Layer":
        for k in list(self.params):
            self.params[k] = self.params[k].astype(dtype)
        self._cache = None
        return self

    def clear_cache(self) -> None:
        self._cache = None

    def _check_input(self, x: np.ndarray, d_in: int) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != d_in:
            raise DimensionError(f"{self.name}: expected input (rows, {d_in}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite input to layer {self.name}")
        return x

    def _cached(self):
        if self._cache is None:
            raise UsageError(f"{self.name}: backward called without a cached forward pass")
        return self._cache


class Linear(Layer):
    def __init__(self, d_in: int, d_out: int, rng: ndcore.Rng | None = None, name: str = "linear"):
        super().__init__()
        self.name = name
        self.d_in = int(d_in)
        self.d_out = int(d_out)
        bound = 1.0 / math.sqrt(self.d_in)
        if rng is None:
            weight = np.zeros((self.d_out, self.d_in), dtype=ndcore.get_dtype())
            bias = np.zeros(self.d_out, dtype=ndcore.get_dtype())
        else:
            weight = rng.uniform(-bound, bound, (self.d_out, self.d_in))
            bias = rng.uniform(-bound, bound, (self.d_out,))
        self.params = {"weight": weight, "bias": bias}

    def forward(self, x):
        x = self._check_input(x, self.d_in)
        self._cache = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad_out):
        x = self._cached()
        if grad_out.shape != (x.shape[0], self.d_out):
            raise DimensionError(f"{self.name}: grad_out shape {grad_out.shape}")
        self.grads = {
            "weight": grad_out.T @ x,
            "bias": grad_out.sum(axis=0),
        }
        return grad_out @ self.params["weight"]


class ReLU(Layer):
    name = "relu"

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return np.where(mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad_out):
        return grad_out * self._cached()


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def weighted_cross_entropy(logits: np.ndarray, labels, class_weights=None):
    """Weighted softmax cross-entropy averaged by the total sample weight.

    Returns ``(loss, grad_logits)``.
    """
    logits = np.asarray(logits)
    if logits.ndim != 2:
        raise DimensionError(f"logits must be (batch, classes), got {logits.shape}")
    batch, n_classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (batch,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(f"label out of range [0, {n_classes})")
    if class_weights is None:
        class_weights = np.ones(n_classes)
    w = np.asarray(class_weights, dtype=np.float64)[labels]
    z = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    nll = log_norm - z[np.arange(batch), labels]
    total_w = w.sum()
    loss = float((w * nll).sum() / total_w)
    if not math.isfinite(loss):
        raise NumericalError("non-finite loss")
    probs = np.exp(z - log_norm[:, None])
    probs[np.arange(batch), labels] -= 1.0
    grad = probs * (w / total_w)[:, None]
    return loss, grad.astype(logits.dtype)


@dataclass
class AdamState:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """In-place Adam update with L2 weight decay folded into the gradient."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {key} has shape {g.shape}, parameter {p.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(p.dtype)


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 1e-3
    eta_min: float = 1e-3
    total_epochs: int = 300

    def lr_at(self, epoch: int) -> float:
        if not 0 <= epoch <= self.total_epochs:
            raise UsageError(f"epoch {epoch} outside [0, {self.total_epochs}]")
        cos = math.cos(math.pi * epoch / self.total_epochs)
        return self.eta_min + 0.5 * (self.base_lr - self.eta_min) * (1.0 + cos)


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    return schedule.lr_at(epoch)


def mlp_block_param_count(d_in: int, hidden: int, d_out: int) -> int:
    return (d_in * hidden + hidden) + (hidden * d_out + d_out)
