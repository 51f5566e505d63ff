"""Fourier-series KAN baseline: every input coordinate gets its own truncated series."""

from __future__ import annotations

import math

import numpy as np

from . import ndcore
from .errors import ConfigError, DimensionError
from .nn import Layer


def fourier_kan_param_count(d_in: int, d_out: int, grid_size: int) -> int:
    return 2 * d_out * d_in * grid_size + d_out


class FourierKanLayer(Layer):
    def __init__(self, d_in: int, d_out: int, grid_size: int = 1,
                 rng: ndcore.Rng | None = None, name: str = "fourier_kan"):
        super().__init__()
        if min(d_in, d_out, grid_size) < 1:
            raise ConfigError("d_in, d_out and grid_size must be >= 1")
        self.name = name
        self.d_in = int(d_in)
        self.d_out = int(d_out)
        self.grid_size = int(grid_size)
        shape = (self.d_out, self.d_in, self.grid_size)
        if rng is None:
            a = np.zeros(shape, dtype=ndcore.get_dtype())
            b = np.zeros(shape, dtype=ndcore.get_dtype())
        else:
            sigma = 1.0 / math.sqrt(self.d_in * self.grid_size)
            a = rng.normal(sigma, shape)
            b = rng.normal(sigma, shape)
        self.params = {"a": a, "b": b, "bias": np.zeros(self.d_out, dtype=a.dtype)}
        self._k = np.arange(1, self.grid_size + 1, dtype=np.float64)

    def forward(self, x):
        x = self._check_input(x, self.d_in)
        kx = x[:, :, None] * self._k.astype(x.dtype)
        cos_kx = np.cos(kx)
        sin_kx = np.sin(kx)
        self._cache = (cos_kx, sin_kx)
        rows = x.shape[0]
        a = self.params["a"].reshape(self.d_out, -1)
        b = self.params["b"].reshape(self.d_out, -1)
        return cos_kx.reshape(rows, -1) @ a.T + sin_kx.reshape(rows, -1) @ b.T + self.params["bias"]

    def backward(self, grad_out):
        cos_kx, sin_kx = self._cached()
        rows = cos_kx.shape[0]
        if grad_out.shape != (rows, self.d_out):
            raise DimensionError(f"{self.name}: grad_out shape {grad_out.shape}")
        shape = (self.d_out, self.d_in, self.grid_size)
        self.grads = {
            "a": (grad_out.T @ cos_kx.reshape(rows, -1)).reshape(shape),
            "b": (grad_out.T @ sin_kx.reshape(rows, -1)).reshape(shape),
            "bias": grad_out.sum(axis=0),
        }
        ga = (grad_out @ self.params["a"].reshape(self.d_out, -1)).reshape(rows, self.d_in, self.grid_size)
        gb = (grad_out @ self.params["b"].reshape(self.d_out, -1)).reshape(rows, self.d_in, self.grid_size)
        k = self._k.astype(grad_out.dtype)
        return ((gb * cos_kx - ga * sin_kx) * k).sum(axis=2)
