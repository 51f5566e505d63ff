"""Short-time Fourier KAN layer.

The input vector is cut into ``N_w`` frames of ``W`` samples spaced ``S``
apart, each frame is tapered by a window and projected onto ``G`` cosine and
sine harmonics, and every output is a learned combination of those
projections plus a bias. For fixed coefficients the map is linear in the
input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ndcore
from .errors import ConfigError, DimensionError
from .nn import Layer
from .windows import DEFAULT_KAISER_BETA, WindowKind, WindowSpec, make_window


def num_windows(d_in: int, window_size: int, stride: int) -> tuple[int, int]:
    """Return ``(N_w, L)`` for a signal of length ``d_in``.

    Inputs shorter than one window are padded to a single frame.
    """
    if window_size < 1 or stride < 1:
        raise ConfigError("window size and stride must be >= 1")
    n_w = (max(d_in, window_size) - window_size) // stride + 1
    return n_w, (n_w - 1) * stride + window_size


@dataclass(frozen=True)
class StftKanConfig:
    d_in: int
    d_out: int
    window_size: int
    stride: int
    grid_size: int
    window: WindowKind = WindowKind.BOXCAR
    smooth_init: bool = False
    use_bias: bool = True
    beta: float = DEFAULT_KAISER_BETA

    def __post_init__(self):
        object.__setattr__(self, "window", WindowKind.parse(self.window))
        for name in ("d_in", "d_out", "window_size", "stride", "grid_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def n_windows(self) -> int:
        return num_windows(self.d_in, self.window_size, self.stride)[0]

    @property
    def length(self) -> int:
        return num_windows(self.d_in, self.window_size, self.stride)[1]

    def param_count(self) -> int:
        return 2 * self.d_out * self.n_windows * self.grid_size + (self.d_out if self.use_bias else 0)


def harmonic_basis(window_size: int, grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    """cos/sin(2*pi*k*n/W) for k = 1..G (rows) and n = 0..W-1 (columns)."""
    k = np.arange(1, grid_size + 1)[:, None]
    n = np.arange(window_size)[None, :]
    phase = (k * n) % window_size
    theta = 2.0 * np.pi * phase / window_size
    cos, sin = np.cos(theta), np.sin(theta)
    # quarter-turn angles are exact so dead harmonics (e.g. sin at W=2) are exactly zero
    quarter = (4 * phase) % window_size == 0
    q = (4 * phase // window_size) % 4
    cos = np.where(quarter, np.array([1.0, 0.0, -1.0, 0.0])[q], cos)
    sin = np.where(quarter, np.array([0.0, 1.0, 0.0, -1.0])[q], sin)
    return cos, sin


def _fit_length(x: np.ndarray, length: int) -> np.ndarray:
    """Zero-pad at the tail or truncate the last axis to ``length``."""
    d_in = x.shape[-1]
    if d_in == length:
        return x
    if d_in > length:
        return x[..., :length]
    pad = [(0, 0)] * (x.ndim - 1) + [(0, length - d_in)]
    return np.pad(x, pad)


def frame(x: np.ndarray, cfg: StftKanConfig, window: np.ndarray | None = None) -> np.ndarray:
    """Windowed frames of ``x`` with shape ``(..., N_w, W)``."""
    if x.shape[-1] != cfg.d_in:
        raise DimensionError(f"expected last dimension {cfg.d_in}, got {x.shape[-1]}")
    if window is None:
        window = make_window(WindowSpec(cfg.window, cfg.window_size, cfg.beta))
    n_w, length = num_windows(cfg.d_in, cfg.window_size, cfg.stride)
    idx = np.arange(n_w)[:, None] * cfg.stride + np.arange(cfg.window_size)[None, :]
    return _fit_length(x, length)[..., idx] * window.astype(x.dtype, copy=False)


class StftKanLayer(Layer):
    def __init__(self, cfg: StftKanConfig, rng: ndcore.Rng | None = None, name: str = "stft_kan"):
        super().__init__()
        self.cfg = cfg
        self.name = name
        n_w = cfg.n_windows
        shape = (cfg.d_out, n_w, cfg.grid_size)
        if rng is None:
            a = np.zeros(shape, dtype=ndcore.get_dtype())
            b = np.zeros(shape, dtype=ndcore.get_dtype())
        else:
            sigma = 1.0 / math.sqrt(n_w * cfg.grid_size * cfg.window_size)
            a = rng.normal(sigma, shape)
            b = rng.normal(sigma, shape)
            if cfg.smooth_init:
                gamma = smooth_init_scale(cfg.grid_size).astype(a.dtype)
                a *= gamma
                b *= gamma
        self.params = {"a": a, "b": b}
        if cfg.use_bias:
            self.params["bias"] = np.zeros(cfg.d_out, dtype=a.dtype)
        self._rebuild_constants()

    def _rebuild_constants(self) -> None:
        cfg = self.cfg
        self.window = make_window(WindowSpec(cfg.window, cfg.window_size, cfg.beta))
        self.cos_basis, self.sin_basis = harmonic_basis(cfg.window_size, cfg.grid_size)
        self._basis = np.concatenate([self.cos_basis, self.sin_basis], axis=0)

    def _coefficients(self) -> np.ndarray:
        # (d_out, N_w * 2G) with cos terms before sin terms inside each window
        coef = np.concatenate([self.params["a"], self.params["b"]], axis=2)
        return coef.reshape(self.cfg.d_out, -1)

    def projections(self, x: np.ndarray) -> np.ndarray:
        """Harmonic projections ``[Y_cos | Y_sin]`` with shape ``(rows, N_w, 2G)``."""
        frames = frame(x, self.cfg, self.window)
        return frames @ self._basis.T.astype(x.dtype, copy=False)

    def forward(self, x):
        x = self._check_input(x, self.cfg.d_in)
        proj = self.projections(x)
        self._cache = proj
        y = proj.reshape(x.shape[0], -1) @ self._coefficients().T
        if self.cfg.use_bias:
            y = y + self.params["bias"]
        return y

    def backward(self, grad_out, x=None):
        if x is not None:
            self.forward(x)
        proj = self._cached()
        cfg = self.cfg
        rows = proj.shape[0]
        if grad_out.shape != (rows, cfg.d_out):
            raise DimensionError(f"{self.name}: grad_out shape {grad_out.shape}, expected {(rows, cfg.d_out)}")
        G = cfg.grid_size
        n_w, length = num_windows(cfg.d_in, cfg.window_size, cfg.stride)

        grad_coef = (grad_out.T @ proj.reshape(rows, -1)).reshape(cfg.d_out, n_w, 2 * G)
        self.grads = {"a": grad_coef[..., :G], "b": grad_coef[..., G:]}
        if cfg.use_bias:
            self.grads["bias"] = grad_out.sum(axis=0)

        grad_proj = (grad_out @ self._coefficients()).reshape(rows, n_w, 2 * G)
        grad_frames = grad_proj @ self._basis.astype(grad_out.dtype, copy=False)
        grad_frames *= self.window.astype(grad_out.dtype, copy=False)

        W, S = cfg.window_size, cfg.stride
        grad_padded = np.zeros((rows, length), dtype=grad_out.dtype)
        # overlapping frames accumulate; loop over whichever axis is shorter
        if n_w <= W:
            for w in range(n_w):
                grad_padded[:, w * S:w * S + W] += grad_frames[:, w, :]
        else:
            stop = S * (n_w - 1) + 1
            for n in range(W):
                grad_padded[:, n:n + stop:S] += grad_frames[:, :, n]
        return _fit_length(grad_padded, cfg.d_in)


def smooth_init_scale(grid_size: int) -> np.ndarray:
    """Per-harmonic init multipliers k**-2 for k = 1..G."""
    k = np.arange(1, grid_size + 1, dtype=np.float64)
    return k ** -2.0


def harmonic_sum(frame_values: np.ndarray, a: np.ndarray, b: np.ndarray, window_size: int) -> np.ndarray:
    """Per-sample KAN basis value ``f[n] * sum_k (a_k cos + b_k sin)(2*pi*k*n/W)``.

    ``frame_values`` holds the already-windowed samples f[n] of one frame and
    ``a``/``b`` the harmonic coefficients for k = 1..len(a).
    """
    cos_b, sin_b = harmonic_basis(window_size, len(a))
    return frame_values * (a @ cos_b + b @ sin_b)


def truncation_gap(frame_values: np.ndarray, window_size: int, grid_size: int, coef_fn=None):
    """Sup-norm gap between the G-term and 4G-term harmonic sums of one frame.

    Returns ``(gap, bound)`` where ``bound = C * sqrt(2) * sqrt(sum_{k>G} (a_k^2 + b_k^2))``
    with ``C = max |f[n]|``. ``coef_fn(k)`` gives a_k = b_k (default k**-2) and
    the tail sum is evaluated to convergence.
    """
    if coef_fn is None:
        coef_fn = lambda k: k ** -2.0  # noqa: E731
    k_long = np.arange(1, 4 * grid_size + 1, dtype=np.float64)
    coef = coef_fn(k_long)
    short = harmonic_sum(frame_values, coef[:grid_size], coef[:grid_size], window_size)
    long = harmonic_sum(frame_values, coef, coef, window_size)
    gap = float(np.max(np.abs(long - short)))
    tail = _tail_square_sum(coef_fn, grid_size)
    C = float(np.max(np.abs(frame_values)))
    return gap, C * math.sqrt(2.0) * math.sqrt(2.0 * tail)


def _tail_square_sum(coef_fn, grid_size: int, rtol: float = 1e-15) -> float:
    total = 0.0
    k = grid_size + 1
    while True:
        block = np.arange(k, k + 4096, dtype=np.float64)
        part = float(np.sum(coef_fn(block) ** 2))
        total += part
        k += 4096
        if part <= rtol * total or k > 10**7:
            return total
