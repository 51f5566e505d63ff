"""Dense array substrate used by every layer.

Arrays are plain row-major ``numpy.ndarray`` values. This module adds the
pieces the layers rely on beyond numpy itself: a process-wide floating
precision, finiteness checks that raise instead of propagating NaN, a
max-reduction that reports its argmax with a lowest-index tie rule, and a
counter-based random generator (Philox) so seeded streams are identical on
every platform.
"""

from __future__ import annotations

import contextlib
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, NumericalError

_DTYPE = np.dtype(np.float32)


def get_dtype() -> np.dtype:
    return _DTYPE


def set_dtype(dtype) -> None:
    """Set the default floating precision (float32 or float64)."""
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ConfigError(f"unsupported precision {dtype}")
    _DTYPE = dtype


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the default precision, e.g. to float64 for gradient checks."""
    previous = _DTYPE
    set_dtype(dtype)
    try:
        yield
    finally:
        set_dtype(previous)


def as_tensor(data, dtype=None) -> np.ndarray:
    return np.ascontiguousarray(data, dtype=dtype or _DTYPE)


def check_finite(t: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(t)):
        raise NumericalError(f"non-finite values in {where}")
    return t


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of a (m, k) and b (k, p) arrays."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    out_dtype = np.result_type(a.dtype, b.dtype, np.float32)
    if a.shape[1] == 0:
        return np.zeros((a.shape[0], b.shape[1]), dtype=out_dtype)
    return check_finite(a.astype(out_dtype, copy=False) @ b.astype(out_dtype, copy=False), "matmul")


def reduce(t: np.ndarray, axis: int, kind: str):
    """Reduce ``t`` along ``axis`` with ``kind`` in {"max", "mean", "sum"}.

    For ``kind="max"`` returns ``(values, argmax)``; ties resolve to the lowest
    index. Other kinds return ``(values, None)``. Empty reductions raise.
    """
    t = np.asarray(t)
    if not -t.ndim <= axis < t.ndim:
        raise DimensionError(f"axis {axis} invalid for shape {t.shape}")
    if t.shape[axis] == 0:
        raise DimensionError("reduction over an empty axis")
    if kind == "max":
        idx = np.argmax(t, axis=axis)
        values = np.take_along_axis(t, np.expand_dims(idx, axis), axis=axis)
        return np.squeeze(values, axis=axis), idx
    if kind == "mean":
        return t.mean(axis=axis), None
    if kind == "sum":
        return t.sum(axis=axis), None
    raise ConfigError(f"unknown reduction {kind!r}")


class Rng:
    """Seeded Philox stream. Equal seeds give bit-identical draws."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def uniform(self, lo: float, hi: float, shape: Sequence[int] | int = ()) -> np.ndarray:
        if not lo < hi:
            raise ConfigError(f"uniform range requires lo < hi, got [{lo}, {hi})")
        return self._gen.uniform(lo, hi, size=shape).astype(_DTYPE)

    def normal(self, scale: float, shape: Sequence[int] | int = ()) -> np.ndarray:
        return (self._gen.standard_normal(size=shape) * scale).astype(_DTYPE)

    def integers(self, lo: int, hi: int, size=None):
        """Integers in [lo, hi] inclusive."""
        return self._gen.integers(lo, hi, size=size, endpoint=True)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, options: Sequence):
        return options[int(self._gen.integers(0, len(options)))]

    def spawn(self) -> "Rng":
        """Derive an independent child stream deterministically."""
        return Rng(int(self._gen.integers(0, 2**63 - 1)))

    @property
    def state(self) -> dict:
        """Generator state with arrays as int lists, so it survives JSON."""
        return _to_plain(self._gen.bit_generator.state)

    @state.setter
    def state(self, value: dict) -> None:
        self._gen.bit_generator.state = _to_arrays(value)


def _to_plain(value):
    if isinstance(value, dict):
        return {k: _to_plain(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return [int(v) for v in value]
    return value


def _to_arrays(value):
    if isinstance(value, dict):
        return {k: _to_arrays(v) for k, v in value.items()}
    if isinstance(value, list):
        return np.array(value, dtype=np.uint64)
    return value


def rng_uniform(rng: Rng, lo: float, hi: float, shape) -> np.ndarray:
    return rng.uniform(lo, hi, shape)
