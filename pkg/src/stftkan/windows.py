"""Tapering windows applied to each frame before harmonic projection."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

DEFAULT_KAISER_BETA = 8.0


class WindowKind(enum.IntEnum):
    BOXCAR = 0
    HANN = 1
    HAMMING = 2
    BARTLETT = 3
    BLACKMAN = 4
    KAISER = 5

    @classmethod
    def parse(cls, name) -> "WindowKind":
        if isinstance(name, WindowKind):
            return name
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise ConfigError(
                f"unknown window {name!r}; expected one of {', '.join(WINDOW_NAMES)}"
            ) from None

    @property
    def label(self) -> str:
        return self.name.lower()


WINDOW_NAMES = tuple(k.label for k in WindowKind)


@dataclass(frozen=True)
class WindowSpec:
    kind: WindowKind = WindowKind.BOXCAR
    width: int = 1
    beta: float = DEFAULT_KAISER_BETA

    def __post_init__(self):
        object.__setattr__(self, "kind", WindowKind.parse(self.kind))
        if int(self.width) < 1:
            raise ConfigError(f"window width must be >= 1, got {self.width}")
        if self.beta < 0:
            raise ConfigError(f"kaiser beta must be >= 0, got {self.beta}")


def bessel_i0(x: float, rtol: float = 1e-12) -> float:
    """Zeroth-order modified Bessel function by its power series."""
    q = (x / 2.0) ** 2
    term = 1.0
    total = 1.0
    j = 0
    while True:
        j += 1
        term *= q / (j * j)
        total += term
        if term < rtol * total:
            return total


def make_window(spec: WindowSpec) -> np.ndarray:
    """Return the length-``spec.width`` window as float64 values."""
    W = int(spec.width)
    if W == 1:
        return np.ones(1)
    n = np.arange(W, dtype=np.float64)
    r = n / (W - 1)
    kind = spec.kind
    if kind == WindowKind.BOXCAR:
        h = np.ones(W)
    elif kind == WindowKind.HANN:
        h = 0.5 * (1.0 - np.cos(2.0 * np.pi * r))
    elif kind == WindowKind.HAMMING:
        h = 0.54 - 0.46 * np.cos(2.0 * np.pi * r)
    elif kind == WindowKind.BARTLETT:
        h = 1.0 - np.abs(2.0 * r - 1.0)
    elif kind == WindowKind.BLACKMAN:
        h = 0.42 - 0.5 * np.cos(2.0 * np.pi * r) + 0.08 * np.cos(4.0 * np.pi * r)
    elif kind == WindowKind.KAISER:
        denom = bessel_i0(spec.beta)
        arg = np.clip(1.0 - (2.0 * r - 1.0) ** 2, 0.0, None)
        h = np.array([bessel_i0(spec.beta * math.sqrt(v)) for v in arg]) / denom
    else:  # pragma: no cover - enum is closed
        raise ConfigError(f"unknown window {kind!r}")
    # Blackman endpoints land at about -1.4e-17; keep the [0, 1] range exact.
    return np.clip(h, 0.0, 1.0)
