"""k-NN graphs, EdgeConv feature assembly, edge max-aggregation and global pooling.

Functions accept a single cloud ``(n, d)`` or a batch ``(B, n, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .ndcore import reduce


@dataclass(frozen=True)
class KnnGraph:
    n: int
    k: int
    neighbor_idx: np.ndarray  # (n, k) or (B, n, k)


def _pairwise_sq_dist(points: np.ndarray) -> np.ndarray:
    p = points.astype(np.float64)
    diff = p[:, None, :] - p[None, :, :]
    return np.einsum("ijd,ijd->ij", diff, diff)


def knn(points: np.ndarray, k: int) -> KnnGraph:
    """Exact Euclidean k nearest neighbours, self excluded, ties to the lowest index."""
    points = np.asarray(points)
    if points.ndim == 3:
        graphs = [knn(p, k) for p in points]
        return KnnGraph(points.shape[1], k, np.stack([g.neighbor_idx for g in graphs]))
    if points.ndim != 2:
        raise DimensionError(f"points must be (n, d), got {points.shape}")
    n = points.shape[0]
    if not 1 <= k < n:
        raise ConfigError(f"k-NN needs n > k >= 1, got n={n}, k={k}")
    dist = _pairwise_sq_dist(points)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")
    return KnnGraph(n, k, order[:, :k].astype(np.int64))


def edge_features(x: np.ndarray, graph: KnnGraph | np.ndarray) -> np.ndarray:
    """Edge features ``concat(x_i, x_j - x_i)`` with shape ``(..., n, k, 2d)``."""
    idx = graph.neighbor_idx if isinstance(graph, KnnGraph) else np.asarray(graph)
    if x.ndim == 2:
        return edge_features(x[None], idx[None] if idx.ndim == 2 else idx)[0]
    B, n, d = x.shape
    if idx.shape[:2] != (B, n):
        raise DimensionError(f"graph shape {idx.shape} does not match features {x.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError("neighbour index out of bounds")
    k = idx.shape[2]
    neighbors = np.take_along_axis(x, idx.reshape(B, n * k, 1), axis=1).reshape(B, n, k, d)
    center = np.broadcast_to(x[:, :, None, :], (B, n, k, d))
    return np.concatenate([center, neighbors - center], axis=-1)


def edge_features_backward(grad: np.ndarray, graph: KnnGraph | np.ndarray) -> np.ndarray:
    """Gradient of :func:`edge_features` with respect to ``x``."""
    idx = graph.neighbor_idx if isinstance(graph, KnnGraph) else np.asarray(graph)
    if grad.ndim == 3:
        return edge_features_backward(grad[None], idx[None] if idx.ndim == 2 else idx)[0]
    B, n, k, two_d = grad.shape
    d = two_d // 2
    g_center, g_rel = grad[..., :d], grad[..., d:]
    gx = g_center.sum(axis=2) - g_rel.sum(axis=2)
    flat = (idx + (np.arange(B) * n)[:, None, None]).reshape(-1)
    scattered = np.zeros((B * n, d), dtype=grad.dtype)
    np.add.at(scattered, flat, g_rel.reshape(-1, d))
    return gx + scattered.reshape(B, n, d)


def edge_aggregate_max(per_edge: np.ndarray):
    """Channelwise max over the edge axis (second to last). Returns ``(values, argmax)``."""
    if per_edge.shape[-2] < 1:
        raise DimensionError("edge aggregation needs k >= 1")
    return reduce(per_edge, axis=-2, kind="max")


def edge_aggregate_max_backward(grad: np.ndarray, argmax: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros(grad.shape[:-1] + (k, grad.shape[-1]), dtype=grad.dtype)
    np.put_along_axis(out, argmax[..., None, :], grad[..., None, :], axis=-2)
    return out


def global_pool(features: np.ndarray):
    """``concat(max over points, mean over points)``. Returns ``(pooled, argmax)``."""
    if features.shape[-2] < 1:
        raise DimensionError("global pooling needs at least one point")
    mx, argmax = reduce(features, axis=-2, kind="max")
    mean, _ = reduce(features, axis=-2, kind="mean")
    return np.concatenate([mx, mean], axis=-1), argmax


def global_pool_backward(grad: np.ndarray, argmax: np.ndarray, n: int) -> np.ndarray:
    c = grad.shape[-1] // 2
    g_max, g_mean = grad[..., :c], grad[..., c:]
    out = np.broadcast_to(g_mean[..., None, :] / n, grad.shape[:-1] + (n, c)).copy()
    route = np.zeros_like(out)
    np.put_along_axis(route, argmax[..., None, :], g_max[..., None, :], axis=-2)
    return out + route
