"""kNN cosine graphs over identity embeddings and graph convolution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, DimensionError, InputError


@dataclass(frozen=True)
class SparseAdjacency:
    matrix: np.ndarray  # binary, symmetric, zero diagonal
    k: int

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def cosine_matrix(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise InputError(f"row {int(zero[0])} has zero norm; cosine similarity undefined")
    u = x / norms[:, None]
    return u @ u.T


def knn_graph(embeddings: np.ndarray, k: int) -> SparseAdjacency:
    """Each node links to its ``k`` most cosine-similar peers, then OR-symmetrise."""
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if k < 1 or k >= n:
        raise ConfigurationError(f"k must satisfy 1 <= k < N, got k={k}, N={n}")
    sim = cosine_matrix(x)
    a = np.zeros((n, n))
    idx = np.arange(n)
    for i in range(n):
        s = np.delete(sim[i], i)
        others = np.delete(idx, i)
        order = np.lexsort((others, -s))
        a[i, others[order[:k]]] = 1.0
    a = np.maximum(a, a.T)
    return SparseAdjacency(a, k)


def cost_matrix(adjacency: SparseAdjacency) -> np.ndarray:
    return 1.0 - adjacency.matrix


def normalized_propagation(adjacency: SparseAdjacency | np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the degree of A + I."""
    a = adjacency.matrix if isinstance(adjacency, SparseAdjacency) else np.asarray(adjacency, float)
    a_hat = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return d[:, None] * a_hat * d[None, :]


def gcn_forward(x, graph: SparseAdjacency | np.ndarray, weight: ad.Tensor) -> ad.Tensor:
    """One graph-convolution layer, ReLU(P X W).

    ``graph`` is either an adjacency (normalised here) or an already
    normalised propagation matrix, which lets callers reuse it per patient.
    """
    x = ad.constant(x)
    propagation = normalized_propagation(graph) if isinstance(graph, SparseAdjacency) else graph
    if x.shape[0] != propagation.shape[0]:
        raise DimensionError(f"gcn: {x.shape[0]} tokens but a {propagation.shape[0]}-node graph")
    return ad.relu(ad.matmul(ad.matmul(propagation, x), weight))
