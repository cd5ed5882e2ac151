"""Protein-guided hypergraph learning over image patches.

Each protein is a hyperedge joining its ``k`` most similar patches. Patch
features are propagated over the hypergraph, pooled back per hyperedge and
added to the regulated protein tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, InputError


@dataclass(frozen=True)
class Incidence:
    matrix: np.ndarray  # patches x proteins, binary
    k: int

    @property
    def node_degree(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    @property
    def edge_degree(self) -> np.ndarray:
        return self.matrix.sum(axis=0)

    def members(self, protein: int) -> np.ndarray:
        return np.flatnonzero(self.matrix[:, protein])


def protein_patch_similarity(y: np.ndarray, xp_reg: np.ndarray) -> np.ndarray:
    """Cosine similarity, patches x proteins."""
    y = np.asarray(y, dtype=np.float64)
    xp = np.asarray(xp_reg, dtype=np.float64)
    if y.shape[1] != xp.shape[1]:
        raise DimensionError(f"patch width {y.shape[1]} != protein token width {xp.shape[1]}")
    ny = np.linalg.norm(y, axis=1)
    nx = np.linalg.norm(xp, axis=1)
    if np.any(ny == 0):
        raise InputError(f"patch row {int(np.flatnonzero(ny == 0)[0])} has zero norm")
    if np.any(nx == 0):
        raise InputError(f"protein token row {int(np.flatnonzero(nx == 0)[0])} has zero norm")
    return np.clip((y / ny[:, None]) @ (xp / nx[:, None]).T, -1.0, 1.0)


def build_incidence(s: np.ndarray, k: int) -> Incidence:
    """Mark the top-``k`` patches of every protein column; ties go to the lower index."""
    if k < 1:
        raise InputError(f"top-k must be >= 1, got {k}")
    s = np.asarray(s, dtype=np.float64)
    m, n_p = s.shape
    h = np.zeros((m, n_p))
    rows = np.arange(m)
    kk = min(k, m)
    for i in range(n_p):
        order = np.lexsort((rows, -s[:, i]))
        h[order[:kk], i] = 1.0
    return Incidence(h, k)


def hypergraph_conv(y, incidence: Incidence, edge_weight, w_p: ad.Tensor,
                    activation=ad.relu) -> ad.Tensor:
    """``act(Dv^-1/2 H We De^-1 H^T Dv^-1/2 Y Wp)``.

    ``edge_weight`` is a ``1 x N_p`` row holding the diagonal of ``We``.
    Unselected patches have zero degree; their inverse-sqrt degree is taken
    as 0, so their rows come out as ``act(0)``.
    """
    y = ad.constant(y)
    edge_weight = ad.constant(edge_weight)
    h = incidence.matrix
    if y.shape[0] != h.shape[0]:
        raise DimensionError(f"{y.shape[0]} patches but incidence has {h.shape[0]} rows")
    if edge_weight.shape != (1, h.shape[1]):
        raise DimensionError(f"edge weight shape {edge_weight.shape}, expected (1, {h.shape[1]})")
    dv = incidence.node_degree
    inv_sqrt_dv = np.zeros_like(dv)
    inv_sqrt_dv[dv > 0] = 1.0 / np.sqrt(dv[dv > 0])
    left = inv_sqrt_dv[:, None] * h                      # Dv^-1/2 H
    de = incidence.edge_degree
    weighted = ad.mul(left * (1.0 / de)[None, :], edge_weight)  # Dv^-1/2 H De^-1 We
    propagated = weighted @ ad.matmul(left.T, y @ w_p)
    return activation(propagated)


def aggregate_hyperedges(incidence: Incidence, z) -> ad.Tensor:
    """Mean of each hyperedge's member rows of ``z``."""
    h = incidence.matrix
    return ad.matmul(h.T / incidence.edge_degree[:, None], z)


def fuse(e, xp_reg) -> ad.Tensor:
    e, xp_reg = ad.constant(e), ad.constant(xp_reg)
    if e.shape != xp_reg.shape:
        raise DimensionError(f"fuse: {e.shape} vs {xp_reg.shape}")
    return e + xp_reg
