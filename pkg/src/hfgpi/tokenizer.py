"""Molecular tokens: identity embeddings scaled by per-patient expression."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AlignmentError, InputError


@dataclass(frozen=True)
class IdentityTable:
    names: tuple[str, ...]
    embeddings: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] != len(self.names):
            raise InputError(f"{len(self.names)} names but embedding shape {emb.shape}")
        if len(set(self.names)) != len(self.names):
            raise InputError("identity names are not unique")
        if not np.all(np.isfinite(emb)):
            raise InputError("identity embeddings contain NaN or Inf")
        zero = np.flatnonzero(np.linalg.norm(emb, axis=1) == 0.0)
        if zero.size:
            raise InputError(f"identity row {self.names[zero[0]]!r} has zero norm")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "embeddings", emb)

    @property
    def width(self) -> int:
        return self.embeddings.shape[1]

    def __len__(self) -> int:
        return len(self.names)

    def subset(self, indices: Sequence[int]) -> "IdentityTable":
        idx = list(indices)
        return IdentityTable(tuple(self.names[i] for i in idx), self.embeddings[idx])


@dataclass(frozen=True)
class ExpressionProfile:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if vals.size != len(self.names):
            raise InputError(f"{len(self.names)} names but {vals.size} values")
        if not np.all(np.isfinite(vals)):
            raise InputError("expression values contain NaN or Inf")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class MolecularTokens:
    tokens: np.ndarray
    modality: str  # "gene" | "protein"


def tokenize(table: IdentityTable, profile: ExpressionProfile, modality: str = "gene") -> MolecularTokens:
    if profile.names != table.names:
        for i, (a, b) in enumerate(zip(profile.names, table.names)):
            if a != b:
                raise AlignmentError(f"position {i}: profile has {a!r}, identity table has {b!r}")
        raise AlignmentError(f"profile has {len(profile.names)} molecules, table has {len(table.names)}")
    return MolecularTokens(profile.values[:, None] * table.embeddings, modality)


def normalize_expression(raw: np.ndarray, *, log_transform: bool = True,
                         mean: np.ndarray | None = None, std: np.ndarray | None = None) -> np.ndarray:
    """log2(x+1) (optional) followed by per-feature z-scoring.

    ``raw`` is samples x features. Statistics default to the population
    mean/std of ``raw`` itself; features with zero spread map to 0.
    """
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if log_transform:
        if np.any(x < 0):
            r, c = np.argwhere(x < 0)[0]
            raise InputError(f"negative expression count at sample {r}, feature {c}")
        x = np.log2(x + 1.0)
    mu = x.mean(axis=0) if mean is None else np.asarray(mean, dtype=np.float64)
    sd = x.std(axis=0) if std is None else np.asarray(std, dtype=np.float64)
    out = np.zeros_like(x)
    ok = sd > 1e-12 * np.maximum(1.0, np.abs(mu))  # rounding noise on constant features
    out[:, ok] = (x[:, ok] - mu[ok]) / sd[ok]
    return out


def select_hvg(expression: np.ndarray, n_g: int, *, log_transform: bool = True) -> np.ndarray:
    """Indices of the ``n_g`` highest-variance genes, most variable first.

    Ties resolve to the lower original index.
    """
    x = np.asarray(expression, dtype=np.float64)
    if x.ndim != 2 or x.size == 0:
        raise InputError("expression matrix is empty")
    if n_g < 1:
        raise InputError(f"n_g must be >= 1, got {n_g}")
    if log_transform:
        if np.any(x < 0):
            raise InputError("negative expression count")
        x = np.log2(x + 1.0)
    var = x.var(axis=0)
    order = np.lexsort((np.arange(var.size), -var))
    return order[: min(n_g, var.size)]
