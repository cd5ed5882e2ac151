"""Run configuration; defaults are the reference training hyperparameters."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigurationError

MODALITIES = ("genomic", "proteomic", "pathology")


@dataclass(frozen=True)
class RunConfig:
    n_g: int = 2000
    k_g: int = 100
    k_p: int = 20
    top_k: int = 32
    lam: float = 0.3
    lr: float = 1e-4
    weight_decay: float = 1e-5
    epochs: int = 20
    accumulation: int = 16
    bins: int = 4
    seed: int = 0
    layers: int = 1
    heads: int = 4
    ff_mult: int = 2
    pool_dim: int = 0  # 0 means "same as token width"
    gcn_layers: int = 1
    zscore_proteins: bool = True
    modalities: tuple[str, ...] = MODALITIES
    hypergraph_activation: str = "relu"
    folds: int = 5

    def __post_init__(self):
        object.__setattr__(self, "modalities", tuple(self.modalities))
        self.validate()

    def validate(self) -> None:
        positive = ("n_g", "k_g", "k_p", "top_k", "epochs", "accumulation", "layers", "heads",
                    "ff_mult", "folds")
        for name in positive:
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.bins < 2:
            raise ConfigurationError(f"bins must be >= 2, got {self.bins}")
        if self.gcn_layers < 0 or self.pool_dim < 0:
            raise ConfigurationError("gcn_layers and pool_dim must be non-negative")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigurationError(f"lambda must be a finite value >= 0, got {self.lam}")
        if not (self.lr > 0 and np.isfinite(self.lr)):
            raise ConfigurationError(f"learning rate must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")
        unknown = set(self.modalities) - set(MODALITIES)
        if unknown or not self.modalities:
            raise ConfigurationError(f"modalities must be a non-empty subset of {MODALITIES}")
        if self.hypergraph_activation not in ("relu", "identity"):
            raise ConfigurationError("hypergraph_activation must be 'relu' or 'identity'")

    def replace(self, **changes) -> "RunConfig":
        data = asdict(self)
        data.update(changes)
        return RunConfig(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["modalities"] = list(self.modalities)
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def echo_lines(self) -> list[str]:
        return [f"config.{k}={v}" for k, v in sorted(self.to_dict().items())]


def rng_stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for a named purpose ("init", "shuffle", "folds", ...)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode()), *extra]))
