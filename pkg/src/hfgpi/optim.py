"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError


@dataclass
class AdamW:
    lr: float = 1e-4
    weight_decay: float = 1e-5
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        """Return updated copies of ``params``; state advances only on success."""
        if len(params) != len(grads):
            raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != g.shape:
                raise DimensionError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {i}; step aborted")
        if not self.first_moment:
            self.first_moment = [np.zeros_like(p) for p in params]
            self.second_moment = [np.zeros_like(p) for p in params]

        b1, b2 = self.betas
        t = self.step_count + 1
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        new_params, new_m, new_v = [], [], []
        for p, g, m, v in zip(params, grads, self.first_moment, self.second_moment):
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            p = p * (1.0 - self.lr * self.weight_decay)
            p = p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            new_params.append(p)
            new_m.append(m)
            new_v.append(v)
        self.first_moment, self.second_moment = new_m, new_v
        self.step_count = t
        return new_params
