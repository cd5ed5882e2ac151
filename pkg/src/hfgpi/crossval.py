"""k-fold cross-validation of the full training pipeline."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, rng_stream
from .errors import ConfigurationError, UndefinedMetricError
from .model import PreparedCohort
from .training import TrainState, evaluate_cindex, train

log = logging.getLogger(__name__)


@dataclass
class FoldResult:
    fold: int
    train_indices: np.ndarray
    test_indices: np.ndarray
    cindex: float | None        # None marks an invalid fold
    state: TrainState | None = None


@dataclass
class CrossValResult:
    folds: list[FoldResult]

    @property
    def valid(self) -> list[FoldResult]:
        return [f for f in self.folds if f.cindex is not None]

    @property
    def mean(self) -> float:
        return float(np.mean([f.cindex for f in self.valid]))

    @property
    def std(self) -> float:
        # population std across folds
        return float(np.std([f.cindex for f in self.valid]))


def fold_assignments(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle, then contiguous near-equal chunks."""
    if n < folds:
        raise ConfigurationError(f"cohort of {n} cannot be split into {folds} folds")
    order = rng_stream(seed, "folds").permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(order, folds)]


def cross_validate(data: PreparedCohort, config: RunConfig, folds: int | None = None,
                   keep_states: bool = False) -> CrossValResult:
    """Train on all-but-one fold and score C-index on the held-out fold.

    Each fold is scored with its final-epoch parameters; the held-out fold
    is never used for model selection.
    """
    folds = folds or config.folds
    chunks = fold_assignments(len(data), folds, config.seed)
    results = []
    for i, test in enumerate(chunks):
        train_idx = np.sort(np.concatenate([c for j, c in enumerate(chunks) if j != i]))
        state = train(data, config, train_idx, stream=(i,))
        try:
            c = evaluate_cindex(state.params, data, config, test)
        except UndefinedMetricError:
            warnings.warn(f"fold {i + 1} has no comparable pairs; excluded", RuntimeWarning)
            c = None
        log.info("fold %d/%d C-index=%s", i + 1, folds, c)
        results.append(FoldResult(i, train_idx, test, c, state if keep_states else None))
    return CrossValResult(results)
