import dataclasses

import numpy as np
import pytest

from hfgpi.config import RunConfig
from hfgpi.crossval import cross_validate, fold_assignments
from hfgpi.errors import ConfigurationError
from hfgpi.model import prepare
from hfgpi.synthetic import CohortSpec, generate

CFG = RunConfig(k_g=4, k_p=2, top_k=4, lr=1e-3, epochs=2, bins=2)


def test_fold_sizes_and_partition():
    folds = fold_assignments(25, 5, seed=0)
    assert [f.size for f in folds] == [5] * 5
    allidx = np.concatenate(folds)
    assert sorted(allidx) == list(range(25))


def test_fold_assignment_determinism():
    a, b = fold_assignments(40, 5, 3), fold_assignments(40, 5, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    c = fold_assignments(40, 5, 4)
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


def test_too_few_patients():
    with pytest.raises(ConfigurationError):
        fold_assignments(3, 5, 0)


@pytest.fixture(scope="module")
def data():
    return prepare(generate(CohortSpec(n_patients=25, seed=1)), CFG)


def test_cross_validate_summary(data):
    res = cross_validate(data, CFG)
    assert len(res.folds) == 5
    vals = [f.cindex for f in res.folds]
    assert res.mean == pytest.approx(sum(vals) / 5, abs=1e-15)
    assert res.std == pytest.approx(np.sqrt(np.mean((np.array(vals) - res.mean) ** 2)), abs=1e-15)
    again = cross_validate(data, CFG)
    assert [f.cindex for f in again.folds] == vals


def test_fold_without_comparable_pairs_is_excluded(data):
    folds = fold_assignments(len(data), 5, CFG.seed)
    censored = np.ones(len(data), bool)
    censored[np.concatenate([folds[1], folds[2]])] = False
    altered = dataclasses.replace(data, censored=censored)
    with pytest.warns(RuntimeWarning, match="no comparable pairs"):
        res = cross_validate(altered, CFG)
    assert [f.cindex is None for f in res.folds] == [True, False, False, True, True]
    assert len(res.valid) == 2
    assert res.mean == pytest.approx(np.mean([f.cindex for f in res.valid]))
