import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hfgpi.errors import UndefinedMetricError
from hfgpi.metrics import (chi2_sf_1dof, concordance_index, kaplan_meier, log_rank, risk_score,
                           stratify_median)

import oracles


def test_risk_score_examples():
    assert risk_score([0.5, 0.5]) == -0.75
    assert risk_score([0.0, 0.0, 0.0]) == -3.0
    base = np.array([0.2, 0.3, 0.4])
    for i in range(3):
        bumped = base.copy()
        bumped[i] += 0.1
        assert risk_score(bumped) > risk_score(base)


def test_cindex_examples():
    assert concordance_index([3, 2, 1], [1, 2, 3], [0, 0, 0]) == 1.0
    assert concordance_index([1, 1, 1], [1, 2, 3], [0, 0, 0]) == 0.5
    assert concordance_index([3, 2, 1], [1, 2, 3], [0, 1, 0]) == 1.0
    assert concordance_index([1, 2, 3], [1, 2, 3], [0, 0, 0]) == 0.0


def test_cindex_equal_event_times_score_half():
    assert concordance_index([2, 1], [5, 5], [0, 0]) == 0.5


def test_cindex_undefined():
    with pytest.raises(UndefinedMetricError):
        concordance_index([1, 2], [1, 2], [1, 1])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_cindex_matches_pair_loop(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 25))
    times = rng.integers(1, 8, size=n).astype(float)
    cens = rng.uniform(size=n) < 0.4
    risks = rng.integers(0, 5, size=n).astype(float)
    if not np.any(~cens):
        cens[0] = False
    try:
        expected = oracles.cindex_pairs(risks, times, cens)
    except ZeroDivisionError:
        with pytest.raises(UndefinedMetricError):
            concordance_index(risks, times, cens)
        return
    assert concordance_index(risks, times, cens) == pytest.approx(expected, abs=1e-12)


def test_km_textbook_example():
    km = kaplan_meier([1, 2, 3, 4], [0, 0, 0, 0])
    np.testing.assert_allclose(km.survival, [0.75, 0.5, 0.25, 0.0], atol=1e-12)
    assert km.step_table()[0] == (0.0, 1.0)


def test_km_censoring_reduces_at_risk_without_step():
    km = kaplan_meier([1, 2, 3, 4], [0, 1, 0, 0])
    np.testing.assert_array_equal(km.times, [1, 3, 4])
    np.testing.assert_array_equal(km.at_risk, [4, 2, 1])
    np.testing.assert_allclose(km.survival, [0.75, 0.375, 0.0], atol=1e-12)


def test_km_all_censored_is_flat():
    km = kaplan_meier([1, 2], [1, 1])
    assert km.step_table() == [(0.0, 1.0)]


def test_km_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.api")
    rng = np.random.default_rng(5)
    t = rng.integers(1, 20, size=60).astype(float)
    c = rng.uniform(size=60) < 0.3
    ref = sm.SurvfuncRight(t, (~c).astype(int))
    km = kaplan_meier(t, c)
    np.testing.assert_allclose(km.times, ref.surv_times)
    np.testing.assert_allclose(km.survival, ref.surv_prob, atol=1e-12)


def test_log_rank_hand_table():
    # event times 1..4; O_A = 2, E_A = 1/2 + 1/3 + 1/2, Var = 1/4 + 2/9 + 1/4
    res = log_rank([1, 3], [0, 0], [2, 4], [0, 0])
    assert res.observed == (2.0, 2.0)
    assert res.expected[0] == pytest.approx(4 / 3, abs=1e-12)
    assert res.statistic == pytest.approx(8 / 13, abs=1e-8)
    assert res.p_value == pytest.approx(math.erfc(math.sqrt(4 / 13)), abs=1e-6)


def test_log_rank_symmetry_and_identity():
    a, ca = [1, 4, 6, 7, 9], [0, 1, 0, 0, 1]
    b, cb = [2, 3, 5, 8, 10], [0, 0, 1, 0, 0]
    assert log_rank(a, ca, b, cb).statistic == pytest.approx(log_rank(b, cb, a, ca).statistic, abs=1e-12)
    same = log_rank(a, ca, a, ca)
    assert same.statistic == pytest.approx(0.0, abs=1e-12)
    assert same.p_value == pytest.approx(1.0, abs=1e-6)


def test_log_rank_no_events():
    res = log_rank([1, 2], [1, 1], [3], [1])
    assert (res.statistic, res.p_value) == (0.0, 1.0)


def test_log_rank_matches_statsmodels():
    duration = pytest.importorskip("statsmodels.duration.survfunc")
    rng = np.random.default_rng(6)
    t = rng.integers(1, 15, size=80).astype(float)
    c = rng.uniform(size=80) < 0.25
    g = rng.integers(0, 2, size=80)
    stat, p = duration.survdiff(t, (~c).astype(int), g)
    res = log_rank(t[g == 0], c[g == 0], t[g == 1], c[g == 1])
    assert res.statistic == pytest.approx(stat, abs=1e-8)
    assert res.p_value == pytest.approx(p, abs=1e-6)


def test_chi2_sf_matches_scipy():
    stats = pytest.importorskip("scipy.stats")
    for x in (0.0, 0.1, 1.0, 3.84, 10.0, 40.0):
        assert chi2_sf_1dof(x) == pytest.approx(stats.chi2.sf(x, 1), abs=1e-12)


def test_stratify_median():
    high, low = stratify_median([1, 2, 3, 4])
    assert list(high) == [2, 3] and list(low) == [0, 1]
    high, low = stratify_median([5, 5, 5])
    assert high.size == 0 and low.size == 3
    r = np.random.default_rng(7).permutation(11).astype(float)
    high, low = stratify_median(r)
    assert abs(high.size - low.size) <= 1
