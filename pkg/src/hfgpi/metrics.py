"""Survival metrics: risk scores, concordance, Kaplan-Meier, log-rank."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, UndefinedMetricError


def risk_score(hazards) -> float:
    """Negative area under the discrete survival curve; higher means worse."""
    h = np.asarray(hazards, dtype=np.float64).reshape(-1)
    return -float(np.sum(np.cumprod(1.0 - h)))


def concordance_index(risks, times, censored) -> float:
    """Harrell's C with explicit tie rules.

    A pair is comparable when the shorter time belongs to an uncensored
    patient. Credit is 1 for the higher risk on the earlier death, 0.5 on a
    risk tie. Two uncensored patients with equal times form a comparable
    pair worth 0.5, since neither ordering is correct.
    """
    r = np.asarray(risks, dtype=np.float64).reshape(-1)
    t = np.asarray(times, dtype=np.float64).reshape(-1)
    c = np.asarray(censored, dtype=bool).reshape(-1)
    if not (r.size == t.size == c.size):
        raise InputError(f"length mismatch: {r.size} risks, {t.size} times, {c.size} flags")
    event = ~c
    earlier = (t[:, None] < t[None, :]) & event[:, None]
    same = (t[:, None] == t[None, :]) & event[:, None] & event[None, :]
    np.fill_diagonal(same, False)
    same = np.triu(same)
    comparable = earlier.sum() + same.sum()
    if comparable == 0:
        raise UndefinedMetricError("no comparable pairs; concordance is undefined")
    gt = r[:, None] > r[None, :]
    tie = r[:, None] == r[None, :]
    credit = np.sum(earlier & gt) + 0.5 * np.sum(earlier & tie) + 0.5 * same.sum()
    return float(credit / comparable)


@dataclass(frozen=True)
class KmCurve:
    times: np.ndarray        # distinct event times, ascending
    survival: np.ndarray     # S just after each event time
    at_risk: np.ndarray
    events: np.ndarray

    def step_table(self) -> list[tuple[float, float]]:
        """(time, survival) rows of the right-continuous step function, starting at (0, 1)."""
        return [(0.0, 1.0)] + [(float(a), float(b)) for a, b in zip(self.times, self.survival)]


def kaplan_meier(times, censored) -> KmCurve:
    t = np.asarray(times, dtype=np.float64).reshape(-1)
    c = np.asarray(censored, dtype=bool).reshape(-1)
    if t.size == 0:
        raise InputError("Kaplan-Meier needs at least one subject")
    event_times = np.unique(t[~c])
    surv, at_risk, events = [], [], []
    s = 1.0
    for u in event_times:
        n = int(np.sum(t >= u))
        d = int(np.sum((t == u) & ~c))
        s *= 1.0 - d / n
        surv.append(s)
        at_risk.append(n)
        events.append(d)
    return KmCurve(event_times, np.array(surv), np.array(at_risk, dtype=int), np.array(events, dtype=int))


def chi2_sf_1dof(x: float) -> float:
    """Upper tail of chi-square with one degree of freedom."""
    if x <= 0:
        return 1.0
    return math.erfc(math.sqrt(x / 2.0))


@dataclass(frozen=True)
class LogRankResult:
    statistic: float
    p_value: float
    observed: tuple[float, float]
    expected: tuple[float, float]


def log_rank(times_a, censored_a, times_b, censored_b) -> LogRankResult:
    ta = np.asarray(times_a, dtype=np.float64).reshape(-1)
    tb = np.asarray(times_b, dtype=np.float64).reshape(-1)
    ca = np.asarray(censored_a, dtype=bool).reshape(-1)
    cb = np.asarray(censored_b, dtype=bool).reshape(-1)
    if ta.size == 0 or tb.size == 0:
        raise InputError("log-rank needs two non-empty groups")
    all_t = np.concatenate([ta, tb])
    all_c = np.concatenate([ca, cb])
    o_a = e_a = var = 0.0
    o_total = 0.0
    for u in np.unique(all_t[~all_c]):
        n_a = np.sum(ta >= u)
        n = np.sum(all_t >= u)
        d_a = np.sum((ta == u) & ~ca)
        d = np.sum((all_t == u) & ~all_c)
        o_a += d_a
        o_total += d
        e_a += d * n_a / n
        if n > 1:
            var += d * (n_a / n) * (1.0 - n_a / n) * (n - d) / (n - 1)
    observed = (float(o_a), float(o_total - o_a))
    expected = (float(e_a), float(o_total - e_a))
    if o_total == 0 or var <= 0:
        return LogRankResult(0.0, 1.0, observed, expected)
    stat = float((o_a - e_a) ** 2 / var)
    return LogRankResult(stat, chi2_sf_1dof(stat), observed, expected)


def stratify_median(risks) -> tuple[np.ndarray, np.ndarray]:
    """Split into (high, low) index arrays at the median risk; ties go low."""
    r = np.asarray(risks, dtype=np.float64).reshape(-1)
    if r.size < 2:
        raise InputError("stratification needs at least two patients")
    med = np.median(r)
    return np.flatnonzero(r > med), np.flatnonzero(r <= med)
