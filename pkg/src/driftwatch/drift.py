"""Per-feature drift tests between the live window and the training profile.

A drift alert is the gate in front of scenario identification: no
Bayesian comparison runs until some feature's distribution has verifiably
moved. Numeric features use a two-sample Kolmogorov-Smirnov test against
the training reservoir; categorical features use a Pearson chi-square
against training proportions. p-values are adjusted with
Benjamini-Hochberg across features to keep the false-alert rate down
without Bonferroni's loss of sensitivity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import special, stats

from .ingest import TrainingProfile, WindowView
from .schema import FeatureKind

DEFAULT_ALPHA = 0.01
DEFAULT_MIN_WINDOW = 100
MIN_EXPECTED_COUNT = 5.0


class SampleTooSmallError(ValueError):
    """A two-sample test needs at least two points per sample."""


class DegenerateTestError(ValueError):
    """The contingency collapses to a single cell; no test possible."""


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    The statistic is the exact supremum of |ECDF_a - ECDF_b|, computed by
    a merge scan over both sorted samples (ties consumed jointly so the
    ECDFs are compared only after all equal values are stepped over).
    The p-value uses the asymptotic Kolmogorov distribution at effective
    sample size n_a * n_b / (n_a + n_b).
    """
    xs = np.sort(np.asarray(a, dtype=float))
    ys = np.sort(np.asarray(b, dtype=float))
    n, m = len(xs), len(ys)
    if n < 2 or m < 2:
        raise SampleTooSmallError(f"need >= 2 points per sample, got {n} and {m}")
    d = 0.0
    i = j = 0
    while i < n or j < m:
        if j >= m or (i < n and xs[i] < ys[j]):
            value = xs[i]
        else:
            value = ys[j]
        while i < n and xs[i] == value:
            i += 1
        while j < m and ys[j] == value:
            j += 1
        diff = abs(i / n - j / m)
        if diff > d:
            d = diff
    n_eff = n * m / (n + m)
    p = float(special.kolmogorov(math.sqrt(n_eff) * d))
    return d, min(max(p, 0.0), 1.0)


def chi_square_categorical(
    counts_window: Mapping[str, int], counts_train: Mapping[str, int]
) -> tuple[float, float]:
    """Pearson chi-square of window counts against training proportions.

    Categories whose expected window count falls below 5 are pooled into
    a single "other" cell before testing; degrees of freedom are the
    pooled cell count minus one. Raises DegenerateTestError when pooling
    leaves a single cell.
    """
    total_train = sum(counts_train.values())
    if total_train <= 0:
        raise ValueError("training counts are all zero")
    n_window = sum(counts_window.values())
    if n_window <= 0:
        raise ValueError("empty window counts")
    categories = sorted(set(counts_window) | set(counts_train))
    if not categories:
        raise ValueError("no categories")

    observed: list[float] = []
    expected: list[float] = []
    pooled_obs = 0.0
    pooled_exp = 0.0
    for cat in categories:
        exp = counts_train.get(cat, 0) / total_train * n_window
        obs = float(counts_window.get(cat, 0))
        if exp < MIN_EXPECTED_COUNT:
            pooled_obs += obs
            pooled_exp += exp
        else:
            observed.append(obs)
            expected.append(exp)
    if pooled_obs > 0 or pooled_exp > 0:
        observed.append(pooled_obs)
        expected.append(pooled_exp)
    if len(observed) < 2:
        raise DegenerateTestError("pooling left a single category")

    statistic = 0.0
    for obs, exp in zip(observed, expected):
        if exp == 0.0:
            if obs > 0:
                return math.inf, 0.0
            continue
        statistic += (obs - exp) ** 2 / exp
    df = len(observed) - 1
    p = float(stats.chi2.sf(statistic, df))
    return statistic, min(max(p, 0.0), 1.0)


def benjamini_hochberg(p_values: Sequence[float]) -> np.ndarray:
    """Step-up FDR-adjusted p-values; never smaller than the raw ones."""
    p = np.asarray(p_values, dtype=float)
    m = len(p)
    if m == 0:
        return p
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    adjusted = np.empty(m)
    adjusted[order] = np.clip(adjusted_sorted, 0.0, 1.0)
    return np.maximum(adjusted, p)


# ---------------------------------------------------------------------------
# Per-window detection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftConfig:
    alpha: float = DEFAULT_ALPHA
    min_window: int = DEFAULT_MIN_WINDOW


@dataclass(frozen=True)
class FeatureTestResult:
    feature: str
    test: str  # "ks" | "chi-square" | "skipped"
    statistic: float
    p_value: float
    p_adjusted: float
    drifted: bool

    def to_json(self) -> dict:
        return {
            "name": self.feature, "test": self.test, "stat": self.statistic,
            "p": self.p_value, "p_adj": self.p_adjusted, "drifted": self.drifted,
        }


@dataclass(frozen=True)
class DriftAlert:
    model: str
    window_id: str
    ts: int
    results: tuple[FeatureTestResult, ...]

    @property
    def drifted_features(self) -> tuple[str, ...]:
        return tuple(r.feature for r in self.results if r.drifted)

    def to_json(self) -> dict:
        return {
            "model": self.model, "window_id": self.window_id, "ts": self.ts,
            "features": [r.to_json() for r in self.results],
        }


class DriftStatus(str, Enum):
    OK = "ok"
    INSUFFICIENT_WINDOW = "insufficient-window"


@dataclass(frozen=True)
class DriftCheck:
    """Outcome of one detection pass: every feature's test, alert if any drifted."""

    status: DriftStatus
    results: tuple[FeatureTestResult, ...] = ()
    alert: Optional[DriftAlert] = None


def detect_drift(
    view: WindowView,
    profile: TrainingProfile,
    config: DriftConfig = DriftConfig(),
    window_id: str = "",
    ts: int = 0,
) -> DriftCheck:
    """Test every monitored feature of the window against the profile.

    Numeric and count features are KS-tested against the training
    reservoir; categorical and binary features are chi-square-tested
    against training counts. An alert is returned iff any
    Benjamini-Hochberg-adjusted p-value falls below alpha.
    """
    if view.fill < config.min_window:
        return DriftCheck(status=DriftStatus.INSUFFICIENT_WINDOW)

    names: list[str] = []
    tests: list[str] = []
    statistics: list[float] = []
    p_values: list[float] = []
    for feature, kind in view.schema.monitored_features.items():
        if kind in (FeatureKind.CATEGORICAL, FeatureKind.BINARY):
            train_stats = profile.categorical.get(feature)
            if train_stats is None:
                continue
            try:
                stat, p = chi_square_categorical(view.category_counts(feature), train_stats.counts)
                test = "chi-square"
            except DegenerateTestError:
                stat, p, test = 0.0, 1.0, "skipped"
        else:
            train_numeric = profile.numeric.get(feature)
            if train_numeric is None or len(train_numeric.reservoir) < 2:
                continue
            stat, p = ks_two_sample(view.column(feature), train_numeric.reservoir)
            test = "ks"
        names.append(feature)
        tests.append(test)
        statistics.append(stat)
        p_values.append(p)

    adjusted = benjamini_hochberg(p_values)
    results = tuple(
        FeatureTestResult(
            feature=name, test=test, statistic=stat, p_value=p,
            p_adjusted=float(adj), drifted=bool(adj < config.alpha and test != "skipped"),
        )
        for name, test, stat, p, adj in zip(names, tests, statistics, p_values, adjusted)
    )
    alert = None
    if any(r.drifted for r in results):
        alert = DriftAlert(model=view.model_ref.name, window_id=window_id, ts=ts, results=results)
    return DriftCheck(status=DriftStatus.OK, results=results, alert=alert)
