"""Forecast scoring (WIS, coverage), cross-location correlation diagnostics,
and the one-at-a-time ablation harness.

WIS is computed from the interval-score form over the 11 central intervals
plus the median, which equals the mean of the 23 quantile (pinball) scores
exactly and yields the dispersion / underprediction / overprediction split.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import pandas as pd

from .errors import DataError
from .forecast import QUANTILE_LEVELS, QuantileForecast
from .grids import SeasonFrame

ABLATION_GROUPS = ("schedule", "architecture", "dataset", "transform",
                   "enrichment", "inpainting")


@dataclass(frozen=True)
class ScoreRecord:
    location: str
    horizon: int
    reference_date: str
    wis: float
    dispersion: float
    underprediction: float
    overprediction: float
    covered_50: bool
    covered_90: bool
    abs_error_median: float


def wis(quantiles: np.ndarray, y: float, levels=QUANTILE_LEVELS
        ) -> tuple[float, float, float, float]:
    """Weighted interval score of a 23-level quantile set against an observation.

    Returns (wis, dispersion, underprediction, overprediction); the three
    components sum to the total.
    """
    q = np.asarray(quantiles, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    if q.shape != levels.shape:
        raise ValueError(f"expected {levels.size} quantiles, got {q.shape}")
    if np.any(np.diff(q) < 0):
        raise DataError("quantiles are not monotone")
    if not np.isfinite(y):
        raise ValueError("observation must be finite")
    n_int = (levels.size - 1) // 2  # central intervals, plus the median
    weight = 1.0 / (n_int + 0.5)
    median = q[n_int]
    dispersion = 0.0
    under = 0.5 * max(y - median, 0.0)
    over = 0.5 * max(median - y, 0.0)
    for k in range(n_int):
        alpha = 2.0 * levels[k]
        lo, hi = q[k], q[-(k + 1)]
        dispersion += (alpha / 2.0) * (hi - lo)
        under += max(y - hi, 0.0)
        over += max(lo - y, 0.0)
    return (weight * (dispersion + under + over), weight * dispersion,
            weight * under, weight * over)


def coverage(quantiles: np.ndarray, y: float, level: int,
             levels=QUANTILE_LEVELS) -> bool:
    """Whether y falls inside the central `level`% prediction interval."""
    levels = list(levels)
    lo_tau = round((1 - level / 100) / 2, 10)
    hi_tau = round((1 + level / 100) / 2, 10)
    try:
        lo = quantiles[levels.index(lo_tau)]
        hi = quantiles[levels.index(hi_tau)]
    except ValueError:
        raise ValueError(f"{level}% interval bounds not among the quantile levels")
    return bool(lo <= y <= hi)


def score_forecast(qf: QuantileForecast, truth: SeasonFrame, reference_week: int,
                   reference_date: str = "") -> list[ScoreRecord]:
    """Score every (location, horizon) cell of a forecast against a truth frame."""
    records = []
    median_idx = len(qf.levels) // 2
    for li, loc in enumerate(qf.locations):
        col = truth.location_codes.index(loc)
        for hi, h in enumerate(qf.horizons):
            y = float(truth.values[reference_week + h - 2, col])
            q = qf.values[li, hi]
            total, disp, under, over = wis(q, y, qf.levels)
            records.append(ScoreRecord(
                location=loc, horizon=h, reference_date=reference_date,
                wis=total, dispersion=disp, underprediction=under,
                overprediction=over,
                covered_50=coverage(q, y, 50, qf.levels),
                covered_90=coverage(q, y, 90, qf.levels),
                abs_error_median=abs(y - float(q[median_idx])),
            ))
    return records


def scores_to_frame(records: list[ScoreRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.__dict__ for r in records])


# ---------------------------------------------------------------------------
# Cross-location correlation with a time-permuted null


def _mean_pairwise_r(values: np.ndarray) -> tuple[float, int]:
    """Mean Pearson correlation over location pairs; constant series dropped."""
    n_weeks, n_loc = values.shape
    std = values.std(axis=0)
    rs = []
    dropped = 0
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(values.T)  # NaN rows from constant series are skipped below
    for i, j in combinations(range(n_loc), 2):
        if std[i] == 0 or std[j] == 0:
            dropped += 1
            continue
        rs.append(corr[i, j])
    if not rs:
        raise DataError("all location pairs have constant series")
    return float(np.mean(rs)), dropped


def cross_state_correlation(trajectory_set: list[np.ndarray], n_permutations: int = 200,
                            seed: int = 0) -> dict:
    """Mean pairwise weekly correlation across locations, with a permuted null.

    The null permutes each location's weekly series independently and
    recomputes the statistic, n_permutations times.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in trajectory_set]
    if not arrays:
        raise DataError("trajectory set is empty")
    if arrays[0].shape[1] < 2 or arrays[0].shape[0] < 3:
        raise DataError("need at least 2 locations and 3 weeks")
    rng = np.random.default_rng(seed)
    means, dropped = zip(*(_mean_pairwise_r(a) for a in arrays))
    null = np.empty(n_permutations)
    for b in range(n_permutations):
        perm_means = []
        for a in arrays:
            shuffled = np.column_stack([rng.permutation(a[:, j]) for j in range(a.shape[1])])
            perm_means.append(_mean_pairwise_r(shuffled)[0])
        null[b] = np.mean(perm_means)
    return {
        "mean_pairwise_r": float(np.mean(means)),
        "null_distribution": null,
        "null_mean": float(null.mean()),
        "null_q975": float(np.quantile(null, 0.975)),
        "dropped_pairs": int(sum(dropped)),
    }


# ---------------------------------------------------------------------------
# Ablation harness


@dataclass(frozen=True)
class AblationVariant:
    """A configuration differing from the baseline in exactly one field."""

    name: str
    group: str
    override: dict
    scores: pd.DataFrame  # per-cell scores of this variant's stored forecasts

    def __post_init__(self):
        if self.group not in ABLATION_GROUPS:
            raise ValueError(f"group must be one of {ABLATION_GROUPS}")
        if len(self.override) != 1:
            raise ValueError(
                f"variant {self.name!r} overrides {len(self.override)} fields; expected 1"
            )


def run_ablation(baseline_scores: pd.DataFrame, variants: list[AblationVariant]
                 ) -> pd.DataFrame:
    """Mean paired percent change in absolute WIS per variant vs. the baseline.

    Scores are paired on (location, horizon, reference_date); positive delta
    means the variant forecasts better (lower WIS) than the baseline.
    """
    keys = ["location", "horizon", "reference_date"]
    base = baseline_scores.set_index(keys)["wis"].sort_index()
    rows = [{"name": "baseline", "group": "baseline", "delta_wis_pct": 0.0,
             "total_wis": float(base.sum()), "mean_wis": float(base.mean())}]
    for v in variants:
        var = v.scores.set_index(keys)["wis"].sort_index()
        if not base.index.equals(var.index):
            raise DataError(f"variant {v.name!r} scores are not paired with the baseline")
        base_total = float(base.sum())
        var_total = float(var.sum())
        delta = 100.0 * (base_total - var_total) / base_total if base_total > 0 else 0.0
        rows.append({"name": v.name, "group": v.group, "delta_wis_pct": delta,
                     "total_wis": var_total, "mean_wis": float(var.mean())})
    return pd.DataFrame(rows)


def paired_sign_test(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sided sign-test p-value for paired samples (ties dropped)."""
    from scipy.stats import binomtest

    diff = np.asarray(a) - np.asarray(b)
    n_pos = int((diff > 0).sum())
    n = int((diff != 0).sum())
    if n == 0:
        return 1.0
    return float(binomtest(n_pos, n, 0.5).pvalue)
