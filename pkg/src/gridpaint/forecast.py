"""From a partially observed season to hub-format quantile forecasts.

Horizon h reads trajectory week reference_week + h - 1, i.e. horizon 1 is
the first hidden week. Quantiles use the inverse-ECDF estimator with
midpoint interpolation (numpy's "averaged_inverted_cdf"), which is monotone
by construction.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError
from .grids import (IntensityTransform, SeasonFrame, decode_grid, encode_frame,
                    past_only_mask)
from .inpaint import InpaintConfig, inpaint_sample
from .schedules import NoiseSchedule
from .unet import DenoiserModel

QUANTILE_LEVELS = (
    0.01, 0.025, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50,
    0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 0.975, 0.99,
)


@dataclass(frozen=True)
class ForecastJob:
    reference_week: int
    horizons: tuple[int, ...] = (1, 2, 3, 4)
    locations: tuple[str, ...] = ()
    n_trajectories: int = 512
    inpaint: InpaintConfig = field(default_factory=InpaintConfig)

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(self.horizons))
        object.__setattr__(self, "locations", tuple(self.locations))
        if any(h < 1 for h in self.horizons):
            raise ValueError("horizons must be positive")


@dataclass
class QuantileForecast:
    """Per (location, horizon) monotone values at the 23 hub quantile levels."""

    locations: tuple[str, ...]
    horizons: tuple[int, ...]
    values: np.ndarray  # (n_locations, n_horizons, 23)
    levels: tuple[float, ...] = QUANTILE_LEVELS

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = (len(self.locations), len(self.horizons), len(self.levels))
        if self.values.shape != expected:
            raise DataError(f"quantile array shape {self.values.shape} != {expected}")
        if np.any(np.diff(self.values, axis=-1) < 0):
            raise DataError("quantile values must be nondecreasing in level")
        if np.any(self.values < 0):
            raise DataError("quantile values must be nonnegative")

    def cell(self, location: str, horizon: int) -> np.ndarray:
        return self.values[self.locations.index(location), self.horizons.index(horizon)]


def run_forecast(model: DenoiserModel, schedule: NoiseSchedule,
                 season_so_far: SeasonFrame, transform: IntensityTransform,
                 job: ForecastJob, rng: np.random.Generator) -> list[SeasonFrame]:
    """Inpaint the hidden future of a season; returns decoded trajectory frames."""
    w = season_so_far.n_weeks
    if not 1 <= job.reference_week <= w:
        raise ValueError(f"reference_week {job.reference_week} outside [1, {w}]")
    if job.reference_week == w:
        raise ValueError("nothing to forecast: reference week is the last grid week")
    if job.reference_week + max(job.horizons) > w:
        raise ValueError("horizons extend past the end of the season grid")
    mask = past_only_mask(job.reference_week, season_so_far.values.shape)
    observed = encode_frame(season_so_far, transform)
    cfg = InpaintConfig(
        algorithm=job.inpaint.algorithm,
        jump_length=job.inpaint.jump_length,
        time_travel=job.inpaint.time_travel,
        refine_steps=job.inpaint.refine_steps,
        refine_step_size=job.inpaint.refine_step_size,
        ddim_eta=job.inpaint.ddim_eta,
        n_trajectories=job.n_trajectories,
    )
    result = inpaint_sample(model, schedule, observed, mask, cfg, rng)
    return [decode_grid(g, transform) for g in result.grids]


def ensemble_to_quantiles(ensemble: list[SeasonFrame], job: ForecastJob) -> QuantileForecast:
    """Empirical quantiles of the trajectory ensemble at each (location, horizon)."""
    if not ensemble:
        raise DataError("ensemble is empty")
    codes = ensemble[0].location_codes
    locations = job.locations or codes
    unknown = [c for c in locations if c not in codes]
    if unknown:
        raise DataError(f"unknown locations: {unknown}")
    stack = np.stack([f.values for f in ensemble])  # (n, W, L)
    values = np.empty((len(locations), len(job.horizons), len(QUANTILE_LEVELS)))
    for li, code in enumerate(locations):
        col = codes.index(code)
        for hi, h in enumerate(job.horizons):
            week_idx = job.reference_week + h - 2  # 0-based row of week ref + h - 1
            samples = stack[:, week_idx, col]
            values[li, hi] = np.quantile(samples, QUANTILE_LEVELS,
                                         method="averaged_inverted_cdf")
    return QuantileForecast(locations=tuple(locations), horizons=job.horizons, values=values)


HUB_COLUMNS = ["reference_date", "target", "horizon", "target_end_date",
               "location", "output_type", "output_type_id", "value"]


def format_level(level: float) -> str:
    """Trailing-zero-free decimal text, e.g. 0.01 not 0.010."""
    return np.format_float_positional(level, trim="-")


def export_hub_csv(qf: QuantileForecast, reference_date: str, target_name: str, path
                   ) -> None:
    """Write hub-format quantile rows; values round-trip exactly through read_hub_csv."""
    ref = dt.date.fromisoformat(reference_date)
    rows = []
    for li, loc in enumerate(qf.locations):
        for hi, h in enumerate(qf.horizons):
            end = ref + dt.timedelta(weeks=h)
            for level, value in zip(qf.levels, qf.values[li, hi]):
                rows.append((reference_date, target_name, h, end.isoformat(), loc,
                             "quantile", format_level(level), repr(float(value))))
    pd.DataFrame(rows, columns=HUB_COLUMNS).to_csv(path, index=False)


def read_hub_csv(path) -> tuple[QuantileForecast, str, str]:
    """Load a hub-format CSV back into a QuantileForecast."""
    df = pd.read_csv(path, dtype={"output_type_id": str, "value": str, "location": str})
    missing = set(HUB_COLUMNS) - set(df.columns)
    if missing:
        raise DataError(f"hub CSV missing columns: {sorted(missing)}")
    df = df[df["output_type"] == "quantile"]
    if df.empty:
        raise DataError("hub CSV has no quantile rows")
    locations = tuple(dict.fromkeys(df["location"]))
    horizons = tuple(sorted(df["horizon"].unique()))
    levels = sorted(float(x) for x in df["output_type_id"].unique())
    if len(levels) != len(QUANTILE_LEVELS) or not np.allclose(levels, QUANTILE_LEVELS):
        raise DataError("hub CSV does not carry the 23 standard quantile levels")
    values = np.full((len(locations), len(horizons), len(QUANTILE_LEVELS)), np.nan)
    level_idx = {format_level(lv): i for i, lv in enumerate(QUANTILE_LEVELS)}
    for _, row in df.iterrows():
        li = locations.index(row["location"])
        hi = horizons.index(row["horizon"])
        qi = level_idx[format_level(float(row["output_type_id"]))]
        values[li, hi, qi] = float(row["value"])
    if np.isnan(values).any():
        raise DataError("hub CSV has missing (location, horizon, level) cells")
    qf = QuantileForecast(locations=locations, horizons=horizons, values=values)
    return qf, str(df["reference_date"].iloc[0]), str(df["target"].iloc[0])
