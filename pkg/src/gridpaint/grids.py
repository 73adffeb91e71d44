"""Season grids, intensity transforms, observation masks, and model-space padding.

A season is a weeks x locations array of nonnegative incidence counts.
The default U.S. configuration is 52 weeks x 51 locations (50 states + DC),
padded with zeros to the next multiple of 16 per axis (64x64) so the
multi-scale denoiser can downsample it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import DataError

DEFAULT_WEEKS = 52
SCALE_LO = 0.0
SCALE_HI = 2.0
PAD_MULTIPLE = 16

SOURCE_TAGS = ("surveillance", "modeled")


def _next_multiple(n: int, m: int) -> int:
    return ((n + m - 1) // m) * m


@dataclass(frozen=True)
class SeasonFrame:
    """One complete season: a (W, L) nonnegative incidence grid plus metadata."""

    values: np.ndarray
    season_start: str
    location_codes: tuple[str, ...]
    source_tag: str
    provenance: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "location_codes", tuple(self.location_codes))
        if values.ndim != 2:
            raise DataError(f"frame values must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("frame contains non-finite values")
        if np.any(values < 0):
            raise DataError("frame contains negative values")
        if len(self.location_codes) != values.shape[1]:
            raise DataError(
                f"{len(self.location_codes)} location codes for {values.shape[1]} columns"
            )
        if len(set(self.location_codes)) != len(self.location_codes):
            raise DataError("duplicate location codes")
        if self.source_tag not in SOURCE_TAGS:
            raise DataError(f"source_tag must be one of {SOURCE_TAGS}")

    @property
    def n_weeks(self) -> int:
        return self.values.shape[0]

    @property
    def n_locations(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "SeasonFrame":
        return replace(self, values=values)


@dataclass(frozen=True)
class IntensityTransform:
    """Monotone map between incidence counts and the model's [lo, hi] range.

    encode(x) = lo + (hi - lo) * f(x) / f(data_max), with f identity (linear)
    or square root (sqrt). Fitted once, globally, on the full frame library.
    """

    kind: str
    data_max: float = float("nan")
    scale_lo: float = SCALE_LO
    scale_hi: float = SCALE_HI
    fitted: bool = False

    def __post_init__(self):
        if self.kind not in ("linear", "sqrt"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.fitted and not (np.isfinite(self.data_max) and self.data_max > 0):
            raise ValueError("fitted transform requires data_max > 0")

    def _fwd(self, x):
        return np.sqrt(x) if self.kind == "sqrt" else x

    def _check_fitted(self):
        if not self.fitted:
            raise ValueError("transform is not fitted")

    def encode(self, x):
        """Counts to model space. Values above data_max map above scale_hi."""
        self._check_fitted()
        x = np.asarray(x, dtype=np.float64)
        span = self.scale_hi - self.scale_lo
        return self.scale_lo + span * self._fwd(x) / self._fwd(self.data_max)

    def decode(self, y):
        """Model space back to counts; negative model values clamp to zero."""
        self._check_fitted()
        y = np.asarray(y, dtype=np.float64)
        span = self.scale_hi - self.scale_lo
        u = np.maximum(y - self.scale_lo, 0.0) / span * self._fwd(self.data_max)
        return u**2 if self.kind == "sqrt" else u


def fit_transform(frames: Sequence[SeasonFrame], kind: str) -> IntensityTransform:
    """Fit a global intensity transform on the pooled frame library."""
    if len(frames) == 0:
        raise DataError("cannot fit a transform on an empty frame list")
    data_max = max(float(f.values.max()) for f in frames)
    if data_max <= 0:
        raise DataError("frame library is all zeros; transform undefined")
    return IntensityTransform(kind=kind, data_max=data_max, fitted=True)


@dataclass(frozen=True)
class PadSpec:
    """Records the data region inside a padded model grid."""

    data_shape: tuple[int, int]
    padded_shape: tuple[int, int]

    def strip(self, values: np.ndarray) -> np.ndarray:
        w, l = self.data_shape
        return values[..., :w, :l]


@dataclass(frozen=True)
class ModelGrid:
    """A model-space grid (padded, rescaled) with enough metadata to decode."""

    values: np.ndarray
    pad_spec: PadSpec
    season_start: str = ""
    location_codes: tuple[str, ...] = ()
    provenance: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "location_codes", tuple(self.location_codes))
        if values.shape != self.pad_spec.padded_shape:
            raise DataError(
                f"grid shape {values.shape} != pad spec {self.pad_spec.padded_shape}"
            )

    def data_region(self) -> np.ndarray:
        return self.pad_spec.strip(self.values)

    def with_values(self, values: np.ndarray) -> "ModelGrid":
        return replace(self, values=values)


def make_pad_spec(data_shape: tuple[int, int], multiple: int = PAD_MULTIPLE) -> PadSpec:
    padded = (_next_multiple(data_shape[0], multiple), _next_multiple(data_shape[1], multiple))
    return PadSpec(data_shape=tuple(data_shape), padded_shape=padded)


def pad_values(values: np.ndarray, spec: PadSpec) -> np.ndarray:
    """Zero-pad on the high-index side of each axis."""
    w, l = spec.data_shape
    pw, pl = spec.padded_shape
    return np.pad(values, ((0, pw - w), (0, pl - l)))


def encode_frame(
    frame: SeasonFrame, t: IntensityTransform, multiple: int = PAD_MULTIPLE
) -> ModelGrid:
    """Rescale a season to model space and zero-pad it for the denoiser."""
    spec = make_pad_spec(frame.values.shape, multiple)
    return ModelGrid(
        values=pad_values(t.encode(frame.values), spec),
        pad_spec=spec,
        season_start=frame.season_start,
        location_codes=frame.location_codes,
        provenance=frame.provenance,
    )


def decode_grid(grid: ModelGrid, t: IntensityTransform, source_tag: str = "modeled") -> SeasonFrame:
    """Strip padding and map back to incidence counts (clamped at zero)."""
    values = t.decode(grid.data_region())
    if not np.all(np.isfinite(values)):
        raise DataError("decoded grid contains non-finite values")
    codes = grid.location_codes or tuple(f"L{i:02d}" for i in range(values.shape[1]))
    return SeasonFrame(
        values=values,
        season_start=grid.season_start,
        location_codes=codes,
        source_tag=source_tag,
        provenance=grid.provenance,
    )


# ---------------------------------------------------------------------------
# Observation masks


@dataclass(frozen=True)
class ObservationMask:
    """Boolean (W, L) grid; True marks cells whose values are known."""

    observed: np.ndarray

    def __post_init__(self):
        observed = np.asarray(self.observed, dtype=bool)
        object.__setattr__(self, "observed", observed)
        if observed.ndim != 2:
            raise DataError("mask must be 2-D")

    @property
    def hidden(self) -> np.ndarray:
        return ~self.observed

    @property
    def n_observed(self) -> int:
        return int(self.observed.sum())

    def is_past_only(self) -> bool:
        """True when the mask observes exactly the weeks before some reference week."""
        row_all = self.observed.all(axis=1)
        row_any = self.observed.any(axis=1)
        return bool(np.array_equal(row_all, row_any) and _is_prefix(row_all))

    def reference_week(self) -> int:
        """1-based first hidden week of a past-only mask."""
        if not self.is_past_only():
            raise ValueError("mask is not of past-only form")
        return int(self.observed.all(axis=1).sum()) + 1


def _is_prefix(row_flags: np.ndarray) -> bool:
    n = int(row_flags.sum())
    return bool(row_flags[:n].all() and not row_flags[n:].any())


@dataclass(frozen=True)
class MaskSpec:
    """Named mask family plus its parameters; see make_mask."""

    kind: str
    params: dict = field(default_factory=dict)


def past_only_mask(reference_week: int, shape: tuple[int, int]) -> ObservationMask:
    """Weeks strictly before reference_week (1-based) are observed."""
    w, l = shape
    if not 1 <= reference_week <= w:
        raise ValueError(f"reference_week {reference_week} outside [1, {w}]")
    observed = np.zeros(shape, dtype=bool)
    observed[: reference_week - 1, :] = True
    return ObservationMask(observed)


def half_map_mask(
    observed_locations: Sequence[str], location_codes: Sequence[str], shape: tuple[int, int]
) -> ObservationMask:
    """Observe the full series of a location subset; hide everything else."""
    codes = list(location_codes)
    unknown = [c for c in observed_locations if c not in codes]
    if unknown:
        raise ValueError(f"unknown locations: {unknown}")
    observed = np.zeros(shape, dtype=bool)
    for c in observed_locations:
        observed[:, codes.index(c)] = True
    return ObservationMask(observed)


def leave_one_out_mask(
    location: str, location_codes: Sequence[str], shape: tuple[int, int]
) -> ObservationMask:
    """Observe everything except the full series of one location."""
    codes = list(location_codes)
    if location not in codes:
        raise ValueError(f"unknown location {location!r}")
    observed = np.ones(shape, dtype=bool)
    observed[:, codes.index(location)] = False
    return ObservationMask(observed)


def midseason_gap_mask(week_a: int, week_b: int, shape: tuple[int, int]) -> ObservationMask:
    """Hide weeks in [week_a, week_b) (1-based); observe the rest."""
    w = shape[0]
    if week_a >= week_b:
        raise ValueError("week_a must be < week_b")
    if not (1 <= week_a and week_b <= w + 1):
        raise ValueError(f"gap [{week_a}, {week_b}) outside [1, {w}]")
    observed = np.ones(shape, dtype=bool)
    observed[week_a - 1 : week_b - 1, :] = False
    return ObservationMask(observed)


def checkerboard_mask(block_w: int, block_h: int, shape: tuple[int, int]) -> ObservationMask:
    """Alternating block_w-week x block_h-location blocks, origin block observed."""
    if block_w <= 0 or block_h <= 0:
        raise ValueError("block sizes must be positive")
    wi = np.arange(shape[0])[:, None] // block_w
    li = np.arange(shape[1])[None, :] // block_h
    return ObservationMask((wi + li) % 2 == 0)


def make_mask(
    spec: MaskSpec,
    shape: tuple[int, int],
    location_codes: Sequence[str] = (),
) -> ObservationMask:
    """Build an ObservationMask from a named spec (CLI/preset entry point)."""
    p = spec.params
    if spec.kind == "forecast_past_only":
        return past_only_mask(p["reference_week"], shape)
    if spec.kind == "half_map":
        return half_map_mask(p["location_subset"], location_codes, shape)
    if spec.kind == "leave_one_out":
        return leave_one_out_mask(p["location"], location_codes, shape)
    if spec.kind == "midseason_gap":
        return midseason_gap_mask(p["week_a"], p["week_b"], shape)
    if spec.kind == "checkerboard":
        return checkerboard_mask(p["block_w"], p["block_h"], shape)
    if spec.kind == "custom":
        return ObservationMask(np.asarray(p["observed"], dtype=bool))
    raise ValueError(f"unknown mask kind {spec.kind!r}")


def pad_mask(mask: ObservationMask, spec: PadSpec) -> np.ndarray:
    """Mask in padded model space; pad cells count as unobserved."""
    return pad_values(mask.observed.astype(np.float64), spec).astype(bool)


# ---------------------------------------------------------------------------
# On-disk frame format

FRAME_CSV_COLUMNS = ["season_id", "week_index", "location_code", "value"]


def frames_to_csv(frames: Sequence[SeasonFrame], path) -> None:
    rows = []
    for f in frames:
        sid = f.provenance or f.season_start
        for wi in range(f.n_weeks):
            for li, code in enumerate(f.location_codes):
                rows.append((sid, wi + 1, code, f.values[wi, li]))
    pd.DataFrame(rows, columns=FRAME_CSV_COLUMNS).to_csv(path, index=False)


def frames_from_csv(path, source_tag: str = "surveillance") -> list[SeasonFrame]:
    """Load frames, validating that every week x location appears exactly once."""
    df = pd.read_csv(path)
    missing = set(FRAME_CSV_COLUMNS) - set(df.columns)
    if missing:
        raise DataError(f"frame CSV missing columns: {sorted(missing)}")
    frames = []
    for sid, g in df.groupby("season_id", sort=True):
        codes = sorted(g["location_code"].unique())
        weeks = sorted(g["week_index"].unique())
        if weeks != list(range(1, len(weeks) + 1)):
            raise DataError(f"season {sid}: week indices not contiguous from 1")
        if len(g) != len(weeks) * len(codes):
            raise DataError(f"season {sid}: incomplete or duplicated week x location cells")
        pivot = g.pivot(index="week_index", columns="location_code", values="value")
        if pivot.isna().any().any():
            raise DataError(f"season {sid}: missing cells")
        frames.append(
            SeasonFrame(
                values=pivot.loc[weeks, codes].to_numpy(),
                season_start=str(sid),
                location_codes=tuple(codes),
                source_tag=source_tag,
                provenance=str(sid),
            )
        )
    return frames
