"""Frame library construction: ingestion adapters, dataset composition, augmentation.

Ingestion reads local CSV fixtures shaped like their upstream sources.
Composition mixes surveillance and modeled frames by fraction and repeats
them (full cycles, then a seeded uniform top-up) to an exact target size.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError
from .grids import DEFAULT_WEEKS, SeasonFrame


@dataclass
class FrameLibrary:
    frames: list[SeasonFrame] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        out = {"surveillance": 0, "modeled": 0}
        for f in self.frames:
            out[f.source_tag] += 1
        return out

    def by_tag(self, tag: str) -> list[SeasonFrame]:
        return [f for f in self.frames if f.source_tag == tag]

    def extend(self, frames: Sequence[SeasonFrame]) -> None:
        self.frames.extend(frames)


@dataclass(frozen=True)
class DatasetComposition:
    surveillance_fraction: float
    modeled_fraction: float
    target_size: int

    def __post_init__(self):
        if not np.isclose(self.surveillance_fraction + self.modeled_fraction, 1.0):
            raise ValueError("fractions must sum to 1")
        if min(self.surveillance_fraction, self.modeled_fraction) < 0:
            raise ValueError("fractions must be nonnegative")
        if self.target_size < 1:
            raise ValueError("target_size must be positive")


@dataclass(frozen=True)
class AugmentationConfig:
    poisson_resample: bool = False
    temporal_pad_weeks: int = 0
    intensity_scale_range: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.temporal_pad_weeks < 0:
            raise ValueError("temporal_pad_weeks must be >= 0")
        lo, hi = self.intensity_scale_range
        if not 0 < lo <= hi:
            raise ValueError("need 0 < alpha_lo <= alpha_hi")

    @property
    def is_noop(self) -> bool:
        return (not self.poisson_resample and self.temporal_pad_weeks == 0
                and self.intensity_scale_range == (1.0, 1.0))


# Named enrichment schemes compared in the ablations.
ENRICHMENTS: dict[str, AugmentationConfig] = {
    "none": AugmentationConfig(),
    "poisson": AugmentationConfig(poisson_resample=True),
    "poisson-pad-scale-narrow": AugmentationConfig(
        poisson_resample=True, temporal_pad_weeks=4, intensity_scale_range=(0.7, 1.3)),
    "poisson-pad-scale-wide": AugmentationConfig(
        poisson_resample=True, temporal_pad_weeks=15, intensity_scale_range=(0.1, 1.9)),
}


def _truncate_weeks(values: np.ndarray, n_weeks: int = DEFAULT_WEEKS) -> np.ndarray:
    """Long (53-week) seasons are truncated to the first n_weeks."""
    return values[:n_weeks]


# ---------------------------------------------------------------------------
# Ingestion adapters


def ingest_ili(records: pd.DataFrame, peak_reference: Sequence[float]) -> list[SeasonFrame]:
    """Convert percent-ILI seasons to admission-scale frames.

    Each season is multiplied by a single factor chosen so its peak matches
    the quantile of the modeled peak-intensity distribution corresponding to
    the season's peak rank among the ingested seasons.

    records columns: season, week, location, percent.
    """
    peak_reference = np.asarray(peak_reference, dtype=np.float64)
    if peak_reference.size == 0:
        raise DataError("peak_reference is empty")
    needed = {"season", "week", "location", "percent"}
    if not needed <= set(records.columns):
        raise DataError(f"ILI table missing columns: {sorted(needed - set(records.columns))}")
    if records["percent"].min() < 0 or records["percent"].max() > 100:
        raise DataError("percent-ILI values must lie in [0, 100]")

    raw: dict[str, tuple[np.ndarray, tuple[str, ...]]] = {}
    for season, g in records.groupby("season", sort=True):
        codes = sorted(g["location"].unique())
        weeks = sorted(g["week"].unique())
        if len(g) != len(weeks) * len(codes):
            raise DataError(f"ILI season {season}: incomplete week x location table")
        pivot = g.pivot(index="week", columns="location", values="percent")
        if pivot.isna().any().any():
            raise DataError(f"ILI season {season}: missing cells")
        raw[str(season)] = (_truncate_weeks(pivot.loc[weeks, codes].to_numpy()), tuple(codes))

    peaks = {s: float(v.max()) for s, (v, _) in raw.items()}
    order = sorted(peaks, key=lambda s: (peaks[s], s))
    n = len(order)
    frames = []
    for season, (values, codes) in sorted(raw.items()):
        peak = peaks[season]
        if peak > 0:
            q = (order.index(season) + 0.5) / n
            target = float(np.quantile(peak_reference, q))
            values = values * (target / peak)
        frames.append(SeasonFrame(
            values=values, season_start=season, location_codes=codes,
            source_tag="surveillance", provenance=f"ili:{season}",
        ))
    return frames


def ingest_hosp_surveillance(records: pd.DataFrame, populations: Mapping[str, float]
                             ) -> list[SeasonFrame]:
    """Hospitalization seasons covering a location subset, extended to all
    locations by the network-wide per-capita rate times population.

    records columns: season, week, location, value. `populations` defines
    the full location set of the output frames.
    """
    needed = {"season", "week", "location", "value"}
    if not needed <= set(records.columns):
        raise DataError(f"hosp table missing columns: {sorted(needed - set(records.columns))}")
    for loc, pop in populations.items():
        if pop <= 0:
            raise DataError(f"non-positive population for {loc}")
    all_codes = sorted(populations)
    frames = []
    for season, g in records.groupby("season", sort=True):
        covered = sorted(set(g["location"].unique()) & set(all_codes))
        if not covered:
            raise DataError(f"hosp season {season}: no covered locations")
        weeks = sorted(g["week"].unique())
        pivot = (g[g["location"].isin(covered)]
                 .pivot(index="week", columns="location", values="value")
                 .loc[weeks, covered])
        if pivot.isna().any().any():
            raise DataError(f"hosp season {season}: missing cells in covered locations")
        covered_pop = sum(populations[c] for c in covered)
        rates = pivot.sum(axis=1).to_numpy() / covered_pop  # per-capita per week
        values = np.empty((len(weeks), len(all_codes)))
        for li, code in enumerate(all_codes):
            if code in covered:
                values[:, li] = pivot[code].to_numpy()
            else:
                values[:, li] = rates * populations[code]
        frames.append(SeasonFrame(
            values=_truncate_weeks(values), season_start=str(season),
            location_codes=tuple(all_codes), source_tag="surveillance",
            provenance=f"hosp:{season}",
        ))
    return frames


def ingest_modeled(trajectory_sets: Mapping[tuple[str, str], Mapping[str, np.ndarray]],
                   per_cell_cap: int = 20) -> list[SeasonFrame]:
    """Select up to per_cell_cap trajectories per (model, scenario), by id order."""
    frames = []
    shapes = set()
    for (model, scenario) in sorted(trajectory_sets):
        trajs = trajectory_sets[(model, scenario)]
        for tid in sorted(trajs)[:per_cell_cap]:
            values = np.asarray(trajs[tid], dtype=np.float64)
            shapes.add(values.shape)
            if len(shapes) > 1:
                raise DataError(f"trajectory {model}/{scenario}/{tid} has shape "
                                f"{values.shape}, inconsistent with {shapes}")
            codes = tuple(f"L{i:02d}" for i in range(values.shape[1]))
            frames.append(SeasonFrame(
                values=values, season_start=f"{model}/{scenario}",
                location_codes=codes, source_tag="modeled",
                provenance=f"{model}/{scenario}/{tid}",
            ))
    return frames


def trajectories_from_csv(path) -> dict[tuple[str, str], dict[str, np.ndarray]]:
    """Read a trajectory archive: model, scenario, trajectory_id, week, location, value."""
    df = pd.read_csv(path)
    needed = {"model", "scenario", "trajectory_id", "week", "location", "value"}
    if not needed <= set(df.columns):
        raise DataError(f"trajectory archive missing columns: {sorted(needed - set(df.columns))}")
    out: dict[tuple[str, str], dict[str, np.ndarray]] = {}
    for (model, scenario, tid), g in df.groupby(["model", "scenario", "trajectory_id"]):
        pivot = g.pivot(index="week", columns="location", values="value")
        if pivot.isna().any().any():
            raise DataError(f"trajectory {model}/{scenario}/{tid}: missing cells")
        out.setdefault((str(model), str(scenario)), {})[str(tid)] = pivot.sort_index().to_numpy()
    return out


# ---------------------------------------------------------------------------
# Composition


@dataclass
class TrainingSet:
    samples: list[SeasonFrame]
    manifest: dict

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n_unique(self) -> int:
        return len({s.provenance for s in self.samples})


def _repeat_to(frames: list[SeasonFrame], count: int, rng: np.random.Generator
               ) -> list[SeasonFrame]:
    """Full cycles first; the remainder is drawn uniformly without replacement."""
    cycles, rem = divmod(count, len(frames))
    out = frames * cycles
    if rem:
        out += [frames[i] for i in sorted(rng.choice(len(frames), size=rem, replace=False))]
    return out


def compose(library: FrameLibrary, comp: DatasetComposition, rng_seed: int) -> TrainingSet:
    """Build the training multiset for a surveillance/modeled mix."""
    rng = np.random.default_rng(rng_seed)
    samples: list[SeasonFrame] = []
    n_surv = round(comp.surveillance_fraction * comp.target_size)
    counts = {"surveillance": n_surv, "modeled": comp.target_size - n_surv}
    for tag, n_tag in counts.items():
        if n_tag == 0:
            continue
        frames = library.by_tag(tag)
        if not frames:
            raise DataError(f"composition requests {tag} frames but the library has none")
        if n_tag < len(frames):
            raise DataError(
                f"{tag} share of target_size ({n_tag}) is below the number of "
                f"unique {tag} frames ({len(frames)}); raise target_size"
            )
        samples.extend(_repeat_to(frames, n_tag, rng))
    manifest = {
        "surveillance_fraction": comp.surveillance_fraction,
        "modeled_fraction": comp.modeled_fraction,
        "target_size": comp.target_size,
        "rng_seed": rng_seed,
        "n_unique": len({s.provenance for s in samples}),
        "n_total": len(samples),
        "provenance": [s.provenance for s in samples],
    }
    return TrainingSet(samples=samples, manifest=manifest)


def augment(sample: SeasonFrame, cfg: AugmentationConfig, rng: np.random.Generator
            ) -> SeasonFrame:
    """Apply enrichment in the fixed order: resample -> pad -> scale."""
    values = sample.values
    if cfg.poisson_resample:
        values = rng.poisson(values).astype(np.float64)
    k = cfg.temporal_pad_weeks
    if k > 0:
        shift = int(rng.integers(-k, k + 1))
        values = np.roll(values, shift, axis=0)
    lo, hi = cfg.intensity_scale_range
    if (lo, hi) != (1.0, 1.0):
        values = values * rng.uniform(lo, hi)
    if values is sample.values:
        return sample
    return sample.with_values(values)


def manifest_hash(manifest: dict) -> str:
    blob = json.dumps(manifest, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(manifest: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
