"""Synthetic seasons and fixture tables.

Two roles:
  * a small 8-location toy world (unimodal/bimodal Gaussian-bump seasons
    with shared severity, so locations are correlated) used for training
    the bundled desk-scale checkpoint and for the acceptance suite;
  * a fixture library mimicking the production frame counts
    (20 surveillance + 1,240 modeled) for composition-identity checks.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .dataset import FrameLibrary, ingest_hosp_surveillance, ingest_ili, ingest_modeled
from .grids import SeasonFrame

TOY_WEEKS = 52
TOY_LOCATIONS = tuple(f"L{i:02d}" for i in range(8))


def _bump(weeks: np.ndarray, peak: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((weeks - peak) / width) ** 2)


def toy_season_values(rng: np.random.Generator, n_weeks: int = TOY_WEEKS,
                      n_locations: int = len(TOY_LOCATIONS)) -> np.ndarray:
    """One synthetic season: shared timing/severity with per-location jitter."""
    weeks = np.arange(1, n_weeks + 1, dtype=np.float64)
    severity = rng.uniform(200.0, 1500.0)
    peak = rng.uniform(18.0, 36.0)
    width = rng.uniform(3.0, 6.0)
    bimodal = rng.random() < 0.35
    peak2 = peak + rng.uniform(8.0, 16.0)
    ratio = rng.uniform(0.3, 0.8)
    values = np.empty((n_weeks, n_locations))
    for li in range(n_locations):
        f = rng.uniform(0.5, 1.5)
        jitter = rng.uniform(-2.0, 2.0)
        curve = _bump(weeks, peak + jitter, width)
        if bimodal:
            curve = curve + ratio * _bump(weeks, peak2 + jitter, width)
        values[:, li] = severity * f * curve
    return values


def toy_frames(n: int, seed: int = 0, source_tag: str = "modeled",
               prefix: str = "toy") -> list[SeasonFrame]:
    rng = np.random.default_rng(seed)
    return [
        SeasonFrame(
            values=toy_season_values(rng),
            season_start=f"{prefix}-{i:04d}",
            location_codes=TOY_LOCATIONS,
            source_tag=source_tag,
            provenance=f"{prefix}-{i:04d}",
        )
        for i in range(n)
    ]


def toy_training_library(n: int = 200, seed: int = 0) -> FrameLibrary:
    return FrameLibrary(frames=toy_frames(n, seed=seed))


def toy_truth_season(seed: int = 1242) -> SeasonFrame:
    """A held-out season from the same generator, used as forecast ground truth."""
    return toy_frames(1, seed=seed, prefix="truth")[0]


# ---------------------------------------------------------------------------
# Fixture tables mimicking the production sources


def fixture_ili_table(seed: int = 10, n_seasons: int = 13) -> pd.DataFrame:
    """Percent-ILI table: 13 seasons x 52 weeks x 8 locations."""
    rng = np.random.default_rng(seed)
    rows = []
    weeks = np.arange(1, TOY_WEEKS + 1, dtype=np.float64)
    for s in range(n_seasons):
        peak = rng.uniform(18.0, 36.0)
        width = rng.uniform(3.0, 6.0)
        amp = rng.uniform(2.0, 8.0)  # percent ILI at peak
        for li, code in enumerate(TOY_LOCATIONS):
            curve = amp * rng.uniform(0.6, 1.4) * _bump(weeks, peak + rng.uniform(-2, 2), width)
            for wi, w in enumerate(weeks):
                rows.append((f"ili-{2010 + s}", int(w), code, min(curve[wi], 100.0)))
    return pd.DataFrame(rows, columns=["season", "week", "location", "percent"])


def fixture_hosp_table(seed: int = 11, n_seasons: int = 7,
                       covered: tuple[str, ...] = TOY_LOCATIONS[:5]) -> pd.DataFrame:
    """Hospitalization table covering a location subset."""
    rng = np.random.default_rng(seed)
    rows = []
    for s in range(n_seasons):
        values = toy_season_values(rng)
        for li, code in enumerate(TOY_LOCATIONS):
            if code not in covered:
                continue
            for wi in range(TOY_WEEKS):
                rows.append((f"hosp-{2016 + s}", wi + 1, code, values[wi, li]))
    return pd.DataFrame(rows, columns=["season", "week", "location", "value"])


def fixture_populations() -> dict[str, float]:
    return {code: 1_000_000.0 * (i + 1) for i, code in enumerate(TOY_LOCATIONS)}


def fixture_trajectory_sets(seed: int = 12) -> dict[tuple[str, str], dict[str, np.ndarray]]:
    """Trajectory archive whose cap-20 selection yields exactly 1,240 frames.

    Two hub rounds (4 x 6 cells with 25 available; 2 x 6 cells with 25 and
    5 x 6 cells with 12) plus one extra model with 8 scenarios, matching the
    production library totals.
    """
    rng = np.random.default_rng(seed)
    sets: dict[tuple[str, str], dict[str, np.ndarray]] = {}

    def fill(model: str, scenario: str, n_avail: int) -> None:
        sets[(model, scenario)] = {
            f"t{k:03d}": toy_season_values(rng) for k in range(n_avail)
        }

    for m in range(4):  # first round: 4 models x 6 scenarios, 20 kept each
        for s in range(6):
            fill(f"r4-m{m}", f"s{s}", 25)
    for m in range(2):  # second round, high-volume teams
        for s in range(6):
            fill(f"r5-m{m}", f"s{s}", 25)
    for m in range(2, 7):  # second round, smaller teams (12 < cap)
        for s in range(6):
            fill(f"r5-m{m}", f"s{s}", 12)
    for s in range(8):  # extra single-model round: 160 frames
        fill("r1-extra", f"s{s}", 20)
    return sets


def fixture_library(seed: int = 13) -> FrameLibrary:
    """20 surveillance + 1,240 modeled frames, mirroring the production counts."""
    lib = FrameLibrary()
    modeled = ingest_modeled(fixture_trajectory_sets(seed), per_cell_cap=20)
    peak_reference = [float(f.values.max()) for f in modeled[:200]]
    lib.extend(ingest_ili(fixture_ili_table(seed + 1), peak_reference))
    lib.extend(ingest_hosp_surveillance(fixture_hosp_table(seed + 2), fixture_populations()))
    lib.extend(modeled)
    return lib


def trajectory_sets_to_csv(sets, path) -> None:
    """Write a trajectory archive CSV (model, scenario, trajectory_id, week, location, value)."""
    rows = []
    for (model, scenario), trajs in sorted(sets.items()):
        for tid in sorted(trajs):
            values = trajs[tid]
            for wi in range(values.shape[0]):
                for li in range(values.shape[1]):
                    rows.append((model, scenario, tid, wi + 1, f"L{li:02d}", values[wi, li]))
    pd.DataFrame(rows, columns=["model", "scenario", "trajectory_id",
                                "week", "location", "value"]).to_csv(path, index=False)
