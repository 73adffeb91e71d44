import numpy as np
import pandas as pd
import pytest

from gridpaint.errors import DataError
from gridpaint.forecast import (QUANTILE_LEVELS, ForecastJob, QuantileForecast,
                                ensemble_to_quantiles, export_hub_csv, format_level,
                                read_hub_csv, run_forecast)
from gridpaint.grids import SeasonFrame
from gridpaint.inpaint import InpaintConfig

CODES = tuple(f"L{i:02d}" for i in range(8))


def make_ensemble(cell_values, week_idx=30, col=2, n_weeks=52):
    """Ensemble of flat frames that differ only at one (week, location) cell."""
    frames = []
    for v in cell_values:
        values = np.ones((n_weeks, len(CODES)))
        values[week_idx, col] = v
        frames.append(SeasonFrame(values=values, season_start="s",
                                  location_codes=CODES, source_tag="modeled"))
    return frames


class TestForecastJob:
    def test_nonpositive_horizon_rejected(self):
        with pytest.raises(ValueError):
            ForecastJob(reference_week=10, horizons=(0, 1))

    def test_defaults(self):
        job = ForecastJob(reference_week=10)
        assert job.horizons == (1, 2, 3, 4)
        assert job.n_trajectories == 512


class TestQuantileForecast:
    def ones(self):
        return np.ones((1, 2, 23))

    def test_non_monotone_rejected(self):
        values = self.ones()
        values[0, 0, 5] = 0.5
        with pytest.raises(DataError):
            QuantileForecast(("L00",), (1, 2), values)

    def test_negative_rejected(self):
        values = self.ones()
        values[0, 0, 0] = -1.0
        with pytest.raises(DataError):
            QuantileForecast(("L00",), (1, 2), values)

    def test_wrong_shape_rejected(self):
        with pytest.raises(DataError):
            QuantileForecast(("L00",), (1, 2), np.ones((1, 2, 22)))


class TestEnsembleToQuantiles:
    def test_degenerate_distribution(self):
        job = ForecastJob(reference_week=28, horizons=(4,))
        qf = ensemble_to_quantiles(make_ensemble([7.0] * 40), job)
        # week_idx 30 = reference 28 + horizon 4 - 2
        assert np.all(qf.cell("L02", 4) == 7.0)

    def test_median_of_512_is_256_5(self):
        # orders statistics 256 and 257 average to 256.5
        job = ForecastJob(reference_week=28, horizons=(4,))
        qf = ensemble_to_quantiles(make_ensemble(np.arange(1, 513)), job)
        assert qf.cell("L02", 4)[QUANTILE_LEVELS.index(0.50)] == 256.5

    def test_extreme_levels_of_512(self):
        # inverse ECDF with midpoint interpolation: level 0.01 over n = 512
        # has cutoff 5.12 (not integer) -> order statistic 6
        job = ForecastJob(reference_week=28, horizons=(4,))
        qf = ensemble_to_quantiles(make_ensemble(np.arange(1, 513)), job)
        cell = qf.cell("L02", 4)
        assert cell[0] == 6.0
        assert cell[-1] == 507.0

    def test_monotone_over_randomized_trials(self, rng):
        samples = rng.gamma(2.0, 50.0, size=(10_000, 37))
        q = np.quantile(samples, QUANTILE_LEVELS, axis=1,
                        method="averaged_inverted_cdf")
        assert np.all(np.diff(q, axis=0) >= 0)

    def test_empty_ensemble_rejected(self):
        with pytest.raises(DataError):
            ensemble_to_quantiles([], ForecastJob(reference_week=28))

    def test_unknown_location_rejected(self):
        job = ForecastJob(reference_week=28, locations=("XX",))
        with pytest.raises(DataError):
            ensemble_to_quantiles(make_ensemble([1.0]), job)

    def test_location_subset(self):
        job = ForecastJob(reference_week=28, horizons=(4,), locations=("L02", "L05"))
        qf = ensemble_to_quantiles(make_ensemble([3.0] * 10), job)
        assert qf.locations == ("L02", "L05")
        assert np.all(qf.cell("L05", 4) == 1.0)


class TestRunForecast:
    def job(self, **kw):
        base = dict(reference_week=30, horizons=(1, 2, 3, 4), n_trajectories=8,
                    inpaint=InpaintConfig(algorithm="repaint"))
        base.update(kw)
        return ForecastJob(**base)

    def test_reference_at_last_week_rejected(self, toy_checkpoint, toy_truth):
        with pytest.raises(ValueError, match="nothing to forecast"):
            run_forecast(toy_checkpoint.model, toy_checkpoint.schedule, toy_truth,
                         toy_checkpoint.transform, self.job(reference_week=52),
                         np.random.default_rng(0))

    def test_horizons_past_grid_rejected(self, toy_checkpoint, toy_truth):
        with pytest.raises(ValueError, match="past the end"):
            run_forecast(toy_checkpoint.model, toy_checkpoint.schedule, toy_truth,
                         toy_checkpoint.transform, self.job(reference_week=50),
                         np.random.default_rng(0))

    def test_ensemble_size_and_fidelity(self, toy_checkpoint, toy_truth):
        job = self.job()
        ensemble = run_forecast(toy_checkpoint.model, toy_checkpoint.schedule,
                                toy_truth, toy_checkpoint.transform, job,
                                np.random.default_rng(0))
        assert len(ensemble) == 8
        for f in ensemble:
            # observed weeks survive the encode/inpaint/decode round trip
            got = f.values[:29]
            want = toy_truth.values[:29]
            assert np.max(np.abs(got - want) / np.maximum(want, 1.0)) < 1e-6

    def test_quantile_pipeline_end_to_end(self, toy_checkpoint, toy_truth):
        job = self.job()
        ensemble = run_forecast(toy_checkpoint.model, toy_checkpoint.schedule,
                                toy_truth, toy_checkpoint.transform, job,
                                np.random.default_rng(0))
        qf = ensemble_to_quantiles(ensemble, job)
        assert qf.values.shape == (8, 4, 23)
        assert np.all(qf.values >= 0)


class TestHubCsv:
    def make_qf(self, rng, n_loc=1, horizons=(1, 2, 3, 4)):
        values = np.sort(rng.uniform(0, 500, (n_loc, len(horizons), 23)), axis=-1)
        return QuantileForecast(tuple(CODES[:n_loc]), tuple(horizons), values)

    def test_row_count_92(self, rng, tmp_path):
        path = tmp_path / "f.csv"
        export_hub_csv(self.make_qf(rng), "2023-11-18", "wk inc flu hosp", path)
        df = pd.read_csv(path)
        assert len(df) == 92
        assert list(df.columns) == ["reference_date", "target", "horizon",
                                    "target_end_date", "location", "output_type",
                                    "output_type_id", "value"]

    def test_round_trip_exact(self, rng, tmp_path):
        qf = self.make_qf(rng, n_loc=3)
        path = tmp_path / "f.csv"
        export_hub_csv(qf, "2023-11-18", "wk inc flu hosp", path)
        back, ref, target = read_hub_csv(path)
        assert np.array_equal(back.values, qf.values)
        assert back.locations == qf.locations
        assert ref == "2023-11-18" and target == "wk inc flu hosp"

    def test_level_text_trailing_zero_free(self):
        assert format_level(0.01) == "0.01"
        assert format_level(0.1) == "0.1"
        assert format_level(0.975) == "0.975"
        assert format_level(0.5) == "0.5"

    def test_target_end_dates(self, rng, tmp_path):
        path = tmp_path / "f.csv"
        export_hub_csv(self.make_qf(rng), "2023-11-18", "wk inc flu hosp", path)
        df = pd.read_csv(path)
        assert set(df[df.horizon == 1]["target_end_date"]) == {"2023-11-25"}
        assert set(df[df.horizon == 4]["target_end_date"]) == {"2023-12-16"}

    def test_deterministic_export(self, rng, tmp_path):
        qf = self.make_qf(rng)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        export_hub_csv(qf, "2023-11-18", "t", p1)
        export_hub_csv(qf, "2023-11-18", "t", p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_column_rejected(self, rng, tmp_path):
        path = tmp_path / "f.csv"
        export_hub_csv(self.make_qf(rng), "2023-11-18", "t", path)
        df = pd.read_csv(path).drop(columns=["output_type_id"])
        df.to_csv(path, index=False)
        with pytest.raises(DataError):
            read_hub_csv(path)
