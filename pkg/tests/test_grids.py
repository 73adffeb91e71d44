import numpy as np
import pytest

from gridpaint.errors import DataError
from gridpaint.grids import (IntensityTransform, MaskSpec, SeasonFrame,
                             checkerboard_mask, decode_grid, encode_frame, fit_transform,
                             frames_from_csv, frames_to_csv, half_map_mask,
                             leave_one_out_mask, make_mask, make_pad_spec,
                             midseason_gap_mask, pad_values, past_only_mask)

CODES = tuple(f"L{i:02d}" for i in range(8))


def make_frame(values, codes=CODES, season="2020"):
    return SeasonFrame(values=values, season_start=season, location_codes=codes,
                       source_tag="surveillance", provenance=season)


def random_frame(rng, scale=100.0, shape=(52, 8)):
    return make_frame(rng.uniform(0, scale, size=shape))


class TestSeasonFrame:
    def test_rejects_negative(self):
        v = np.ones((52, 8))
        v[0, 0] = -1
        with pytest.raises(DataError):
            make_frame(v)

    def test_rejects_nan(self):
        v = np.ones((52, 8))
        v[3, 3] = np.nan
        with pytest.raises(DataError):
            make_frame(v)

    def test_rejects_duplicate_codes(self):
        with pytest.raises(DataError):
            make_frame(np.ones((52, 8)), codes=("A",) * 8)

    def test_rejects_code_count_mismatch(self):
        with pytest.raises(DataError):
            make_frame(np.ones((52, 8)), codes=("A", "B"))


class TestFitTransform:
    def test_linear_endpoints(self, rng):
        frames = [random_frame(rng, 50.0), make_frame(np.full((52, 8), 100.0))]
        t = fit_transform(frames, "linear")
        assert t.fitted and t.data_max == 100.0
        assert t.encode(100.0) == pytest.approx(2.0)
        assert t.encode(0.0) == pytest.approx(0.0)

    def test_sqrt_closed_form(self, rng):
        frames = [make_frame(np.full((52, 8), 100.0))]
        t = fit_transform(frames, "sqrt")
        # scalar brute force: 2 * sqrt(25) / sqrt(100)
        assert t.encode(25.0) == pytest.approx(2 * np.sqrt(25) / np.sqrt(100))
        assert t.encode(25.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("kind", ["linear", "sqrt"])
    def test_round_trip(self, kind, rng):
        frames = [random_frame(rng) for _ in range(3)]
        t = fit_transform(frames, kind)
        for f in frames:
            x = f.values
            back = t.decode(t.encode(x))
            assert np.max(np.abs(back - x) / np.maximum(x, 1.0)) < 1e-9

    @pytest.mark.parametrize("kind", ["linear", "sqrt"])
    def test_monotone(self, kind, rng):
        t = fit_transform([random_frame(rng)], kind)
        xs = np.sort(rng.uniform(0, t.data_max, size=500))
        ys = t.encode(xs)
        assert np.all(np.diff(ys) > 0)

    def test_empty_list_rejected(self):
        with pytest.raises(DataError):
            fit_transform([], "linear")

    def test_unfitted_rejected(self):
        t = IntensityTransform(kind="linear")
        with pytest.raises(ValueError):
            t.encode(1.0)


class TestEncodeDecode:
    def test_zero_frame(self, rng):
        t = fit_transform([random_frame(rng)], "sqrt")
        grid = encode_frame(make_frame(np.zeros((52, 8))), t)
        assert grid.values.shape == (64, 16)
        assert np.all(grid.values == 0.0)

    def test_data_max_frame_hits_upper_bound(self, rng):
        t = fit_transform([random_frame(rng, 100.0), make_frame(np.full((52, 8), 100.0))],
                          "linear")
        grid = encode_frame(make_frame(np.full((52, 8), 100.0)), t)
        assert np.allclose(grid.data_region(), 2.0)
        # padding stays zero
        assert np.all(grid.values[52:, :] == 0) and np.all(grid.values[:, 8:] == 0)

    def test_above_data_max_not_clipped(self, rng):
        t = fit_transform([make_frame(np.full((52, 8), 100.0))], "linear")
        assert t.encode(150.0) > 2.0

    @pytest.mark.parametrize("kind", ["linear", "sqrt"])
    def test_frame_round_trip(self, kind, rng):
        f = random_frame(rng)
        t = fit_transform([f], kind)
        back = decode_grid(encode_frame(f, t), t)
        assert np.max(np.abs(back.values - f.values) / np.maximum(f.values, 1.0)) < 1e-9
        assert back.location_codes == f.location_codes

    def test_negative_model_value_clamps(self, rng):
        f = random_frame(rng)
        t = fit_transform([f], "sqrt")
        grid = encode_frame(f, t)
        v = grid.values.copy()
        v[0, 0] = -0.05
        assert decode_grid(grid.with_values(v), t).values[0, 0] == 0.0

    @pytest.mark.parametrize("kind", ["linear", "sqrt"])
    def test_model_space_round_trip(self, kind, rng):
        t = fit_transform([random_frame(rng)], kind)
        y = rng.uniform(0, 2, size=(52, 8))
        back = t.encode(t.decode(y))
        assert np.max(np.abs(back - y)) < 1e-9

    def test_padding_neutrality(self, rng):
        spec = make_pad_spec((52, 8))
        v = rng.standard_normal((52, 8))
        assert np.array_equal(spec.strip(pad_values(v, spec)), v)


class TestMasks:
    SHAPE = (52, 8)

    def test_past_only_week_one_is_all_false(self):
        m = past_only_mask(1, self.SHAPE)
        assert m.n_observed == 0

    def test_past_only_marks_prefix(self):
        m = past_only_mask(10, self.SHAPE)
        assert m.observed[:9].all() and not m.observed[9:].any()
        assert m.is_past_only() and m.reference_week() == 10

    def test_past_only_out_of_range(self):
        with pytest.raises(ValueError):
            past_only_mask(0, self.SHAPE)
        with pytest.raises(ValueError):
            past_only_mask(53, self.SHAPE)

    def test_leave_one_out(self):
        m = leave_one_out_mask("L03", CODES, self.SHAPE)
        assert not m.observed[:, 3].any()
        assert m.observed[:, [i for i in range(8) if i != 3]].all()

    def test_leave_one_out_unknown_location(self):
        with pytest.raises(ValueError):
            leave_one_out_mask("NC", CODES, self.SHAPE)

    def test_half_map(self):
        m = half_map_mask(CODES[:4], CODES, self.SHAPE)
        assert m.observed[:, :4].all() and not m.observed[:, 4:].any()

    def test_midseason_gap(self):
        m = midseason_gap_mask(10, 14, self.SHAPE)
        assert not m.observed[9:13].any()
        assert m.observed[:9].all() and m.observed[13:].all()
        with pytest.raises(ValueError):
            midseason_gap_mask(14, 10, self.SHAPE)

    def test_checkerboard_fraction_by_enumeration(self):
        shape = (52, 51)
        m = checkerboard_mask(4, 4, shape)
        # independent enumeration oracle
        count = sum(((wi // 4 + li // 4) % 2 == 0)
                    for wi in range(52) for li in range(51))
        assert m.n_observed == count
        frac = m.n_observed / (52 * 51)
        assert 0.45 <= frac <= 0.55

    def test_checkerboard_rejects_nonpositive_blocks(self):
        with pytest.raises(ValueError):
            checkerboard_mask(0, 4, self.SHAPE)

    def test_complement_property(self):
        for m in (past_only_mask(20, self.SHAPE), checkerboard_mask(4, 4, self.SHAPE),
                  leave_one_out_mask("L00", CODES, self.SHAPE)):
            assert np.all(m.observed | m.hidden)
            assert not np.any(m.observed & m.hidden)

    def test_make_mask_dispatch(self):
        m = make_mask(MaskSpec("forecast_past_only", {"reference_week": 5}),
                      self.SHAPE, CODES)
        assert m.reference_week() == 5
        with pytest.raises(ValueError):
            make_mask(MaskSpec("bogus"), self.SHAPE, CODES)


class TestFrameCsv:
    def test_round_trip(self, rng, tmp_path):
        frames = [make_frame(rng.uniform(0, 100, (52, 8)), season=f"s{i}")
                  for i in range(3)]
        path = tmp_path / "frames.csv"
        frames_to_csv(frames, path)
        loaded = frames_from_csv(path)
        assert len(loaded) == 3
        for orig, back in zip(frames, loaded):
            assert np.allclose(back.values, orig.values)
            assert back.location_codes == orig.location_codes

    def test_incomplete_rejected(self, rng, tmp_path):
        import pandas as pd

        f = random_frame(rng)
        path = tmp_path / "frames.csv"
        frames_to_csv([f], path)
        df = pd.read_csv(path).iloc[:-1]  # drop one cell
        df.to_csv(path, index=False)
        with pytest.raises(DataError):
            frames_from_csv(path)
