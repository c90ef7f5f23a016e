import numpy as np
import pytest

from softs.data import (
    ForecastData,
    SeriesStandardizer,
    SplitSpec,
    load_csv,
    make_batches,
    n_windows,
    split,
    standardize,
    write_csv,
)
from softs.exceptions import DataFormatError, SplitError
from softs.experiments import find_dataset


def write_text(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_fixture_round_trip(self, tmp_path):
        path = write_text(tmp_path / "f.csv", "date,x,y\n2020-01-01 00:00:00,1.5,2\n2020-01-01 01:00:00,-3,4e-1\nt3,0,7\n")
        ds = load_csv(path)
        assert (ds.n_steps, ds.n_channels) == (3, 2)
        assert ds.channel_names == ["x", "y"]
        assert ds.timestamps[0] == "2020-01-01 00:00:00"
        np.testing.assert_array_equal(ds.values, [[1.5, 2.0], [-3.0, 0.4], [0.0, 7.0]])

    def test_blank_cell_names_row_and_column(self, tmp_path):
        path = write_text(tmp_path / "f.csv", "date,x,y\nt1,1,2\nt2,,4\n")
        with pytest.raises(DataFormatError, match=r"row 3, column 'x'"):
            load_csv(path)

    def test_non_numeric_cell(self, tmp_path):
        path = write_text(tmp_path / "f.csv", "date,x,y\nt1,1,abc\n")
        with pytest.raises(DataFormatError, match=r"row 2, column 'y'.*'abc'"):
            load_csv(path)

    def test_ragged_row(self, tmp_path):
        path = write_text(tmp_path / "f.csv", "date,x,y\nt1,1,2\nt2,3\n")
        with pytest.raises(DataFormatError, match="row 3 has 2 fields"):
            load_csv(path)

    def test_missing_header(self, tmp_path):
        path = write_text(tmp_path / "f.csv", "1,2,3\n4,5,6\n")
        with pytest.raises(DataFormatError, match="date"):
            load_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_csv(tmp_path / "nope.csv")

    def test_write_then_load(self, tmp_path, rng):
        values = rng.normal(size=(5, 3))
        write_csv(tmp_path / "w.csv", values, ["a", "b", "c"])
        np.testing.assert_array_equal(load_csv(tmp_path / "w.csv").values, values)

    def test_etth1_shape_when_available(self):
        path = find_dataset("ETTh1")
        if path is None:
            pytest.skip("ETTh1.csv not available (set SOFTS_DATA_DIR)")
        ds = load_csv(path)
        assert (ds.n_steps, ds.n_channels) == (17420, 7)


class TestSplit:
    def test_ratio_borders(self):
        ranges = split(100, SplitSpec(ratios=(0.7, 0.1, 0.2)), lookback=10)
        assert ranges == {"train": (0, 70), "val": (60, 80), "test": (70, 100)}

    def test_benchmark_counts_window_count(self):
        ranges = split(17420, SplitSpec.for_dataset("ETTh1.csv"), lookback=96, horizon=96)
        lo, hi = ranges["train"]
        assert n_windows(hi - lo, 96, 96) == 8545 - 96 - 96 + 1 == 8354
        assert ranges["val"] == (8545 - 96, 8545 + 2881)
        assert ranges["test"] == (8545 + 2881 - 96, 8545 + 2 * 2881)

    def test_zero_validation_is_an_error(self):
        with pytest.raises(SplitError):
            split(100, SplitSpec(ratios=(0.8, 0.0, 0.2)), lookback=10)
        with pytest.raises(SplitError):
            split(100, SplitSpec(counts=(80, 0, 20), ratios=None), lookback=10)

    def test_counts_exceeding_length(self):
        with pytest.raises(SplitError):
            split(100, SplitSpec(counts=(80, 20, 20), ratios=None), lookback=10)

    def test_split_too_short_for_window(self):
        with pytest.raises(SplitError, match="val"):
            split(100, SplitSpec(ratios=(0.7, 0.1, 0.2)), lookback=10, horizon=11)

    @pytest.mark.parametrize("T,L,H", [(100, 10, 5), (500, 24, 12), (17420, 96, 96)])
    def test_targets_stay_inside_nominal_split(self, T, L, H):
        spec = SplitSpec.for_dataset("ETTh1") if T == 17420 else SplitSpec()
        ranges = split(T, spec, L, H)
        nominal = {"train": ranges["train"][0], "val": ranges["train"][1], "test": ranges["val"][1]}
        values = np.arange(T, dtype=np.float64)[:, None]
        for name, rng_ in ranges.items():
            for batch in make_batches(values, rng_, L, H, 512):
                assert batch.Y.min() >= nominal[name]
                assert batch.Y.max() < rng_[1]


class TestStandardize:
    def test_constant_train_channel_maps_to_zero(self, rng):
        values = np.column_stack([np.full(50, 3.0), rng.normal(size=50)])
        scaled, _ = standardize(values, (0, 30))
        np.testing.assert_array_equal(scaled[:30, 0], 0.0)

    def test_standard_train_split_is_identity(self, rng):
        x = rng.normal(size=(40, 3))
        x = (x - x.mean(0)) / x.std(0)
        scaled, _ = standardize(x, (0, 40))
        np.testing.assert_allclose(scaled, x, atol=1e-6)

    def test_uses_only_train_statistics(self, rng):
        x = rng.normal(size=(60, 2))
        x[40:] += 100
        _, scaler = standardize(x, (0, 40))
        np.testing.assert_allclose(scaler.mean_, x[:40].mean(0))

    def test_round_trip(self, rng):
        x = rng.normal(5, 3, size=(80, 4))
        scaled, scaler = standardize(x, (0, 50))
        np.testing.assert_allclose(scaler.inverse_transform(scaled), x, atol=1e-5)

    def test_empty_range(self, rng):
        with pytest.raises(SplitError):
            standardize(rng.normal(size=(10, 2)), (5, 5))

    def test_standardizer_is_an_sklearn_transformer(self, rng):
        from sklearn.base import clone

        est = clone(SeriesStandardizer(std_floor=1e-6))
        assert est.get_params() == {"std_floor": 1e-6}
        out = est.fit_transform(rng.normal(size=(20, 3)))
        assert out.shape == (20, 3)


class TestBatches:
    def test_exactly_one_window(self, rng):
        values = rng.normal(size=(30, 2))
        batches = list(make_batches(values, (5, 5 + 8 + 4), 8, 4, batch_size=16))
        assert len(batches) == 1 and batches[0].X.shape == (1, 8, 2)

    def test_windows_reconstruct_range(self, rng):
        L, H = 6, 3
        values = rng.normal(size=(40, 2))
        lo, hi = 4, 4 + L + H + 5
        batches = list(make_batches(values, (lo, hi), L, H, batch_size=4))
        starts = np.concatenate([b.starts for b in batches])
        assert starts.tolist() == list(range(lo, lo + 6))
        seen = np.zeros(40, bool)
        for b in batches:
            for s, x, y in zip(b.starts, b.X, b.Y):
                np.testing.assert_array_equal(x, values[s : s + L].astype(np.float32))
                np.testing.assert_array_equal(y, values[s + L : s + L + H].astype(np.float32))
                seen[s : s + L + H] = True
        assert seen[lo:hi].all() and not seen[:lo].any() and not seen[hi:].any()
        assert [len(b.starts) for b in batches] == [4, 2]

    def test_shuffle_is_seeded_and_complete(self, rng):
        values = rng.normal(size=(100, 1))
        order = lambda seed: np.concatenate([b.starts for b in make_batches(values, (0, 100), 5, 5, 7, True, seed)])
        a, b, c = order(1), order(1), order(2)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert sorted(a.tolist()) == list(range(91))

    def test_empty_window_set(self, rng):
        with pytest.raises(SplitError):
            list(make_batches(rng.normal(size=(10, 1)), (0, 10), 8, 4, 4))


def test_forecast_data_from_raw(synthetic_csv):
    data = ForecastData.from_raw(load_csv(synthetic_csv), SplitSpec(), 8, 4)
    assert data.ranges == {"train": (0, 140), "val": (132, 160), "test": (152, 200)}
    assert data.n_windows("train") == 140 - 12 + 1
    train = data.values[:140]
    np.testing.assert_allclose(train.mean(0), 0, atol=1e-12)
    np.testing.assert_allclose(train.std(0), 1, atol=1e-12)
