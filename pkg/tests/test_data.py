import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsespline.data import (DataSource, Dataset, HeaderError, MonotonicityError,
                               RaggedRowError, add_noise, load_csv, sample_collocation,
                               save_csv, savgol_diff, subsample, subsample_indices)
from sparsespline.errors import DataError, InvalidArgument


def sine_source(n=401, T=20.0):
    t = np.linspace(0, T, n)
    return DataSource(t, np.column_stack([np.sin(t), np.cos(t)]))


class TestNoise:
    def test_zero_level_identity(self):
        Y = np.random.default_rng(0).normal(size=(50, 3))
        assert np.array_equal(add_noise(Y, 0.0, 1), Y)

    def test_level_matches_rms_ratio(self):
        t = np.linspace(0, 100, 10_000)
        clean = np.sqrt(2) * np.sin(t)[:, None]
        noisy = add_noise(clean, 0.05, seed=3)
        ratio = np.sqrt(np.mean((noisy - clean) ** 2)) / np.sqrt(np.mean(clean ** 2))
        assert abs(ratio - 0.05) < 0.005

    def test_seeded(self):
        Y = np.ones((20, 2))
        assert np.array_equal(add_noise(Y, 0.1, 7), add_noise(Y, 0.1, 7))
        assert not np.array_equal(add_noise(Y, 0.1, 7), add_noise(Y, 0.1, 8))

    def test_negative_level(self):
        with pytest.raises(InvalidArgument):
            add_noise(np.ones((5, 1)), -0.1, 0)


class TestSubsample:
    def test_uniform_halves(self):
        src = DataSource(np.linspace(0, 2, 801), np.zeros((801, 1)))
        assert subsample(src, rate_hz=200).times.size == 401

    def test_random_200_keeps_endpoints(self):
        src = sine_source()
        sub = subsample(src, count=200, seed=4)
        assert sub.times.size == 200
        assert sub.times[0] == 0.0 and sub.times[-1] == 20.0
        assert np.all(np.diff(sub.times) > 0)

    def test_random_full_count(self):
        src = sine_source(n=50)
        assert np.array_equal(subsample(src, count=50).times, src.times)

    def test_too_many(self):
        with pytest.raises(InvalidArgument):
            subsample(sine_source(n=10), count=11)

    def test_non_divisor_rate(self):
        with pytest.raises(InvalidArgument):
            subsample(DataSource(np.linspace(0, 1, 101), np.zeros(101)), rate_hz=30)

    @settings(max_examples=40, deadline=None)
    @given(count=st.integers(4, 401), seed=st.integers(0, 10_000))
    def test_membership_and_order(self, count, seed):
        src = sine_source()
        idx = subsample_indices(src.times, count=count, seed=seed)
        assert idx.size == count
        assert np.all(np.diff(idx) > 0)
        sub = subsample(src, count=count, seed=seed)
        assert np.array_equal(sub.states, src.states[idx])


class TestCollocation:
    def test_bounds_and_sorted(self):
        tc = sample_collocation(20.0, 4010, seed=1)
        assert tc.size == 4010
        assert tc[0] == 0.0 and tc[-1] == 20.0
        assert np.all(np.diff(tc) >= 0)

    def test_seeded(self):
        assert np.array_equal(sample_collocation(3.0, 100, 5), sample_collocation(3.0, 100, 5))

    def test_rejects_zero(self):
        with pytest.raises(InvalidArgument):
            sample_collocation(1.0, 0, 0)


class TestSavgol:
    def test_cubic_reproduction(self):
        t = np.linspace(-1, 1, 201)
        y = 2 * t ** 3 - t ** 2 + 0.5 * t + 3
        smooth, d = savgol_diff(t, y[:, None], window=11, polyorder=3)
        assert np.abs(smooth[:, 0] - y).max() < 1e-10
        assert np.abs(d[:, 0] - (6 * t ** 2 - 2 * t + 0.5)).max() < 1e-9

    def test_sine_derivative(self):
        t = np.arange(0, 10, 0.01)
        _, d = savgol_diff(t, np.sin(t)[:, None], window=11, polyorder=3)
        assert np.abs(d[5:-5, 0] - np.cos(t[5:-5])).max() < 1e-4

    def test_second_derivative(self):
        t = np.arange(0, 5, 0.01)
        _, dd = savgol_diff(t, np.sin(t)[:, None], window=21, polyorder=5, deriv=2)
        assert np.abs(dd[10:-10, 0] + np.sin(t[10:-10])).max() < 1e-4

    @pytest.mark.parametrize("window, order", [(3, 3), (10, 3)])
    def test_bad_window(self, window, order):
        t = np.linspace(0, 1, 50)
        with pytest.raises(InvalidArgument):
            savgol_diff(t, t[:, None], window, order)

    def test_non_uniform(self):
        t = np.sort(np.random.default_rng(0).uniform(0, 1, 50))
        with pytest.raises(InvalidArgument):
            savgol_diff(t, t[:, None], 11, 3)


class TestDataTypes:
    def test_too_few_samples(self):
        with pytest.raises(DataError):
            DataSource(np.arange(3.0), np.zeros(3))

    def test_non_monotone(self):
        with pytest.raises(MonotonicityError):
            DataSource(np.array([0.0, 1.0, 1.0, 2.0]), np.zeros(4))

    def test_missing_values(self):
        with pytest.raises(DataError):
            DataSource(np.arange(5.0), np.array([0, 1, np.nan, 2, 3]))

    def test_merge_checks_names(self):
        a = Dataset([sine_source()], ("a", "b"))
        b = Dataset([sine_source()], ("a", "c"))
        with pytest.raises(DataError):
            Dataset.merge([a, b])
        assert len(Dataset.merge([a, a]).sources) == 2


class TestCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        t = np.cumsum(rng.uniform(0.01, 0.1, 30))
        src = DataSource(t, rng.normal(size=(30, 3)) * 1e3, rng.normal(size=(30, 1)))
        ds = Dataset([src], ("x", "y", "z"), ("tau",), {"system": "lorenz", "noise": 0.05})
        path = save_csv(ds, tmp_path / "d.csv")
        back = load_csv(path)
        assert back.state_names == ("x", "y", "z")
        assert back.input_names == ("tau",)
        assert np.array_equal(back.sources[0].times, t)
        assert np.array_equal(back.sources[0].states, src.states)
        assert np.array_equal(back.sources[0].inputs, src.inputs)
        assert back.meta == {"system": "lorenz", "noise": 0.05}

    def test_header_names(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("t,x,y,z\n0,1,2,3\n1,1,2,3\n2,1,2,3\n3,1,2,3\n")
        assert load_csv(p).state_names == ("x", "y", "z")

    def test_bad_header(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("time,x\n0,1\n")
        with pytest.raises(HeaderError):
            load_csv(p)

    def test_non_monotone_row(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("t,x\n0,1\n1,1\n0.5,1\n2,1\n3,1\n")
        with pytest.raises(MonotonicityError, match="row 3"):
            load_csv(p)

    def test_ragged_row(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("t,x,y\n0,1,2\n1,1\n")
        with pytest.raises(RaggedRowError) as info:
            load_csv(p)
        assert info.value.row == 2

    def test_errors_are_distinct(self):
        assert len({HeaderError, MonotonicityError, RaggedRowError}) == 3
        assert all(issubclass(e, DataError) for e in (HeaderError, MonotonicityError, RaggedRowError))
