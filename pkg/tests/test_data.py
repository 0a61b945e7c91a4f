import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mega_merge.data import Dataset, gen_synthetic, load_csv, split
from mega_merge.errors import ConfigError, DataError


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_basic(self, tmp_path):
        p = write(tmp_path, "a,y,b\n1,0,2\n3,1,4\n5,2,6\n7,0,8\n")
        ds = load_csv(p, "y")
        assert ds.X.shape == (4, 2)
        assert ds.X[:, 0].tolist() == [1, 3, 5, 7]
        assert ds.X[:, 1].tolist() == [2, 4, 6, 8]
        assert ds.y.tolist() == [0, 1, 2, 0]
        assert ds.n_classes == 3

    def test_missing_header(self, tmp_path):
        p = write(tmp_path, "1,0,2\n3,1,4\n")
        with pytest.raises(DataError):
            load_csv(p, "y")

    def test_numeric_header_rejected(self, tmp_path):
        p = write(tmp_path, "1,2\n3,1\n")
        with pytest.raises(DataError):
            load_csv(p, "2")

    @pytest.mark.parametrize(
        "text,row",
        [
            ("a,y\n1,0\n2\n", "row 3"),
            ("a,y\n1,0\nx,1\n", "row 3"),
            ("a,y\n1,0\n2,1.5\n", "row 3"),
            ("a,y\n1,-1\n", "row 2"),
        ],
    )
    def test_bad_rows_name_the_row(self, tmp_path, text, row):
        with pytest.raises(DataError, match=row):
            load_csv(write(tmp_path, text), "y")


class TestSplit:
    def test_45000_5000_split_sizes(self):
        ds = Dataset(np.zeros((50_000, 1)), np.zeros(50_000, dtype=int), 1)
        s = split(ds, 0.1, 0.0, seed=0)
        assert (len(s.train_idx), len(s.val_idx), len(s.test_idx)) == (45_000, 5_000, 0)

    def test_deterministic(self):
        ds = gen_synthetic("two_moons", 100, 0.1, seed=0)
        a = split(ds, 0.2, 0.1, seed=4)
        b = split(ds, 0.2, 0.1, seed=4)
        for p in ("train_idx", "val_idx", "test_idx"):
            assert np.array_equal(getattr(a, p), getattr(b, p))

    def test_empty_val_errors_when_required(self):
        ds = split(gen_synthetic("two_moons", 100, 0.1, seed=0), 0.0, 0.0, seed=0)
        with pytest.raises(DataError):
            ds.require("val")

    def test_fraction_too_small_for_n(self):
        ds = gen_synthetic("two_moons", 10, 0.1, seed=0)
        with pytest.raises(DataError):
            split(ds, 0.01, 0.0, seed=0)

    @pytest.mark.parametrize("v,t", [(1.0, 0.0), (-0.1, 0.0), (0.6, 0.5)])
    def test_bad_fractions(self, v, t):
        with pytest.raises(ConfigError):
            split(gen_synthetic("two_moons", 20, 0.1, seed=0), v, t, seed=0)

    def test_unknown_partition(self):
        ds = split(gen_synthetic("two_moons", 20, 0.1, seed=0), 0.2, 0.0, seed=0)
        with pytest.raises(ConfigError):
            ds.partition("holdout")

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(10, 500), v=st.floats(0, 0.45), t=st.floats(0, 0.45), seed=st.integers(0, 2**64 - 1))
    def test_disjoint_and_covering(self, n, v, t, seed):
        ds = Dataset(np.zeros((n, 1)), np.zeros(n, dtype=int), 1)
        try:
            s = split(ds, v, t, seed)
        except DataError:
            return
        allidx = np.concatenate([s.train_idx, s.val_idx, s.test_idx])
        assert sorted(allidx.tolist()) == list(range(n))


class TestSynthetic:
    @pytest.mark.parametrize("kind,c", [("two_moons", 2), ("gaussian_blobs", 2), ("concentric_rings", 3)])
    def test_shape_and_classes(self, kind, c):
        ds = gen_synthetic(kind, 60, 0.1, seed=1)
        assert ds.X.shape == (60, 2)
        assert ds.n_classes == c
        assert set(ds.y.tolist()) == set(range(c))

    def test_same_seed_same_data(self):
        a = gen_synthetic("concentric_rings", 90, 0.2, seed=5)
        b = gen_synthetic("concentric_rings", 90, 0.2, seed=5)
        assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()

    def test_two_moons_balance(self):
        ds = gen_synthetic("two_moons", 1000, 0.15, seed=0)
        assert np.bincount(ds.y).tolist() == [500, 500]

    def test_zero_noise_blobs_are_separable(self):
        ds = gen_synthetic("gaussian_blobs", 50, 0.0, seed=0)
        # the line x0 + x1 = 0 separates the two centers
        assert np.array_equal((ds.X.sum(axis=1) > 0).astype(int), ds.y)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            gen_synthetic("spirals", 100, 0.1, seed=0)

    def test_small_n(self):
        with pytest.raises(ConfigError):
            gen_synthetic("two_moons", 5, 0.1, seed=0)
