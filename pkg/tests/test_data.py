import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probrobust.data import (Dataset, dumps_csv, make_blobs, make_circles, make_moons, read_csv,
                             split, write_csv)
from probrobust.errors import InvalidInputError


def test_moons_zero_noise_on_arcs():
    ds = make_moons(1000, 0.0, seed=4)
    x, y = ds.X[:, 0] + 0.5, ds.X[:, 1] + 0.25
    outer = ds.y == 0
    np.testing.assert_allclose(x[outer] ** 2 + y[outer] ** 2, 1.0, atol=1e-12)
    assert np.all(y[outer] >= -1e-12)
    np.testing.assert_allclose((x[~outer] - 1) ** 2 + (y[~outer] - 0.5) ** 2, 1.0, atol=1e-12)
    assert np.all(y[~outer] <= 0.5 + 1e-12)


@pytest.mark.parametrize("n", [2, 7, 100, 1001])
def test_label_balance(n):
    for ds in (make_moons(n, 0.1, seed=1), make_circles(n, 0.5, 0.05, seed=1)):
        counts = np.bincount(ds.y, minlength=2)
        assert sorted(counts) == [n // 2, n - n // 2]
        assert np.all(np.abs(ds.X) <= 1.5)


def test_generators_deterministic():
    for make in (lambda s: make_moons(200, 0.2, s), lambda s: make_circles(200, 0.4, 0.1, s),
                 lambda s: make_blobs(200, [[0, 0], [1, 1], [-1, 1]], 0.2, s)):
        assert dumps_csv(make(5)) == dumps_csv(make(5))
        assert dumps_csv(make(5)) != dumps_csv(make(6))


def test_blobs_separable_by_perceptron():
    ds = make_blobs(400, [[-1.0, -1.0], [1.0, 1.0]], sd=0.05, seed=0)
    X = np.hstack([ds.X, np.ones((len(ds), 1))])
    t = np.where(ds.y == 1, 1.0, -1.0)
    w = np.zeros(3)
    for _ in range(100):
        wrong = np.flatnonzero(np.sign(X @ w) != t)
        if wrong.size == 0:
            break
        w += t[wrong[0]] * X[wrong[0]]
    assert np.all(np.sign(X @ w) == t)


def test_split_deterministic_and_disjoint():
    ds = make_moons(101, 0.1, seed=0)
    a, b = split(ds, 0.7, seed=3)
    a2, _ = split(ds, 0.7, seed=3)
    assert len(a) == 71 and len(b) == 30
    np.testing.assert_array_equal(a.X, a2.X)
    both = np.vstack([a.X, b.X])
    assert len({tuple(r) for r in both}) == len({tuple(r) for r in ds.X})
    with pytest.raises(InvalidInputError):
        split(ds, 1.0)


def test_csv_round_trip(tmp_path):
    ds = make_moons(50, 0.3, seed=9)
    write_csv(ds, tmp_path / "d.csv")
    back = read_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)
    text = (tmp_path / "d.csv").read_text()
    assert text.splitlines()[0] == "label,f0,f1"
    assert dumps_csv(back) == text


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.floats(allow_nan=False, allow_infinity=False),
                          st.floats(allow_nan=False, allow_infinity=False)), min_size=1, max_size=20))
def test_csv_round_trip_any_floats(rows):
    ds = Dataset([[a, b] for _, a, b in rows], [c for c, _, _ in rows], 4)
    back = read_csv(io.StringIO(dumps_csv(ds)), class_count=4)
    assert back.X.tobytes() == ds.X.tobytes()


@pytest.mark.parametrize("text", ["", "x,f0\n0,1\n", "label,f0\n", "label,f0\n0,abc\n",
                                  "label,f0,f1\n0,1\n", "label,f1\n0,1\n", "label,f0\n-1,0.5\n"])
def test_read_csv_rejects_malformed(text):
    with pytest.raises(InvalidInputError):
        read_csv(io.StringIO(text))


def test_dataset_invariants():
    with pytest.raises(InvalidInputError):
        Dataset(np.zeros((0, 2)), [], 2)
    with pytest.raises(InvalidInputError):
        Dataset([[0.0]], [2], 2)
    ds = make_moons(10, 0.1)
    assert ds.dim == 2 and len(ds.points) == 10 and ds.points[0].label == ds.y[0]
