"""Deterministic synthetic 2-D datasets and a flat CSV format."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInputError
from .model import LabeledPoint

BOX = 1.5


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    class_count: int
    seed: Optional[int] = None
    kind: str = "custom"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] == 0:
            raise InvalidInputError("dataset must be a non-empty 2-D array of points")
        if self.y.shape != (self.X.shape[0],):
            raise InvalidInputError("one label per point required")
        if np.any(self.y < 0) or np.any(self.y >= self.class_count):
            raise InvalidInputError("label out of range")
        if not np.all(np.isfinite(self.X)):
            raise InvalidInputError("features must be finite")

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def points(self):
        return [LabeledPoint(x, int(c)) for x, c in zip(self.X, self.y)]


def _finish(X, y, class_count, seed, kind, rng):
    perm = rng.permutation(len(y))
    X = np.clip(X[perm], -BOX, BOX)
    return Dataset(X, y[perm], class_count, seed, kind)


def make_moons(n: int, noise_sd: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaving half circles, shifted to be centred in [-1.5, 1.5]^2."""
    if n < 2:
        raise InvalidInputError("n must be >= 2")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    outer = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    inner = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
    X = np.concatenate([outer, inner]) - np.array([0.5, 0.25])
    if noise_sd > 0:
        X = X + rng.normal(0.0, noise_sd, size=X.shape)
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    return _finish(X, y, 2, seed, "moons", rng)


def make_circles(n: int, factor: float = 0.5, noise_sd: float = 0.05, seed: int = 0) -> Dataset:
    if n < 2:
        raise InvalidInputError("n must be >= 2")
    if not 0.0 < factor < 1.0:
        raise InvalidInputError("factor must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = np.linspace(0.0, 2 * np.pi, n0, endpoint=False)
    t1 = np.linspace(0.0, 2 * np.pi, n1, endpoint=False)
    X = np.concatenate([
        np.stack([np.cos(t0), np.sin(t0)], axis=1),
        factor * np.stack([np.cos(t1), np.sin(t1)], axis=1),
    ])
    if noise_sd > 0:
        X = X + rng.normal(0.0, noise_sd, size=X.shape)
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    return _finish(X, y, 2, seed, "circles", rng)


def make_blobs(n: int, centers: Sequence[Sequence[float]], sd: float = 0.1, seed: int = 0) -> Dataset:
    """Isotropic Gaussian blobs; class ``i`` is centred at ``centers[i]``."""
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[0] < 2:
        raise InvalidInputError("need at least two centers")
    k = centers.shape[0]
    if n < k:
        raise InvalidInputError("n must be at least the number of centers")
    rng = np.random.default_rng(seed)
    y = np.arange(n) % k
    y.sort()
    X = centers[y] + rng.normal(0.0, sd, size=(n, centers.shape[1]))
    return _finish(X, y.astype(np.int64), k, seed, "blobs", rng)


def split(ds: Dataset, train_fraction: float, seed: int = 0):
    if not 0.0 < train_fraction < 1.0:
        raise InvalidInputError("train_fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(len(ds))
    n_train = int(round(train_fraction * len(ds)))
    if n_train == 0 or n_train == len(ds):
        raise InvalidInputError("split leaves an empty part")
    a, b = perm[:n_train], perm[n_train:]
    return (Dataset(ds.X[a], ds.y[a], ds.class_count, seed, ds.kind),
            Dataset(ds.X[b], ds.y[b], ds.class_count, seed, ds.kind))


def write_csv(ds: Dataset, sink) -> None:
    own = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w", newline="") if own else sink
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"f{i}" for i in range(ds.dim)])
        for x, c in zip(ds.X, ds.y):
            w.writerow([int(c)] + [repr(float(v)) for v in x])
    finally:
        if own:
            fh.close()


def read_csv(source, class_count: Optional[int] = None) -> Dataset:
    own = isinstance(source, (str, os.PathLike))
    fh = open(source, newline="") if own else source
    try:
        rows = list(csv.reader(fh))
    finally:
        if own:
            fh.close()
    if not rows or rows[0][:1] != ["label"]:
        raise InvalidInputError("CSV must start with a 'label,f0,...' header")
    header = rows[0]
    if header[1:] != [f"f{i}" for i in range(len(header) - 1)]:
        raise InvalidInputError("feature columns must be named f0, f1, ...")
    body = [r for r in rows[1:] if r]
    if not body:
        raise InvalidInputError("dataset has no rows")
    try:
        y = np.array([int(r[0]) for r in body], dtype=np.int64)
        X = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise InvalidInputError(f"malformed CSV row: {exc}") from exc
    if X.shape[1] != len(header) - 1:
        raise InvalidInputError("row width does not match header")
    k = int(y.max()) + 1 if class_count is None else class_count
    return Dataset(X, y, max(k, 2))


def dumps_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    write_csv(ds, buf)
    return buf.getvalue()
