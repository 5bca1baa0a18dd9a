"""Ground-truth PR for low-dimensional and linear models."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from ._parallel import map_ranges
from .errors import InvalidInputError
from .model import Network, predict, predict_batch
from .perturb import PerturbSpec, contains_batch

CONV_GRID = 2 ** 15


@dataclass
class OracleResult:
    pr_exact: float
    method: str
    resolution: Optional[int] = None
    metadata: Optional[dict] = None

    def to_dict(self) -> dict:
        d = {"pr_exact": self.pr_exact, "method": self.method, "resolution": self.resolution}
        if self.metadata:
            d["metadata"] = self.metadata
        return d


def grid_points(spec: PerturbSpec, points_per_dim: int) -> np.ndarray:
    axes = [np.linspace(c - spec.radius, c + spec.radius, points_per_dim) for c in spec.center]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def grid_labels(net: Network, spec: PerturbSpec, points_per_dim: int):
    """Grid points inside the ball and their predicted labels."""
    pts = grid_points(spec, points_per_dim)
    if spec.norm == "l2":
        pts = pts[contains_batch(spec, pts)]
    labels = map_ranges(lambda a, b: predict_batch(net, pts[a:b]), 0, pts.shape[0])
    return pts, labels


def grid_pr(net: Network, spec: PerturbSpec, points_per_dim: int = 201,
            reference_label: Optional[int] = None) -> OracleResult:
    """Fraction of a regular grid over the ball that keeps the reference label."""
    if spec.dim > 3:
        raise InvalidInputError("grid oracle supports input dimension <= 3")
    if points_per_dim < 11 or points_per_dim % 2 == 0:
        raise InvalidInputError("points_per_dim must be odd and >= 11")
    if spec.dim != net.input_dim:
        raise InvalidInputError("perturbation dimension does not match the network")
    ref = predict(net, spec.center) if reference_label is None else int(reference_label)
    _, labels = grid_labels(net, spec, points_per_dim)
    return OracleResult(float(np.mean(labels == ref)), "grid", points_per_dim,
                        {"grid_points": int(labels.size), "reference_label": int(ref)})


def _uniform_masses(a: float, h: float) -> np.ndarray:
    """Cell masses of U(-a, a) on cells of width h centred at multiples of h."""
    if a < h / 2:
        return np.ones(1)
    k = int(math.ceil(a / h - 0.5))
    centers = np.arange(-k, k + 1) * h
    lo = np.maximum(centers - h / 2, -a)
    hi = np.minimum(centers + h / 2, a)
    return np.clip(hi - lo, 0.0, None) / (2 * a)


def linear_pr_analytic(w, b: float, center, radius: float, grid_size: int = CONV_GRID) -> OracleResult:
    """PR of the sign classifier ``w.x + b`` under independent U(-r, r) coordinate noise.

    The law of ``w.delta`` is obtained by convolving discretised uniform
    densities on a grid of ``grid_size`` cells; PR is the mass on the same
    side of the decision boundary as the center.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    center = np.asarray(center, dtype=np.float64).reshape(-1)
    if w.size > 16:
        raise InvalidInputError("linear oracle supports dimension <= 16")
    if w.size != center.size:
        raise InvalidInputError("w and center must have equal length")
    if not np.any(w != 0.0):
        raise InvalidInputError("w must be non-zero")
    if not radius > 0:
        raise InvalidInputError("radius must be positive")
    s0 = float(w @ center + b)
    if s0 == 0.0:
        return OracleResult(0.5, "linear_analytic", grid_size, {"cell_width": 0.0})
    halfwidths = np.abs(w) * radius
    R = float(halfwidths.sum())
    h = 2 * R / grid_size
    masses = np.ones(1)
    for a in halfwidths:
        if a > 0:
            masses = fftconvolve(masses, _uniform_masses(a, h))
    masses = np.clip(masses, 0.0, None)
    masses /= masses.sum()
    K = (masses.size - 1) // 2
    offsets = np.arange(-K, K + 1) * h
    # PR = P(s0 + S keeps its sign) = P(S > -s0) if s0 > 0 else P(S < -s0)
    t = -s0
    below = _cdf(masses, offsets, h, t)
    pr = 1.0 - below if s0 > 0 else below
    return OracleResult(float(min(1.0, max(0.0, pr))), "linear_analytic", grid_size,
                        {"cell_width": h, "accuracy": h * len(halfwidths)})


def _cdf(masses, offsets, h, t):
    """P(S < t) with each cell's mass spread uniformly over the cell."""
    lo = offsets - h / 2
    frac = np.clip((t - lo) / h, 0.0, 1.0)
    return float(np.sum(masses * frac))


def linear_net_weights(net: Network):
    """(w, b) of the binary sign classifier equivalent to a single-layer 2-class net."""
    if len(net.layers) != 1 or net.class_count != 2:
        raise InvalidInputError("linear oracle needs a single-layer two-class network")
    layer = net.layers[0]
    # class 1 wins iff (w1 - w0).x + (b1 - b0) > 0
    return layer.weights[1] - layer.weights[0], float(layer.bias[1] - layer.bias[0])
