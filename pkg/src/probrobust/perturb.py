"""Perturbation norm-balls and the local perturbation distribution."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError, RareEventError
from .rng import RngKey

NORMS = ("linf", "l2")
DISTRIBUTIONS = ("uniform", "trunc_gaussian")
CONTAINS_TOL = 1e-12
TRUNC_RETRY_CAP = 10_000


@dataclass(frozen=True)
class PerturbSpec:
    center: np.ndarray
    radius: float
    norm: str = "linf"
    distribution: str = "uniform"
    sigma: Optional[float] = None
    domain_box: Optional[np.ndarray] = None  # (d, 2) rows of [lo, hi]

    def __post_init__(self):
        c = np.array(self.center, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("center must be finite")
        r = float(self.radius)
        if not (np.isfinite(r) and r > 0.0):
            raise InvalidInputError("radius must be positive and finite")
        norm = self.norm.lower()
        if norm not in NORMS:
            raise InvalidInputError(f"norm must be one of {NORMS}")
        if self.distribution not in DISTRIBUTIONS:
            raise InvalidInputError(f"distribution must be one of {DISTRIBUTIONS}")
        if self.distribution == "trunc_gaussian":
            if self.sigma is None or not (float(self.sigma) > 0.0 and np.isfinite(self.sigma)):
                raise InvalidInputError("trunc_gaussian needs a positive sigma")
        box = None
        if self.domain_box is not None:
            box = np.array(self.domain_box, dtype=np.float64, copy=True)
            if box.shape != (c.size, 2):
                raise InvalidInputError(f"domain_box must have shape ({c.size}, 2)")
            if np.any(box[:, 0] > box[:, 1]):
                raise InvalidInputError("domain_box rows must satisfy lo <= hi")
            if np.any(c < box[:, 0]) or np.any(c > box[:, 1]):
                raise InvalidInputError("center lies outside domain_box")
            box.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)
        object.__setattr__(self, "norm", norm)
        object.__setattr__(self, "domain_box", box)

    @property
    def dim(self) -> int:
        return self.center.size

    def at(self, center) -> "PerturbSpec":
        """Same ball shape around a different center."""
        return PerturbSpec(center, self.radius, self.norm, self.distribution, self.sigma,
                           None if self.domain_box is None else _box_for(self.domain_box, center))

    def to_dict(self) -> dict:
        d = {
            "center": self.center.tolist(),
            "radius": self.radius,
            "norm": self.norm,
            "distribution": self.distribution,
        }
        if self.sigma is not None:
            d["sigma"] = float(self.sigma)
        if self.domain_box is not None:
            d["domain_box"] = self.domain_box.tolist()
        return d


def _box_for(box, center):
    # Drop the box if a relocated center falls outside it.
    center = np.asarray(center)
    if np.any(center < box[:, 0]) or np.any(center > box[:, 1]):
        return None
    return box


def norm_of(delta: np.ndarray, norm: str) -> np.ndarray:
    """Row-wise norm of a batch (or scalar norm of a vector)."""
    delta = np.asarray(delta, dtype=np.float64)
    if norm == "linf":
        return np.max(np.abs(delta), axis=-1)
    return np.sqrt(np.sum(delta * delta, axis=-1))


def _pairs(d: int) -> int:
    return 2 * ((d + 1) // 2)


def unit_ball(norm: str, dim: int, key: RngKey, indices) -> np.ndarray:
    """Volume-uniform draws in the unit ball of ``norm``, one row per counter."""
    indices = np.atleast_1d(np.asarray(indices, dtype=np.uint64))
    if norm == "linf":
        return 2.0 * key.uniforms(indices, dim) - 1.0
    z = key.normals(indices, dim)
    r = key.uniforms(indices, 1, sub_offset=_pairs(dim))[:, 0] ** (1.0 / dim)
    nz = np.sqrt(np.sum(z * z, axis=1))
    nz[nz == 0.0] = 1.0
    return z * (r / nz)[:, None]


def _trunc_gaussian(spec: PerturbSpec, key: RngKey, indices) -> np.ndarray:
    d = spec.dim
    n = indices.size
    out = np.empty((n, d))
    pending = np.arange(n)
    stride = _pairs(d)
    for attempt in range(TRUNC_RETRY_CAP):
        z = key.normals(indices[pending], d, sub_offset=attempt * stride) * float(spec.sigma)
        ok = norm_of(z, spec.norm) <= spec.radius
        out[pending[ok]] = z[ok]
        pending = pending[~ok]
        if pending.size == 0:
            return out
    raise RareEventError(
        f"truncated Gaussian rejection exceeded {TRUNC_RETRY_CAP} retries; sigma is too large for the radius"
    )


def sample_batch(spec: PerturbSpec, key: RngKey, indices, return_clamped: bool = False):
    """Draw ``x'`` for every counter in ``indices``; row ``i`` equals ``sample(spec, key, indices[i])``."""
    indices = np.atleast_1d(np.asarray(indices, dtype=np.uint64))
    if spec.distribution == "uniform":
        delta = spec.radius * unit_ball(spec.norm, spec.dim, key, indices)
    else:
        delta = _trunc_gaussian(spec, key, indices)
    x = spec.center + delta
    clamped = np.zeros(indices.size, dtype=bool)
    if spec.domain_box is not None:
        lo, hi = spec.domain_box[:, 0], spec.domain_box[:, 1]
        clamped = np.any((x < lo) | (x > hi), axis=1)
        x = np.clip(x, lo, hi)
    if return_clamped:
        return x, clamped
    return x


def sample(spec: PerturbSpec, key: RngKey, index: int) -> np.ndarray:
    return sample_batch(spec, key, [index])[0]


def contains(spec: PerturbSpec, x) -> bool:
    x = np.asarray(x, dtype=np.float64)
    return bool(norm_of(x - spec.center, spec.norm) <= spec.radius + CONTAINS_TOL)


def contains_batch(spec: PerturbSpec, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return norm_of(X - spec.center, spec.norm) <= spec.radius + CONTAINS_TOL


def project_to_ball(center, radius: float, norm: str, x) -> np.ndarray:
    """Nearest point of the ball (batch-aware)."""
    center = np.asarray(center, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if norm == "linf":
        return np.clip(x, center - radius, center + radius)
    delta = x - center
    nrm = norm_of(delta, "l2")
    outside = np.asarray(nrm > radius)
    scale = np.where(outside, radius / np.where(nrm > 0, nrm, 1.0), 1.0)
    # interior points come back untouched, not re-rounded through center + delta
    return np.where(outside[..., None], center + delta * scale[..., None], x)


def project(spec: PerturbSpec, x) -> np.ndarray:
    return project_to_ball(spec.center, spec.radius, spec.norm, x)


def clamp_to_box(spec: PerturbSpec, x) -> np.ndarray:
    if spec.domain_box is None:
        return np.asarray(x, dtype=np.float64)
    return np.clip(x, spec.domain_box[:, 0], spec.domain_box[:, 1])
