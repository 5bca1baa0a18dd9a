"""Tail risk measures over sampled AE margins (higher margin = worse)."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import rng
from .errors import InvalidInputError, NumericFaultError
from .estimators import _reference, ae_margin_batch
from .model import Network
from .perturb import PerturbSpec, sample_batch
from .rng import RngKey

MEASURES = ("var", "cvar", "evar", "ess_sup")
GOLDEN_ITERS = 200
LOG_Z_RANGE = (-10.0, 10.0)


@dataclass
class MarginSample:
    values: np.ndarray
    seed: Optional[int] = None
    spec_ref: Optional[dict] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if v.size == 0:
            raise InvalidInputError("margin sample must be non-empty")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("margin sample must be finite")
        self.values = v


@dataclass
class RiskResult:
    measure: str
    alpha_or_rho: float
    value: float
    n: int
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        return {"measure": self.measure, "alpha_or_rho": self.alpha_or_rho,
                "value": self.value, "n": self.n, "seed": self.seed}


def _values(s) -> np.ndarray:
    return s.values if isinstance(s, MarginSample) else MarginSample(s).values


def _check_level(a: float, name: str = "alpha"):
    if not 0.0 < a <= 1.0:
        raise InvalidInputError(f"{name} must lie in (0, 1]")


def _tail_count(n: int, alpha: float) -> int:
    # Guard against alpha * n landing a hair above an integer.
    return max(1, math.ceil(alpha * n - 1e-9))


def var_alpha(s, alpha: float) -> float:
    """Value exceeded by an ``alpha`` fraction: descending sort, index ceil(alpha n) - 1."""
    _check_level(alpha)
    v = np.sort(_values(s))[::-1]
    return float(v[_tail_count(v.size, alpha) - 1])


def cvar_alpha(s, alpha: float) -> float:
    """Mean of the largest ceil(alpha n) values."""
    _check_level(alpha)
    v = np.sort(_values(s))[::-1]
    return float(np.mean(v[: _tail_count(v.size, alpha)]))


def _evar_objective(v: np.ndarray, log_z: float, log_inv_alpha: float) -> float:
    z = math.exp(log_z)
    val = (logsumexp(z * v) - math.log(v.size) + log_inv_alpha) / z
    if not math.isfinite(val):
        raise NumericFaultError("non-finite EVaR objective")
    return val


def _golden_min(f, a: float, b: float, iters: int):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return min(fc, fd, f(a), f(b))


def evar_alpha(s, alpha: float) -> float:
    """Entropic value-at-risk: inf over z > 0 of (log E[exp(z X)] + ln(1/alpha)) / z.

    Values are centred and scaled by their spread before the 1-D search over
    log z so that translation and positive scaling carry through exactly.
    """
    _check_level(alpha)
    v = _values(s)
    mean = float(np.mean(v))
    if alpha == 1.0:
        return mean
    spread = float(np.max(np.abs(v - mean)))
    if spread == 0.0:
        return mean
    w = (v - mean) / spread
    log_inv = math.log(1.0 / alpha)
    best = _golden_min(lambda lz: _evar_objective(w, lz, log_inv), *LOG_Z_RANGE, GOLDEN_ITERS)
    # The infimum never exceeds the sample maximum (z -> infinity limit).
    best = min(best, float(np.max(w)))
    return mean + spread * best


def ess_sup_rho(s, rho: float) -> float:
    """Smallest m such that at most a ``rho`` fraction of values exceed m."""
    _check_level(rho, "rho")
    v = np.sort(_values(s))[::-1]
    j = min(int(math.floor(rho * v.size + 1e-9)), v.size - 1)
    return float(v[j])


_FUNCS = {"var": var_alpha, "cvar": cvar_alpha, "evar": evar_alpha, "ess_sup": ess_sup_rho}


def risk_measure(s: MarginSample, measure: str, level: float) -> RiskResult:
    if measure not in _FUNCS:
        raise InvalidInputError(f"measure must be one of {MEASURES}")
    v = _values(s)
    seed = s.seed if isinstance(s, MarginSample) else None
    return RiskResult(measure, level, _FUNCS[measure](v, level), int(v.size), seed)


def sample_margins(net: Network, spec: PerturbSpec, n: int, seed: int = 0,
                   reference_label: Optional[int] = None) -> MarginSample:
    """Draw ``n`` perturbations and return their AE margins."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    ref, _ = _reference(net, spec, reference_label)
    X = sample_batch(spec, RngKey(seed).child(rng.MARGINS), np.arange(n, dtype=np.uint64))
    return MarginSample(ae_margin_batch(net, ref, X), seed=seed, spec_ref=spec.to_dict())
