"""Global PR metrics over an operational profile.

The input distribution is a mixture of weighted hyperrectangles, each sampled
uniformly or from the dataset rows that fall inside it.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from ._parallel import map_ranges
from .errors import ConfigError, InvalidInputError, RareEventError
from .estimators import BOUNDS, PrEstimate, _check_confidence, proportion_interval
from .model import Network, forward_batch, predict_batch
from .perturb import PerturbSpec, norm_of, sample_batch
from .rng import RngKey

SOURCES = ("uniform_in_box", "dataset_rows")
WEIGHT_TOL = 1e-9
MIN_ACCEPT_RATE = 1e-4


@dataclass
class Cell:
    box: np.ndarray
    weight: float
    source: str = "uniform_in_box"
    rows: Optional[np.ndarray] = None

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=np.float64)
        if self.box.ndim != 2 or self.box.shape[1] != 2:
            raise InvalidInputError("cell box must be a list of [lo, hi] pairs")
        if np.any(self.box[:, 0] >= self.box[:, 1]):
            raise InvalidInputError("cell boxes must satisfy lo < hi in every dimension")
        if not self.weight >= 0.0:
            raise InvalidInputError("cell weight must be non-negative")
        if self.source not in SOURCES:
            raise InvalidInputError(f"cell source must be one of {SOURCES}")
        if self.source == "dataset_rows":
            if self.rows is None or len(self.rows) == 0:
                raise ConfigError("dataset_rows cell has no dataset rows inside its box")
            self.rows = np.asarray(self.rows, dtype=np.float64)


@dataclass
class Partition:
    cells: list

    def __post_init__(self):
        if not self.cells:
            raise InvalidInputError("partition needs at least one cell")
        dims = {c.box.shape[0] for c in self.cells}
        if len(dims) != 1:
            raise InvalidInputError("all cells must share a dimension")
        total = sum(c.weight for c in self.cells)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise InvalidInputError(f"cell weights sum to {total}, expected 1")

    @property
    def dim(self) -> int:
        return self.cells[0].box.shape[0]

    def sample(self, key: RngKey, indices) -> np.ndarray:
        """One input per counter: pick a cell by weight, then a point within it."""
        indices = np.atleast_1d(np.asarray(indices, dtype=np.uint64))
        u = key.uniforms(indices, 1 + self.dim)
        cum = np.cumsum([c.weight for c in self.cells])
        which = np.minimum(np.searchsorted(cum, u[:, 0] * cum[-1], side="right"), len(self.cells) - 1)
        X = np.empty((indices.size, self.dim))
        for ci, cell in enumerate(self.cells):
            sel = which == ci
            if not np.any(sel):
                continue
            if cell.source == "uniform_in_box":
                lo, hi = cell.box[:, 0], cell.box[:, 1]
                X[sel] = lo + u[sel, 1:] * (hi - lo)
            else:
                r = np.minimum((u[sel, 1] * len(cell.rows)).astype(np.int64), len(cell.rows) - 1)
                X[sel] = cell.rows[r]
        return X

    def to_dict(self) -> dict:
        return {"cells": [{"box": c.box.tolist(), "weight": c.weight, "source": c.source}
                          for c in self.cells]}


def partition_from_dict(doc: dict, dataset_X: Optional[np.ndarray] = None) -> Partition:
    if not isinstance(doc, dict) or "cells" not in doc:
        raise ConfigError("partition document needs a 'cells' list")
    extra = set(doc) - {"cells", "dataset"}
    if extra:
        raise ConfigError(f"unknown partition fields: {sorted(extra)}")
    cells = []
    for spec in doc["cells"]:
        extra = set(spec) - {"box", "weight", "source"}
        if extra:
            raise ConfigError(f"unknown cell fields: {sorted(extra)}")
        source = spec.get("source", "uniform_in_box")
        box = np.asarray(spec["box"], dtype=np.float64)
        rows = None
        if source == "dataset_rows":
            if dataset_X is None:
                raise ConfigError("dataset_rows cells need a dataset")
            inside = np.all((dataset_X >= box[:, 0]) & (dataset_X <= box[:, 1]), axis=1)
            rows = dataset_X[inside]
        cells.append(Cell(box, float(spec["weight"]), source, rows))
    return Partition(cells)


def load_partition(path, dataset_X: Optional[np.ndarray] = None) -> Partition:
    with open(path) as fh:
        doc = json.load(fh)
    if dataset_X is None and doc.get("dataset"):
        from .data import read_csv

        ds_path = os.path.join(os.path.dirname(os.fspath(path)), doc["dataset"])
        dataset_X = read_csv(ds_path).X
    return partition_from_dict(doc, dataset_X)


def tsr_estimate(net: Network, partition: Partition, spec_template: dict, n: int,
                 confidence: float = 0.95, bound: str = "clopper_pearson", seed: int = 0,
                 threads: Optional[int] = None) -> PrEstimate:
    """Joint Monte Carlo estimate of total statistical robustness.

    Each draw picks an input from the partition, a perturbation around it, and
    checks that the prediction at the perturbed point matches the prediction at
    the input itself.
    """
    t0 = time.perf_counter()
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    _check_confidence(confidence)
    if bound not in BOUNDS:
        raise InvalidInputError(f"bound must be one of {BOUNDS}")
    if partition.dim != net.input_dim:
        raise InvalidInputError("partition dimension does not match the network")
    base = PerturbSpec(np.zeros(partition.dim), **spec_template)
    key = RngKey(seed).child(rng.TSR)

    def chunk(a, b):
        idx = np.arange(a, b, dtype=np.uint64)
        X = partition.sample(key.child(0), idx)
        Xp = X + sample_batch(base, key.child(1), idx)
        return (predict_batch(net, X) != predict_batch(net, Xp)).astype(np.int8)

    ae = map_ranges(chunk, 0, n, threads=threads)
    n_ae = int(ae.sum())
    ae_lo, ae_hi = proportion_interval(n_ae, n, confidence, bound)
    return PrEstimate(
        pr_point=(n - n_ae) / n, ci_low=1.0 - ae_hi, ci_high=1.0 - ae_lo,
        confidence=confidence, n_model_evals=2 * n, method=f"tsr_{bound}", seed=seed,
        runtime_ms=int((time.perf_counter() - t0) * 1000),
        metadata={"bound": bound, "ae_count": n_ae, "cells": len(partition.cells)},
    )


@dataclass(frozen=True)
class LipschitzConfig:
    gamma: float
    k: float
    eps_target: float = 0.05
    pair_budget: int = 10_000
    input_norm: str = "l2"
    max_draws: int = 10_000_000

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidInputError("gamma must be positive")
        if not self.k > 0:
            raise InvalidInputError("k must be positive")
        if not 0.0 < self.eps_target < 1.0:
            raise InvalidInputError("eps_target must lie in (0, 1)")
        if self.pair_budget < 1:
            raise InvalidInputError("pair_budget must be >= 1")
        if self.input_norm not in ("l2", "linf"):
            raise InvalidInputError("input_norm must be l2 or linf")


@dataclass
class LipschitzResult:
    estimate: PrEstimate
    verdict: str  # pass | fail
    pairs_accepted: int
    pairs_drawn: int

    def to_dict(self) -> dict:
        return {"estimate": self.estimate.to_dict(), "verdict": self.verdict,
                "pairs_accepted": self.pairs_accepted, "pairs_drawn": self.pairs_drawn}


def _close_pairs(partition: Partition, cfg: LipschitzConfig, key: RngKey):
    round_size = 65536
    kept_a, kept_b = [], []
    accepted = drawn = 0
    while accepted < cfg.pair_budget and drawn < cfg.max_draws:
        m = min(round_size, cfg.max_draws - drawn)
        idx = np.arange(drawn, drawn + m, dtype=np.uint64)
        A = partition.sample(key.child(0), idx)
        B = partition.sample(key.child(1), idx)
        close = norm_of(A - B, cfg.input_norm) <= cfg.gamma
        kept_a.append(A[close])
        kept_b.append(B[close])
        accepted += int(close.sum())
        drawn += m
        if drawn >= 100_000 and accepted / drawn < MIN_ACCEPT_RATE:
            break
    if accepted == 0 or accepted / drawn < MIN_ACCEPT_RATE:
        raise RareEventError(
            f"gamma too small for rejection sampling: {accepted} of {drawn} pairs were gamma-close"
        )
    A = np.concatenate(kept_a)[: cfg.pair_budget]
    B = np.concatenate(kept_b)[: cfg.pair_budget]
    return A, B, drawn


def lipschitz_estimate(net: Network, partition: Partition, cfg: LipschitzConfig,
                       confidence: float = 0.95, seed: int = 0) -> LipschitzResult:
    """Probability that gamma-close input pairs satisfy the k-Lipschitz bound on logits."""
    t0 = time.perf_counter()
    _check_confidence(confidence)
    if partition.dim != net.input_dim:
        raise InvalidInputError("partition dimension does not match the network")
    A, B, drawn = _close_pairs(partition, cfg, RngKey(seed).child(rng.LIPSCHITZ))
    n = A.shape[0]
    out_dist = norm_of(forward_batch(net, A) - forward_batch(net, B), "l2")
    in_dist = norm_of(A - B, cfg.input_norm)
    holds = int(np.sum(out_dist <= cfg.k * in_dist))
    lo, hi = proportion_interval(holds, n, confidence, "clopper_pearson")
    est = PrEstimate(
        pr_point=holds / n, ci_low=lo, ci_high=hi, confidence=confidence,
        n_model_evals=2 * n, method="lipschitz_clopper_pearson", seed=seed,
        runtime_ms=int((time.perf_counter() - t0) * 1000),
        metadata={"gamma": cfg.gamma, "k": cfg.k, "eps_target": cfg.eps_target,
                  "input_norm": cfg.input_norm},
    )
    verdict = "pass" if lo >= 1.0 - cfg.eps_target else "fail"
    return LipschitzResult(est, verdict, n, drawn)
