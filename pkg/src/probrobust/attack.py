"""Adversarial search and adversarial training.

Besides a standard PGD attack this module implements a "widest peak" inner
maximisation: find an adversarial point that centres the largest sub-ball in
which every input is adversarial. Training can target either the highest-loss
point (AT for worst-case robustness) or the widest peak (AT for PR).
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import rng
from .errors import InvalidInputError, NumericFaultError
from .estimators import ae_margin_batch, mc_estimate
from .model import (Network, grad_input_batch, loss_and_grads, loss_ce_batch,
                    predict, predict_batch, sgd_step)
from .perturb import PerturbSpec, norm_of, project_to_ball, unit_ball
from .rng import RngKey

MODES = ("standard", "rand_aug", "at_ar", "at_pr")


@dataclass
class PgdResult:
    best_point: np.ndarray
    best_loss: float
    is_ae: bool
    n_model_evals: int


@dataclass
class AeCheck:
    all_ae: bool
    first_counterexample: Optional[np.ndarray]
    n: int
    check_confidence: float
    max_non_ae_fraction: float


@dataclass
class InnerMaxResult:
    delta: np.ndarray
    k: float
    found: bool
    candidate: np.ndarray
    check_samples: int
    check_confidence: float
    n_candidates: int = 0
    n_model_evals: int = 0


@dataclass
class TrainConfig:
    mode: str = "standard"
    gamma: float = 0.1
    epochs: int = 50
    lr: float = 0.1
    batch_size: int = 32
    lambda_mix: float = 0.5
    pgd_steps: int = 10
    pgd_step_size: Optional[float] = None  # defaults to gamma / 4
    restarts: int = 5
    bisect_iters: int = 8
    check_n: int = 100
    refine_iters: int = 6
    check_confidence: float = 0.95
    norm: str = "linf"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}")
        if not self.gamma > 0:
            raise InvalidInputError("gamma must be positive")
        if not self.lr >= 0:
            raise InvalidInputError("lr must be non-negative")
        if not 0.0 <= self.lambda_mix <= 1.0:
            raise InvalidInputError("lambda_mix must lie in [0, 1]")
        for name in ("epochs", "batch_size", "pgd_steps", "restarts", "bisect_iters", "check_n"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if self.refine_iters < 0:
            raise InvalidInputError("refine_iters must be >= 0")
        if self.norm not in ("linf", "l2"):
            raise InvalidInputError("norm must be linf or l2")
        if self.pgd_step_size is not None and not self.pgd_step_size > 0:
            raise InvalidInputError("pgd_step_size must be positive")

    @property
    def step_size(self) -> float:
        return self.gamma / 4 if self.pgd_step_size is None else self.pgd_step_size

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pgd_step_size"] = self.step_size
        return d


# ---------------------------------------------------------------------------
# PGD
# ---------------------------------------------------------------------------

def _clip_box(X, domain_box):
    if domain_box is None:
        return X
    box = np.asarray(domain_box, dtype=np.float64)
    return np.clip(X, box[:, 0], box[:, 1])


def _pgd_endpoints(net, x, y, gamma, steps, step_size, restarts, norm, domain_box, key):
    """Endpoints of PGD runs started at ``x`` and at ``restarts`` random ball points."""
    x = np.asarray(x, dtype=np.float64)
    starts = x + gamma * unit_ball(norm, x.size, key, np.arange(restarts, dtype=np.uint64))
    X = _clip_box(np.vstack([x[None, :], starts]), domain_box)
    for _ in range(steps):
        G = grad_input_batch(net, X, y)
        if norm == "linf":
            step = np.sign(G)
        else:
            gn = norm_of(G, "l2")
            step = G / np.where(gn > 0, gn, 1.0)[:, None]
        X = _clip_box(project_to_ball(x, gamma, norm, X + step_size * step), domain_box)
    return X, (restarts + 1) * steps


def pgd_attack(net: Network, x, y: int, gamma: float, steps: int = 10,
               step_size: Optional[float] = None, restarts: int = 5, norm: str = "linf",
               domain_box=None, seed: int = 0) -> PgdResult:
    """Projected gradient ascent on the cross-entropy of label ``y``."""
    if not gamma > 0:
        raise InvalidInputError("gamma must be positive")
    step_size = gamma / 4 if step_size is None else step_size
    X, evals = _pgd_endpoints(net, x, y, gamma, steps, step_size, restarts, norm, domain_box,
                              RngKey(seed).child(rng.PGD))
    losses = loss_ce_batch(net, X, [y])
    best = int(np.argmax(losses))
    point = X[best]
    return PgdResult(point, float(losses[best]), predict(net, point) != y, evals + X.shape[0] + 1)


# ---------------------------------------------------------------------------
# all-AE checks and the widest-peak inner maximisation
# ---------------------------------------------------------------------------

def _check_directions(norm: str, dim: int, n: int, key: RngKey) -> np.ndarray:
    return unit_ball(norm, dim, key, np.arange(n, dtype=np.uint64))


def _all_ae_many(net, centers, ks, ref, U):
    """For each (center, k): are all points center + k * U adversarial?"""
    C, n = centers.shape[0], U.shape[0]
    pts = (centers[:, None, :] + ks[:, None, None] * U[None, :, :]).reshape(C * n, -1)
    pred = predict_batch(net, pts).reshape(C, n)
    return np.all(pred != ref, axis=1), pts.reshape(C, n, -1), pred


def non_ae_bound(n: int, confidence: float) -> float:
    """Largest non-AE fraction that still passes n all-AE draws with prob. >= 1 - confidence."""
    return 1.0 - (1.0 - confidence) ** (1.0 / n)


def all_ae_check(net: Network, center, k: float, reference_label: int, n: int = 100,
                 seed: int = 0, norm: str = "linf", confidence: float = 0.95) -> AeCheck:
    """Statistical check that every point of the k-ball around ``center`` is adversarial."""
    if not k > 0:
        raise InvalidInputError("k must be positive")
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    center = np.asarray(center, dtype=np.float64)
    U = _check_directions(norm, center.size, n, RngKey(seed).child(rng.CHECK))
    ok, pts, pred = _all_ae_many(net, center[None, :], np.array([float(k)]), reference_label, U)
    first = None
    if not ok[0]:
        first = pts[0, int(np.argmax(pred[0] == reference_label))]
    return AeCheck(bool(ok[0]), first, n, confidence, non_ae_bound(n, confidence))


def _bisect_radii(net, centers, ref, U, gamma, iters):
    """Largest passing radius per center by bisection on (0, gamma]; returns (lo, hi)."""
    C = centers.shape[0]
    full, _, _ = _all_ae_many(net, centers, np.full(C, gamma), ref, U)
    lo = np.where(full, gamma, 0.0)
    hi = np.full(C, gamma)
    todo = ~full
    for _ in range(iters):
        if not np.any(todo):
            break
        idx = np.flatnonzero(todo)
        mid = 0.5 * (lo[idx] + hi[idx])
        ok, _, _ = _all_ae_many(net, centers[idx], mid, ref, U)
        lo[idx[ok]] = mid[ok]
        hi[idx[~ok]] = mid[~ok]
    return lo, hi


def _unit(v, norm):
    n = norm_of(v, norm)
    return v / np.where(n > 0, n, 1.0)[..., None] if v.ndim > 1 else (v / n if n > 0 else v)


def _refine(net, x, gamma, norm, ref, U, centers, lo, hi, iters, bisect_iters):
    """Move each candidate away from the non-AE points bordering its ball.

    A move is kept only if the re-bisected radius grows; a kept step is tried
    again, a rejected one halves. Radii are scored on the same check directions throughout.
    """
    res = gamma / 2 ** bisect_iters
    step = np.maximum(lo, res)
    for _ in range(iters):
        active = lo < gamma
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        _, pts, pred = _all_ae_many(net, centers[idx], hi[idx], ref, U)
        bad = pred == ref
        dirs = np.zeros((idx.size, centers.shape[1]))
        for j in range(idx.size):
            if np.any(bad[j]):
                dirs[j] = centers[idx[j]] - pts[j][bad[j]].mean(axis=0)
        dirs = _unit(dirs, norm)
        moved = project_to_ball(x, gamma, norm, centers[idx] + step[idx, None] * dirs)
        new_lo, new_hi = _bisect_radii(net, moved, ref, U, gamma, bisect_iters)
        still_ae = predict_batch(net, moved) != ref
        better = (new_lo > lo[idx]) & still_ae
        b = idx[better]
        centers[b], lo[b], hi[b] = moved[better], new_lo[better], new_hi[better]
        # keep a step that worked, halve one that did not
        w = idx[~better]
        step[w] = np.maximum(step[w] / 2, res)
    return centers, lo, hi


def inner_max_pr(net: Network, x, y: int, gamma: float, cfg: TrainConfig = None,
                 seed: Optional[int] = None, domain_box=None) -> InnerMaxResult:
    """Find the adversarial point centring the widest all-adversarial ball.

    AE status is relative to the clean prediction at ``x``. Candidates come
    from PGD endpoints and random ball samples; each is scored by bisection
    on its all-AE radius, then nudged away from the non-AE points on its
    border while the radius keeps growing. ``y`` is accepted for interface
    symmetry with :func:`pgd_attack`; the reference label is predicted.
    """
    if not gamma > 0:
        raise InvalidInputError("gamma must be positive")
    cfg = TrainConfig(gamma=gamma) if cfg is None else cfg
    seed = cfg.seed if seed is None else seed
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    norm = cfg.norm
    key = RngKey(seed).child(rng.INNER_MAX)
    ref = predict(net, x)

    pgd_pts, evals = _pgd_endpoints(net, x, ref, gamma, cfg.pgd_steps, cfg.step_size,
                                    cfg.restarts - 1, norm, domain_box, key.child(0))
    rand_pts = _clip_box(x + gamma * unit_ball(norm, d, key.child(1),
                                               np.arange(cfg.restarts, dtype=np.uint64)), domain_box)
    cands = np.vstack([pgd_pts, rand_pts])
    evals += 1 + cands.shape[0]
    cands = cands[predict_batch(net, cands) != ref]
    U = _check_directions(norm, d, cfg.check_n, key.child(2))
    empty = InnerMaxResult(np.zeros(d), 0.0, False, x.copy(), cfg.check_n, cfg.check_confidence,
                           0, evals)
    if cands.shape[0] == 0:
        return empty
    n_cands = cands.shape[0]
    lo, hi = _bisect_radii(net, cands, ref, U, gamma, cfg.bisect_iters)
    if cfg.refine_iters:
        cands, lo, hi = _refine(net, x, gamma, norm, ref, U, cands.copy(), lo, hi,
                                cfg.refine_iters, cfg.bisect_iters)
    if not np.any(lo > 0):
        empty.n_candidates = n_cands
        return empty
    margins = ae_margin_batch(net, ref, cands)
    # max k, then larger margin, then lower index
    best = int(np.lexsort((np.arange(n_cands), -margins, -lo))[0])
    cand = cands[best]
    return InnerMaxResult(cand - x, float(lo[best]), True, cand.copy(), cfg.check_n,
                          cfg.check_confidence, n_cands, evals)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    net: Network
    log: list = field(default_factory=list)


def _training_point(net, x, y, cfg: TrainConfig, seed: int):
    if cfg.mode == "at_ar":
        return pgd_attack(net, x, y, cfg.gamma, cfg.pgd_steps, cfg.step_size,
                          cfg.restarts, cfg.norm, seed=seed).best_point
    rand = x + cfg.gamma * unit_ball(cfg.norm, x.size, RngKey(seed).child(rng.TRAIN), [0])[0]
    if cfg.mode == "rand_aug":
        return rand
    res = inner_max_pr(net, x, y, cfg.gamma, cfg, seed=seed)
    return res.candidate if res.found else rand


def probe_pr(net: Network, X, gamma: float, n: int = 1000, norm: str = "linf", seed: int = 0) -> float:
    """Mean MC-estimated local PR over probe points."""
    prs = [mc_estimate(net, PerturbSpec(x, gamma, norm), n, seed=seed + i).pr_point
           for i, x in enumerate(np.asarray(X))]
    return float(np.mean(prs))


def train(net: Network, dataset, cfg: TrainConfig, probe=None, probe_n: int = 1000,
          on_epoch=None) -> TrainResult:
    """Minibatch SGD on ``(1 - lambda) * loss(x) + lambda * loss(chosen point)``.

    ``probe`` is an optional array of held-out points whose mean PR is
    logged each epoch. ``on_epoch`` is called with each log record.
    """
    X = np.asarray(dataset.X, dtype=np.float64)
    Y = np.asarray(dataset.y, dtype=np.int64)
    if X.shape[0] == 0:
        raise InvalidInputError("dataset is empty")
    if X.shape[1] != net.input_dim:
        raise InvalidInputError("dataset dimension does not match the network")
    if np.any(Y < 0) or np.any(Y >= net.class_count):
        raise InvalidInputError("labels out of range for the network")
    lam = cfg.lambda_mix
    log = []
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        perm = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            b = perm[start:start + cfg.batch_size]
            try:
                loss, grads = loss_and_grads(net, X[b], Y[b])
                if cfg.mode != "standard":
                    base = RngKey(cfg.seed).child(rng.TRAIN, epoch)
                    Xa = np.vstack([_training_point(net, X[i], int(Y[i]), cfg,
                                                    base.child(int(i)).stream)
                                    for i in b])
                    loss_a, grads_a = loss_and_grads(net, Xa, Y[b])
                    loss = (1.0 - lam) * loss + lam * loss_a
                    grads = [((1.0 - lam) * gw + lam * aw, (1.0 - lam) * gb + lam * ab)
                             for (gw, gb), (aw, ab) in zip(grads, grads_a)]
            except NumericFaultError as exc:
                raise NumericFaultError(
                    f"training diverged at epoch {epoch}, batch starting {start}: {exc}"
                ) from exc
            net = sgd_step(net, grads, cfg.lr)
            losses.append(loss)
        rec = {"epoch": epoch, "loss": float(np.mean(losses)),
               "clean_acc": float(np.mean(predict_batch(net, X) == Y))}
        if probe is not None:
            rec["mean_pr"] = probe_pr(net, probe, cfg.gamma, probe_n, cfg.norm, seed=cfg.seed)
        log.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    return TrainResult(net, log)

