"""Statistical estimators of local probabilistic robustness.

PR is the probability that a perturbed input keeps the reference label.
Every estimator returns a :class:`PrEstimate` whose interval refers to PR;
the adversarial-example (AE) proportion is ``1 - PR``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from . import _kernels, rng
from ._parallel import map_ranges
from .errors import InvalidInputError, NumericFaultError, RareEventError
from .model import Network, forward_batch, predict
from .perturb import PerturbSpec, contains_batch, sample_batch, unit_ball
from .rng import RngKey

BOUNDS = ("hoeffding", "clopper_pearson", "chernoff_rel")


@dataclass
class PrEstimate:
    pr_point: float
    ci_low: float
    ci_high: float
    confidence: float
    n_model_evals: int
    method: str
    seed: int
    runtime_ms: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ci_low = min(max(0.0, self.ci_low), self.pr_point)
        self.ci_high = max(min(1.0, self.ci_high), self.pr_point)

    @property
    def ae_point(self) -> float:
        return 1.0 - self.pr_point

    def to_dict(self) -> dict:
        return {
            "pr_point": self.pr_point,
            "ae_point": self.ae_point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "confidence": self.confidence,
            "n_model_evals": self.n_model_evals,
            "method": self.method,
            "seed": self.seed,
            "runtime_ms": self.runtime_ms,
            "metadata": self.metadata,
        }


@dataclass
class SeqDecision:
    verdict: str  # pr_at_least_threshold | pr_below_threshold | undecided
    threshold: float
    estimate: PrEstimate
    samples_used: int
    max_samples: int
    looks: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "threshold": self.threshold,
            "estimate": self.estimate.to_dict(),
            "samples_used": self.samples_used,
            "max_samples": self.max_samples,
            "looks": self.looks,
        }


@dataclass(frozen=True)
class AmlsConfig:
    n_particles: int = 1000
    level_fraction: float = 0.1
    mh_steps: int = 20
    proposal_scale: float = 0.2
    max_levels: int = 50
    adapt: bool = True

    def __post_init__(self):
        if self.n_particles < 10:
            raise InvalidInputError("n_particles must be >= 10")
        if not 0.0 < self.level_fraction < 1.0:
            raise InvalidInputError("level_fraction must lie in (0, 1)")
        if self.mh_steps < 1:
            raise InvalidInputError("mh_steps must be >= 1")
        if not self.proposal_scale > 0.0:
            raise InvalidInputError("proposal_scale must be positive")
        if self.max_levels < 1:
            raise InvalidInputError("max_levels must be >= 1")


# ---------------------------------------------------------------------------
# indicator and margin
# ---------------------------------------------------------------------------

def _logits(net: Network, X) -> np.ndarray:
    z = forward_batch(net, X)
    if not np.all(np.isfinite(z)):
        raise NumericFaultError("non-finite logits")
    return z


def ae_indicator_batch(net: Network, reference_label: int, X) -> np.ndarray:
    """1 where the prediction differs from ``reference_label``."""
    return (np.argmax(_logits(net, X), axis=1) != reference_label).astype(np.int8)


def ae_margin_batch(net: Network, reference_label: int, X) -> np.ndarray:
    """Best wrong-class logit minus the reference logit."""
    z = _logits(net, X)
    return _kernels.margins(z, np.full(z.shape[0], reference_label, dtype=np.int64))


def _margin_and_indicator(net, reference_label, X):
    z = _logits(net, X)
    m = _kernels.margins(z, np.full(z.shape[0], reference_label, dtype=np.int64))
    return m, (np.argmax(z, axis=1) != reference_label)


def ae_indicator(net: Network, spec: PerturbSpec, reference_label: int, x) -> int:
    return int(ae_indicator_batch(net, reference_label, np.asarray(x, dtype=np.float64)[None, :])[0])


def ae_margin(net: Network, spec: PerturbSpec, reference_label: int, x) -> float:
    return float(ae_margin_batch(net, reference_label, np.asarray(x, dtype=np.float64)[None, :])[0])


def _reference(net, spec, reference_label):
    if spec.dim != net.input_dim:
        raise InvalidInputError(f"perturbation dimension {spec.dim} != network input_dim {net.input_dim}")
    if reference_label is None:
        return predict(net, spec.center), 1
    if not 0 <= int(reference_label) < net.class_count:
        raise InvalidInputError("reference label out of range")
    return int(reference_label), 0


# ---------------------------------------------------------------------------
# confidence intervals on a proportion
# ---------------------------------------------------------------------------

def hoeffding_halfwidth(n: int, confidence: float) -> float:
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))


def clopper_pearson(k: int, n: int, confidence: float):
    """Exact two-sided binomial interval for ``k`` successes out of ``n``."""
    alpha = 1.0 - confidence
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def chernoff_interval(k: int, n: int, confidence: float):
    """Interval on a Bernoulli mean from the multiplicative Chernoff bounds.

    Failure probability is split evenly between the two tails. The upper end
    inverts ``exp(-eps^2 mu / 2)`` and the lower end ``exp(-eps^2 mu / (2 + eps))``
    for the count mean ``mu = n p``.
    """
    L = math.log(2.0 / (1.0 - confidence))
    mu_hi = k + L + math.sqrt(L * L + 2.0 * k * L)
    mu_lo = (2.0 * k + L - math.sqrt(L * L + 8.0 * k * L)) / 2.0
    return max(0.0, mu_lo / n), min(1.0, mu_hi / n)


def proportion_interval(k: int, n: int, confidence: float, bound: str):
    """Interval for the success probability behind ``k`` of ``n``."""
    if bound == "hoeffding":
        eps = hoeffding_halfwidth(n, confidence)
        p = k / n
        return max(0.0, p - eps), min(1.0, p + eps)
    if bound == "clopper_pearson":
        return clopper_pearson(k, n, confidence)
    if bound == "chernoff_rel":
        return chernoff_interval(k, n, confidence)
    raise InvalidInputError(f"bound must be one of {BOUNDS}")


def _check_confidence(confidence):
    if not 0.0 < confidence < 1.0:
        raise InvalidInputError("confidence must lie in (0, 1)")


# ---------------------------------------------------------------------------
# simple Monte Carlo
# ---------------------------------------------------------------------------

def _ae_counts(net, spec, key, ref, start, stop, threads=None):
    def chunk(a, b):
        X, clamped = sample_batch(spec, key, np.arange(a, b, dtype=np.uint64), return_clamped=True)
        ae = ae_indicator_batch(net, ref, X)
        return np.stack([ae, clamped.astype(np.int8)], axis=1)

    out = map_ranges(chunk, start, stop, threads=threads)
    return out.reshape(-1, 2)


def mc_estimate(net: Network, spec: PerturbSpec, n: int, confidence: float = 0.95,
                bound: str = "clopper_pearson", seed: int = 0,
                reference_label: Optional[int] = None, threads: Optional[int] = None) -> PrEstimate:
    """Fixed-sample Monte Carlo estimate of PR with a two-sided interval."""
    t0 = time.perf_counter()
    if int(n) < 1:
        raise InvalidInputError("n must be >= 1")
    _check_confidence(confidence)
    if bound not in BOUNDS:
        raise InvalidInputError(f"bound must be one of {BOUNDS}")
    ref, evals = _reference(net, spec, reference_label)
    key = RngKey(seed).child(rng.MC)
    res = _ae_counts(net, spec, key, ref, 0, n, threads)
    n_ae = int(res[:, 0].sum())
    n_safe = n - n_ae
    # Intervals are built on the AE proportion (the small quantity for the
    # relative Chernoff form) and mirrored onto PR.
    ae_lo, ae_hi = proportion_interval(n_ae, n, confidence, bound)
    meta = {"bound": bound, "reference_label": ref, "ae_count": n_ae}
    n_clamped = int(res[:, 1].sum())
    if n_clamped:
        meta["clamped_samples"] = n_clamped
    return PrEstimate(
        pr_point=n_safe / n,
        ci_low=1.0 - ae_hi,
        ci_high=1.0 - ae_lo,
        confidence=confidence,
        n_model_evals=n + evals,
        method=f"mc_{bound}",
        seed=seed,
        runtime_ms=int((time.perf_counter() - t0) * 1000),
        metadata=meta,
    )


# ---------------------------------------------------------------------------
# sequential estimation with an anytime-valid Hoeffding sequence
# ---------------------------------------------------------------------------

def look_schedule(batch: int, max_samples: int):
    """Cumulative sample counts at each look: batch, 2 batch, 4 batch, ... capped."""
    n = batch
    while True:
        if n >= max_samples:
            yield max_samples
            return
        yield n
        n *= 2


def look_confidence_budget(t: int, confidence: float) -> float:
    """Error allowance for look ``t`` (1-based); sums to ``1 - confidence`` over all looks."""
    return 6.0 * (1.0 - confidence) / (math.pi ** 2 * t * t)


def seq_estimate(net: Network, spec: PerturbSpec, threshold: float, confidence: float = 0.95,
                 max_samples: int = 100_000, batch: int = 100, seed: int = 0,
                 reference_label: Optional[int] = None, threads: Optional[int] = None) -> SeqDecision:
    """Decide whether PR is above or below ``threshold`` with early stopping."""
    t0 = time.perf_counter()
    if not 0.0 < threshold < 1.0:
        raise InvalidInputError("threshold must lie in (0, 1)")
    _check_confidence(confidence)
    if max_samples < 1 or batch < 1:
        raise InvalidInputError("max_samples and batch must be >= 1")
    ref, evals = _reference(net, spec, reference_label)
    key = RngKey(seed).child(rng.SEQ)
    n_safe = 0
    drawn = 0
    looks = []
    verdict = "undecided"
    lo = hi = p = 0.0
    for t, n_t in enumerate(look_schedule(batch, max_samples), start=1):
        res = _ae_counts(net, spec, key, ref, drawn, n_t, threads)
        n_safe += int(res.shape[0] - res[:, 0].sum())
        drawn = n_t
        p = n_safe / n_t
        delta_t = look_confidence_budget(t, confidence)
        eps = math.sqrt(math.log(2.0 / delta_t) / (2.0 * n_t))
        lo, hi = max(0.0, p - eps), min(1.0, p + eps)
        looks.append({"n": n_t, "pr": p, "ci_low": lo, "ci_high": hi})
        if lo >= threshold:
            verdict = "pr_at_least_threshold"
            break
        if hi < threshold:
            verdict = "pr_below_threshold"
            break
    est = PrEstimate(
        pr_point=p, ci_low=lo, ci_high=hi, confidence=confidence,
        n_model_evals=drawn + evals, method="seq_hoeffding", seed=seed,
        runtime_ms=int((time.perf_counter() - t0) * 1000),
        metadata={"reference_label": ref, "looks": len(looks), "batch": batch},
    )
    return SeqDecision(verdict, threshold, est, drawn, max_samples, looks)


# ---------------------------------------------------------------------------
# adaptive multi-level splitting
# ---------------------------------------------------------------------------

def _in_domain(spec: PerturbSpec, X) -> np.ndarray:
    ok = contains_batch(spec, X)
    if spec.domain_box is not None:
        ok &= np.all((X >= spec.domain_box[:, 0]) & (X <= spec.domain_box[:, 1]), axis=1)
    return ok


def _adapt(scale, rate, cap, lo=0.2, hi=0.6):
    if rate < lo:
        return scale * 0.5
    if rate > hi:
        return min(scale * 2.0, cap)
    return scale


def amls_estimate(net: Network, spec: PerturbSpec, cfg: AmlsConfig = AmlsConfig(),
                  confidence: float = 0.95, seed: int = 0,
                  reference_label: Optional[int] = None) -> PrEstimate:
    """Adaptive multi-level splitting estimate of the AE proportion.

    Levels are empirical quantiles of the AE margin; between levels the
    population is rebuilt by cloning survivors and running Metropolis-Hastings
    moves that target the uniform law on the ball restricted to the current
    super-level set. The interval is a log-normal delta-method approximation.
    """
    t0 = time.perf_counter()
    _check_confidence(confidence)
    ref, evals = _reference(net, spec, reference_label)
    key = RngKey(seed).child(rng.AMLS)
    N = cfg.n_particles
    d = spec.dim
    n_keep = min(N - 1, max(1, math.ceil(cfg.level_fraction * N)))
    keep_frac = n_keep / N

    X = sample_batch(spec, key.child(0), np.arange(N, dtype=np.uint64))
    m, ae = _margin_and_indicator(net, ref, X)
    evals += N
    scale = cfg.proposal_scale * spec.radius
    cap = 2.0 * spec.radius
    levels = 0
    thresholds = []
    acc_rates = []
    while True:
        order = np.argsort(-m, kind="stable")
        L = float(m[order[n_keep - 1]])
        if L >= 0.0:
            final = float(np.mean(ae))
            break
        if levels >= cfg.max_levels:
            raise RareEventError(
                f"event too rare for configuration: {levels} levels reached, margin level still {L:.6g}"
            )
        levels += 1
        thresholds.append(L)
        survivors = order[:n_keep]
        u = key.child(1, levels).uniforms(np.arange(N - n_keep, dtype=np.uint64), 1)[:, 0]
        picks = survivors[np.minimum((u * n_keep).astype(np.int64), n_keep - 1)]
        idx = np.concatenate([survivors, picks])
        X, m, ae = X[idx].copy(), m[idx].copy(), ae[idx].copy()
        accepted = 0
        for step in range(cfg.mh_steps):
            prop = X + scale * unit_ball(spec.norm, d, key.child(2, levels, step), np.arange(N, dtype=np.uint64))
            inside = _in_domain(spec, prop)
            cand = np.flatnonzero(inside)
            acc = np.zeros(N, dtype=bool)
            if cand.size:
                mp, aep = _margin_and_indicator(net, ref, prop[cand])
                evals += cand.size
                ok = mp >= L
                sel = cand[ok]
                X[sel], m[sel], ae[sel] = prop[sel], mp[ok], aep[ok]
                acc[sel] = True
            rate = float(acc.mean())
            accepted += int(acc.sum())
            if cfg.adapt:
                scale = _adapt(scale, rate, cap)
        acc_rates.append(accepted / (N * cfg.mh_steps))
        if np.all(X == X[0]):
            raise RareEventError(
                f"particle collapse at level {levels}: all {N} particles identical "
                f"(margin level {L:.6g}, last proposal scale {scale:.3g})"
            )

    p_hat = keep_frac ** levels * final
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    if final > 0.0:
        relvar = (levels * (1.0 - keep_frac) / keep_frac + (1.0 - final) / final) / N
        s = math.sqrt(relvar)
        p_lo, p_hi = p_hat * math.exp(-z * s), min(1.0, p_hat * math.exp(z * s))
    else:
        p_lo, p_hi = 0.0, keep_frac ** levels * (1.0 - (1.0 - confidence) ** (1.0 / N))
    return PrEstimate(
        pr_point=1.0 - p_hat,
        ci_low=1.0 - p_hi,
        ci_high=1.0 - p_lo,
        confidence=confidence,
        n_model_evals=evals,
        method="amls",
        seed=seed,
        runtime_ms=int((time.perf_counter() - t0) * 1000),
        metadata={
            "approximate_ci": True,
            "ae_estimate": p_hat,
            "levels": levels,
            "final_fraction": final,
            "level_thresholds": thresholds,
            "acceptance_rates": acc_rates,
            "n_particles": N,
            "level_fraction": cfg.level_fraction,
            "mh_steps": cfg.mh_steps,
            "proposal_scale": cfg.proposal_scale,
            "final_proposal_scale": scale / spec.radius,
            "reference_label": ref,
        },
    )


# ---------------------------------------------------------------------------
# last-particle simulation
# ---------------------------------------------------------------------------

def last_particle_estimate(net: Network, spec: PerturbSpec, n_particles: int = 100,
                           mh_steps: int = 20, max_iters: int = 100_000,
                           confidence: float = 0.95, seed: int = 0,
                           proposal_scale: float = 0.2,
                           reference_label: Optional[int] = None) -> PrEstimate:
    """Last-particle estimate ``(1 - 1/N)^M`` of the AE proportion.

    The lowest-margin particle is replaced by an MH-evolved clone of another
    particle constrained above the removed margin until every particle is an AE.
    ``M`` is approximately Poisson with mean ``N ln(1/p)``, which gives the interval.
    """
    t0 = time.perf_counter()
    N = int(n_particles)
    if N < 2:
        raise InvalidInputError("n_particles must be >= 2")
    if mh_steps < 1:
        raise InvalidInputError("mh_steps must be >= 1")
    _check_confidence(confidence)
    ref, evals = _reference(net, spec, reference_label)
    key = RngKey(seed).child(rng.LAST_PARTICLE)
    d = spec.dim
    X = sample_batch(spec, key.child(0), np.arange(N, dtype=np.uint64))
    m = ae_margin_batch(net, ref, X)
    evals += N
    scale = proposal_scale * spec.radius
    cap = 2.0 * spec.radius
    M = 0
    steps = np.arange(mh_steps, dtype=np.uint64)
    accepted = 0
    while True:
        i = int(np.argmin(m))
        L = float(m[i])
        if L >= 0.0:
            break
        if M >= max_iters:
            raise RareEventError(
                f"event too rare for configuration: {M} iterations, lowest margin still {L:.6g}"
            )
        u = key.child(1).uniforms([M], 1)[0, 0]
        j = min(int(u * (N - 1)), N - 2)
        j = j + 1 if j >= i else j
        x, mx = X[j].copy(), m[j]
        moves = unit_ball(spec.norm, d, key.child(2, M), steps)
        acc = 0
        for s in range(mh_steps):
            prop = x + scale * moves[s]
            if not _in_domain(spec, prop[None, :])[0]:
                continue
            mp = ae_margin_batch(net, ref, prop[None, :])[0]
            evals += 1
            if mp > L:
                x, mx = prop, mp
                acc += 1
        accepted += acc
        scale = _adapt(scale, acc / mh_steps, cap)
        X[i], m[i] = x, mx
        M += 1

    p_hat = (1.0 - 1.0 / N) ** M
    alpha = 1.0 - confidence
    lam_lo = 0.0 if M == 0 else float(stats.chi2.ppf(alpha / 2, 2 * M)) / 2.0
    lam_hi = float(stats.chi2.ppf(1 - alpha / 2, 2 * M + 2)) / 2.0
    p_lo, p_hi = math.exp(-lam_hi / N), math.exp(-lam_lo / N)
    return PrEstimate(
        pr_point=1.0 - p_hat,
        ci_low=1.0 - p_hi,
        ci_high=1.0 - p_lo,
        confidence=confidence,
        n_model_evals=evals,
        method="last_particle",
        seed=seed,
        runtime_ms=int((time.perf_counter() - t0) * 1000),
        metadata={
            "ae_estimate": p_hat,
            "iterations": M,
            "n_particles": N,
            "mh_steps": mh_steps,
            "proposal_scale": proposal_scale,
            "acceptance_rate": accepted / max(1, M * mh_steps),
            "reference_label": ref,
        },
    )
