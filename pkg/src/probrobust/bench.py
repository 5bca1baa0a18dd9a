"""Estimator benchmark against linear constructions with known AE proportion."""

from __future__ import annotations

import math

import numpy as np

from .errors import RareEventError
from .estimators import AmlsConfig, amls_estimate, last_particle_estimate, mc_estimate
from .model import Layer, Network
from .oracle import linear_net_weights, linear_pr_analytic
from .perturb import PerturbSpec


def threshold_net(t: float) -> Network:
    """1-D two-class net predicting class 1 iff x > t."""
    return Network((Layer([[0.0], [1.0]], [0.0, -t], "identity"),))


def construction(ae_proportion: float):
    """Net and unit Linf ball at 0 whose AE proportion under U(-1, 1) is ``ae_proportion``."""
    net = threshold_net(1.0 - 2.0 * ae_proportion)
    return net, PerturbSpec([0.0], 1.0, "linf")


def _row(method, p_true, budget, estimates, evals, failures):
    est = np.asarray(estimates, dtype=float)
    row = {
        "method": method,
        "ae_true": p_true,
        "budget": budget,
        "runs": len(estimates) + failures,
        "failures": failures,
        "mean_model_evals": float(np.mean(evals)) if evals else None,
        "mean_estimate": float(np.mean(est)) if est.size else None,
        "rel_rmse": float(np.sqrt(np.mean(((est - p_true) / p_true) ** 2))) if est.size else None,
        "zero_hit_fraction": float(np.mean(est == 0.0)) if est.size else None,
    }
    return row


def run_bench(decades, mc_budgets, reps, amls_particles=1000, amls_level_fraction=0.1,
              lp_particles=100, mh_steps=20, lp_reps=10, seed=0):
    """Error-versus-cost table for mc, amls and last_particle on each decade."""
    rows = []
    oracle = []
    for di, p in enumerate(decades):
        net, spec = construction(p)
        w, b = linear_net_weights(net)
        truth = linear_pr_analytic(w, b, spec.center, spec.radius)
        oracle.append({"ae_true": p, "oracle_pr": truth.pr_exact, "oracle": truth.to_dict()})
        base = seed + 1_000_003 * di
        for n in mc_budgets:
            ests, evals = [], []
            for r in range(reps):
                e = mc_estimate(net, spec, n, seed=base + r)
                ests.append(e.ae_point)
                evals.append(e.n_model_evals)
            rows.append(_row("mc", p, n, ests, evals, 0))
        ests, evals, fails = [], [], 0
        cfg = AmlsConfig(amls_particles, amls_level_fraction, mh_steps)
        for r in range(reps):
            try:
                e = amls_estimate(net, spec, cfg, seed=base + r)
            except RareEventError:
                fails += 1
                continue
            ests.append(e.ae_point)
            evals.append(e.n_model_evals)
        rows.append(_row("amls", p, amls_particles, ests, evals, fails))
        ests, evals, fails = [], [], 0
        for r in range(lp_reps):
            try:
                e = last_particle_estimate(net, spec, lp_particles, mh_steps, seed=base + r)
            except RareEventError:
                fails += 1
                continue
            ests.append(e.ae_point)
            evals.append(e.n_model_evals)
        rows.append(_row("last_particle", p, lp_particles, ests, evals, fails))
    return rows, oracle


def mc_slopes(rows):
    """Least-squares slope of log(rel_rmse) against log(budget) per decade (mc rows)."""
    out = {}
    for p in sorted({r["ae_true"] for r in rows}):
        pts = [(math.log(r["budget"]), math.log(r["rel_rmse"])) for r in rows
               if r["method"] == "mc" and r["ae_true"] == p and r["rel_rmse"]]
        if len(pts) >= 2:
            x, y = np.array(pts).T
            out[p] = float(np.polyfit(x, y, 1)[0])
    return out


def format_table(rows) -> str:
    head = f"{'method':<14}{'ae_true':>10}{'budget':>9}{'evals':>12}{'mean_est':>12}{'rel_rmse':>10}{'fail':>6}"
    lines = [head]
    for r in rows:
        ev = "-" if r["mean_model_evals"] is None else f"{r['mean_model_evals']:.0f}"
        me = "-" if r["mean_estimate"] is None else f"{r['mean_estimate']:.3g}"
        rm = "-" if r["rel_rmse"] is None else f"{r['rel_rmse']:.3f}"
        lines.append(f"{r['method']:<14}{r['ae_true']:>10.3g}{r['budget']:>9}{ev:>12}{me:>12}{rm:>10}{r['failures']:>6}")
    return "\n".join(lines)
