import json

import numpy as np
import pytest

from nets import constant_net, identity_net, sign_net
from probrobust.errors import ConfigError, InvalidInputError, RareEventError
from probrobust.global_metrics import (Cell, LipschitzConfig, Partition, lipschitz_estimate,
                                       load_partition, partition_from_dict, tsr_estimate)
from probrobust.model import Layer, Network
from probrobust.oracle import grid_pr
from probrobust.perturb import PerturbSpec
from probrobust.rng import RngKey

TEMPLATE = {"radius": 0.5, "norm": "linf", "distribution": "uniform"}


def two_cell_partition():
    # far from the boundary (local PR 1) and a sliver around it (local PR 1/2 + 1e-6)
    return Partition([Cell([[2.0, 3.0]], 0.7), Cell([[-2e-6, 2e-6]], 0.3)])


def _strip(d):
    d = dict(d)
    d.pop("runtime_ms")
    return d


def test_partition_validation():
    with pytest.raises(InvalidInputError):
        Partition([Cell([[0.0, 1.0]], 0.5)])
    with pytest.raises(InvalidInputError):
        Cell([[1.0, 1.0]], 1.0)
    with pytest.raises(ConfigError):
        partition_from_dict({"cells": [{"box": [[5.0, 6.0]], "weight": 1.0, "source": "dataset_rows"}]},
                            np.zeros((3, 1)))
    with pytest.raises(ConfigError):
        partition_from_dict({"cells": [], "extra": 1})


def test_partition_sampling_respects_weights_and_boxes():
    p = two_cell_partition()
    X = p.sample(RngKey(0), np.arange(20_000))
    far = X[:, 0] >= 2.0
    assert abs(far.mean() - 0.7) < 0.02
    assert np.all((X[far] <= 3.0)) and np.all(np.abs(X[~far]) <= 2e-6)


def test_dataset_rows_cells(tmp_path):
    rows = "label,f0\n0,0.1\n1,0.2\n0,0.9\n"
    (tmp_path / "d.csv").write_text(rows)
    doc = {"dataset": "d.csv", "cells": [{"box": [[0.0, 0.5]], "weight": 1.0, "source": "dataset_rows"}]}
    (tmp_path / "p.json").write_text(json.dumps(doc))
    p = load_partition(tmp_path / "p.json")
    X = p.sample(RngKey(1), np.arange(500))
    assert set(np.unique(X[:, 0])) == {0.1, 0.2}


@pytest.mark.parametrize("seed", range(3))
def test_tsr_constant_network(seed):
    p = Partition([Cell([[-1, 1], [-1, 1]], 0.25), Cell([[3, 4], [0, 1]], 0.75)])
    for bound in ("hoeffding", "clopper_pearson"):
        est = tsr_estimate(constant_net(), p, TEMPLATE, 500, bound=bound, seed=seed)
        assert est.pr_point == 1.0 and est.n_model_evals == 1000


def test_tsr_weighted_construction():
    est = tsr_estimate(sign_net(), two_cell_partition(), TEMPLATE, 20_000, seed=0)
    assert est.ci_low <= 0.85 <= est.ci_high
    assert abs(est.pr_point - 0.85) < 0.01


def test_tsr_coverage_on_construction():
    truth = 0.7 + 0.3 * (0.5 + 2e-6 / (4 * 0.5))
    hits = 0
    for s in range(200):
        est = tsr_estimate(sign_net(), two_cell_partition(), TEMPLATE, 1000, seed=s)
        hits += est.ci_low <= truth <= est.ci_high
    assert hits / 200 >= 0.93


def test_tsr_moons_against_grid_oracle(moons_net):
    net, _ = moons_net
    boxes = [[[-1.5, 0.0], [-1.0, 0.0]], [[0.0, 1.5], [-1.0, 0.0]],
             [[-1.5, 0.0], [0.0, 1.0]], [[0.0, 1.5], [0.0, 1.0]]]
    weights = [0.1, 0.4, 0.3, 0.2]
    p = Partition([Cell(b, w) for b, w in zip(boxes, weights)])
    template = {"radius": 0.2, "norm": "linf", "distribution": "uniform"}
    truth = 0.0
    for b, w in zip(boxes, weights):
        # midpoint rule over cell centres, each with a grid-oracled local PR
        g0 = np.linspace(b[0][0], b[0][1], 17)
        g1 = np.linspace(b[1][0], b[1][1], 17)
        c0, c1 = (g0[:-1] + g0[1:]) / 2, (g1[:-1] + g1[1:]) / 2
        prs = [grid_pr(net, PerturbSpec([a, c], 0.2), 51).pr_exact for a in c0 for c in c1]
        truth += w * float(np.mean(prs))
    est = tsr_estimate(net, p, template, 40_000, seed=1)
    assert est.ci_low - 0.005 <= truth <= est.ci_high + 0.005


def test_tsr_thread_independence():
    a = tsr_estimate(sign_net(), two_cell_partition(), TEMPLATE, 30_000, seed=2, threads=1)
    b = tsr_estimate(sign_net(), two_cell_partition(), TEMPLATE, 30_000, seed=2, threads=3)
    assert _strip(a.to_dict()) == _strip(b.to_dict())


def test_tsr_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        tsr_estimate(sign_net(), Partition([Cell([[0, 1], [0, 1]], 1.0)]), TEMPLATE, 10)


SQUARE = Partition([Cell([[-1.0, 1.0], [-1.0, 1.0]], 1.0)])


def test_lipschitz_identity():
    res = lipschitz_estimate(identity_net(), SQUARE, LipschitzConfig(0.3, 1.0, pair_budget=2000), seed=0)
    assert res.estimate.pr_point == 1.0 and res.verdict == "pass"
    assert res.pairs_accepted == 2000


def test_lipschitz_operator_norm_three():
    net = Network((Layer([[3.0, 0.0], [0.0, 1.0]], [0.0, 0.0], "identity"),))
    assert np.linalg.norm(net.layers[0].weights, 2) == pytest.approx(3.0)
    lo = lipschitz_estimate(net, SQUARE, LipschitzConfig(0.3, 2.0, pair_budget=2000), seed=0)
    hi = lipschitz_estimate(net, SQUARE, LipschitzConfig(0.3, 3.01, pair_budget=2000), seed=0)
    assert lo.estimate.ci_high < 0.9 and lo.verdict == "fail"
    assert hi.estimate.pr_point == 1.0


def test_lipschitz_constant_network():
    res = lipschitz_estimate(constant_net(), SQUARE, LipschitzConfig(0.2, 1e-6, pair_budget=500), seed=4)
    assert res.estimate.pr_point == 1.0


def test_lipschitz_verdict_monotone_in_k():
    net = Network((Layer([[3.0, 1.0], [0.5, 1.0]], [0.0, 0.0], "identity"),))
    verdicts = [lipschitz_estimate(net, SQUARE, LipschitzConfig(0.5, k, 0.2, 1000), seed=9).verdict
                for k in np.linspace(0.5, 4.0, 15)]
    first = verdicts.index("pass")
    assert all(v == "pass" for v in verdicts[first:])


def test_lipschitz_gamma_too_small():
    cfg = LipschitzConfig(1e-7, 1.0, pair_budget=10, max_draws=200_000)
    with pytest.raises(RareEventError, match="gamma too small"):
        lipschitz_estimate(identity_net(), SQUARE, cfg, seed=0)
