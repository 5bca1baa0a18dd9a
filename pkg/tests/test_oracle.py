import numpy as np
import pytest

from nets import constant_net, linear_net_2d, random_net, threshold_net
from probrobust.errors import InvalidInputError
from probrobust.oracle import grid_labels, grid_pr, linear_net_weights, linear_pr_analytic
from probrobust.perturb import PerturbSpec


def test_grid_interval_ratio():
    res = grid_pr(threshold_net(0.25), PerturbSpec([0.0], 1.0), 10_001)
    assert res.pr_exact == pytest.approx(0.625, abs=2 / 10_000)
    assert res.method == "grid" and res.resolution == 10_001


@pytest.mark.parametrize("ppd", [11, 51, 201])
def test_grid_constant_network(ppd):
    assert grid_pr(constant_net(), PerturbSpec([0.2, -0.3], 0.7), ppd).pr_exact == 1.0
    assert grid_pr(constant_net(), PerturbSpec([0.2, -0.3], 0.7, norm="l2"), ppd).pr_exact == 1.0


def test_grid_resolution_stability_on_moons(moons_net):
    net, te = moons_net
    for x in te.X[:5]:
        spec = PerturbSpec(x, 0.3)
        assert abs(grid_pr(net, spec, 201).pr_exact - grid_pr(net, spec, 401).pr_exact) < 0.01


def test_grid_rejects_bad_inputs():
    with pytest.raises(InvalidInputError):
        grid_pr(constant_net(4), PerturbSpec(np.zeros(4), 1.0), 11)
    with pytest.raises(InvalidInputError):
        grid_pr(constant_net(), PerturbSpec([0.0, 0.0], 1.0), 10)
    with pytest.raises(InvalidInputError):
        grid_pr(constant_net(), PerturbSpec([0.0, 0.0], 1.0), 9)


def test_grid_l2_disk_fraction():
    # half-plane x1 > 0.5 cuts the unit disk; non-AE area = pi - segment area
    seg = np.arccos(0.5) - 0.5 * np.sqrt(0.75)
    expected = 1 - seg / np.pi
    res = grid_pr(linear_net_2d(), PerturbSpec([0.0, 0.0], 1.0, norm="l2"), 1001)
    assert res.pr_exact == pytest.approx(expected, abs=2e-3)


def test_grid_nested_ae_sets():
    r = np.random.default_rng(0)
    net = random_net(r, [2, 10, 2])
    c = np.array([0.1, -0.2])
    ref = grid_pr(net, PerturbSpec(c, 0.5), 21).metadata["reference_label"]
    # 21 points on radius 0.5 and 41 on radius 1.0 share the small grid
    p1, l1 = grid_labels(net, PerturbSpec(c, 0.5), 21)
    p2, l2 = grid_labels(net, PerturbSpec(c, 1.0), 41)
    small = {tuple(np.round(p, 12)) for p, l in zip(p1, l1) if l != ref}
    big = {tuple(np.round(p, 12)) for p, l in zip(p2, l2) if l != ref}
    assert small <= big


def test_linear_examples():
    assert linear_pr_analytic([1.0], -0.25, [0.0], 1.0).pr_exact == pytest.approx(0.625, abs=1e-12)
    assert linear_pr_analytic([1.0, 1.0], -1.5, [0.0, 0.0], 1.0).pr_exact == pytest.approx(0.96875, abs=1e-4)
    assert linear_pr_analytic([0.3, -2.0], 0.0, [0.0, 0.0], 0.4).pr_exact == 0.5
    assert linear_pr_analytic([1.0, 1.0], 0.0, [0.5, -0.5], 1.0).pr_exact == 0.5


def test_linear_symmetric_weights_give_half():
    w = np.array([1.0, -1.0, 2.0])
    c = np.array([0.3, 0.1, 0.4])
    res = linear_pr_analytic(w, -float(w @ c), c, 0.5)
    assert res.pr_exact == 0.5


def test_linear_high_dim_against_normal_approx():
    # sum of 16 uniforms is very close to Gaussian
    w = np.ones(16)
    res = linear_pr_analytic(w, -1.0, np.zeros(16), 1.0)
    from scipy.stats import norm
    assert res.pr_exact == pytest.approx(norm.cdf(1.0 / np.sqrt(16 / 3)), abs=2e-3)


def test_linear_rejects_bad_inputs():
    with pytest.raises(InvalidInputError):
        linear_pr_analytic([0.0, 0.0], 1.0, [0.0, 0.0], 1.0)
    with pytest.raises(InvalidInputError):
        linear_pr_analytic(np.ones(17), 1.0, np.zeros(17), 1.0)


@pytest.mark.parametrize("seed", range(8))
def test_linear_agrees_with_grid(seed):
    r = np.random.default_rng(seed)
    d = 1 + seed % 2
    w, b, c = r.normal(size=d), float(r.normal()), r.normal(size=d) * 0.3
    from probrobust.model import Layer, Network
    net = Network((Layer([np.zeros(d), w], [0.0, b], "identity"),))
    ww, bb = linear_net_weights(net)
    ppd = 201
    a = linear_pr_analytic(ww, bb, c, 0.8).pr_exact
    g = grid_pr(net, PerturbSpec(c, 0.8), ppd).pr_exact
    assert abs(a - g) <= 2 / ppd


def test_oracles_deterministic():
    net = random_net(np.random.default_rng(3), [2, 8, 2])
    spec = PerturbSpec([0.0, 0.0], 1.0)
    assert grid_pr(net, spec, 101).to_dict() == grid_pr(net, spec, 101).to_dict()
    assert linear_pr_analytic([1.0, 2.0], 0.3, [0.0, 0.0], 1.0).to_dict() == \
        linear_pr_analytic([1.0, 2.0], 0.3, [0.0, 0.0], 1.0).to_dict()
