import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from probrobust.errors import InvalidInputError, RareEventError
from probrobust.perturb import (PerturbSpec, contains, contains_batch, norm_of, project, sample,
                                sample_batch)
from probrobust.rng import RngKey


def test_linf_uniform_1d_moments_and_support():
    spec = PerturbSpec([0.0], 1.0)
    x = sample_batch(spec, RngKey(0), np.arange(100_000))[:, 0]
    assert -0.02 < x.mean() < 0.02
    assert x.min() >= -1.0 and x.max() <= 1.0


def test_sample_is_pure():
    spec = PerturbSpec([0.5, -0.5], 0.3, "l2")
    assert np.array_equal(sample(spec, RngKey(9), 42), sample(spec, RngKey(9), 42))
    batch = sample_batch(spec, RngKey(9), [40, 41, 42])
    assert np.array_equal(batch[2], sample(spec, RngKey(9), 42))


def test_l2_uniform_area_ratio():
    spec = PerturbSpec([0.0, 0.0], 1.0, "l2")
    x = sample_batch(spec, RngKey(1), np.arange(100_000))
    frac = np.mean(norm_of(x, "l2") <= 0.5)
    assert abs(frac - 0.25) < 0.01


def test_contains_boundary_cases():
    spec = PerturbSpec([0.0, 0.0], 1.0)
    assert contains(spec, [1.0, -1.0])
    assert not contains(spec, [1.0 + 1e-6, 0.0])


@pytest.mark.parametrize("norm,dist", [("linf", "uniform"), ("l2", "uniform"),
                                       ("linf", "trunc_gaussian"), ("l2", "trunc_gaussian")])
def test_samples_inside_ball(norm, dist):
    spec = PerturbSpec([0.2, -0.1, 0.4], 0.7, norm, dist, sigma=0.5 if dist == "trunc_gaussian" else None)
    x = sample_batch(spec, RngKey(2), np.arange(5000))
    assert np.all(contains_batch(spec, x))


def test_linf_marginals_ks():
    spec = PerturbSpec([0.0, 0.0, 0.0], 0.4)
    x = sample_batch(spec, RngKey(3), np.arange(10_000))
    for j in range(3):
        p = stats.kstest(x[:, j], stats.uniform(loc=-0.4, scale=0.8).cdf).pvalue
        assert p > 0.01


def test_trunc_gaussian_retry_cap():
    spec = PerturbSpec([0.0] * 8, 1e-3, "l2", "trunc_gaussian", sigma=10.0)
    with pytest.raises(RareEventError):
        sample(spec, RngKey(0), 0)


def test_domain_box_clamps_and_reports():
    spec = PerturbSpec([0.05, 0.5], 0.2, domain_box=[[0.0, 1.0], [0.0, 1.0]])
    x, clamped = sample_batch(spec, RngKey(4), np.arange(2000), return_clamped=True)
    assert x[:, 0].min() >= 0.0
    assert 0.1 < clamped.mean() < 0.4


@pytest.mark.parametrize("kwargs", [
    dict(center=[0.0], radius=0.0),
    dict(center=[0.0], radius=np.inf),
    dict(center=[0.0], radius=1.0, norm="l3"),
    dict(center=[0.0], radius=1.0, distribution="trunc_gaussian"),
    dict(center=[2.0], radius=1.0, domain_box=[[0.0, 1.0]]),
])
def test_invalid_specs(kwargs):
    with pytest.raises(InvalidInputError):
        PerturbSpec(**kwargs)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.sampled_from(["linf", "l2"]))
def test_project_idempotent_and_fixes_interior(x, norm):
    spec = PerturbSpec([0.1, -0.2], 0.5, norm)
    p = project(spec, x)
    assert contains(spec, p)
    np.testing.assert_allclose(project(spec, p), p, atol=1e-15)
    if contains(spec, x):
        np.testing.assert_array_equal(p, x)
