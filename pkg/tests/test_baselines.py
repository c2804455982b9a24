from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import nnls

from coreset.baselines import (
    WEIGHTING_NOISE_CONVENTION,
    giga,
    make_weighting,
    nnls_polish,
    projected_objective,
    random_projection,
    uniform_subsample,
)
from coreset.errors import InputError
from coreset.harness.diagnostics import random_gaussian_model
from coreset.models import GaussianMeanModel


def brute_force(G, M):
    """Exhaustive optimum of the projected objective over supports of size <= M."""
    target = G.sum(axis=0)
    best = target @ target
    for k in range(1, M + 1):
        for supp in combinations(range(G.shape[0]), k):
            x, res = nnls(G[list(supp)].T, target)
            best = min(best, res**2)
    return best


def giga_instance(seed, N=4, S_proj=3):
    rng = np.random.default_rng(seed)
    model = random_gaussian_model(rng, 2, N)
    return random_projection(model, make_weighting(model, "optimal"), S_proj, rng)


def test_giga_against_brute_force():
    for seed in range(20):
        vec = giga_instance(seed)
        w = giga(vec, 2)
        assert w.nnz <= 2
        opt = brute_force(vec.vectors, 2)
        assert projected_objective(vec, w) <= 1.1 * opt + 1e-12


def test_giga_identical_atoms():
    G = np.tile([1.0, -2.0, 0.5], (5, 1))
    w = giga(G, 1)
    assert w.nnz == 1
    assert w.values.sum() == pytest.approx(5.0)
    assert projected_objective(G, w) == pytest.approx(0.0, abs=1e-20)


def test_giga_zero_budget_and_zero_target():
    G = giga_instance(0).vectors
    w = giga(G, 0)
    assert w.nnz == 0
    assert projected_objective(G, w) == pytest.approx(G.sum(axis=0) @ G.sum(axis=0))
    assert giga(np.array([[1.0, 0.0], [-1.0, 0.0]]), 2).nnz == 0
    with pytest.raises(InputError):
        giga(G, -1)


def test_giga_monotone_in_budget():
    rng = np.random.default_rng(1)
    model = random_gaussian_model(rng, 4, 40)
    vec = random_projection(model, make_weighting(model, "realistic", rng), 30, rng)
    objs = []
    giga(vec, 25, callback=lambda m, w: objs.append(projected_objective(vec, w)))
    assert len(objs) == 25
    assert np.all(np.diff(objs) <= 1e-9 * objs[0])


def test_giga_scale_invariance():
    # the target sum_n g_n scales with the atoms, so the weights are unchanged
    vec = giga_instance(3, N=12, S_proj=6)
    a = giga(vec, 5)
    for c in (0.01, 3.0, 250.0):
        b = giga(c * vec.vectors, 5)
        np.testing.assert_array_equal(a.active, b.active)
        np.testing.assert_allclose(b.values, a.values, rtol=1e-9)
        assert projected_objective(c * vec.vectors, b) == pytest.approx(c**2 * projected_objective(vec, a), rel=1e-9)


def test_polish_at_full_budget_beats_smaller():
    vec = giga_instance(4, N=15, S_proj=8)
    full = nnls_polish(vec, giga(vec, 15))
    base = projected_objective(vec, full)
    for M in (1, 3, 5, 10):
        assert base <= projected_objective(vec, giga(vec, M)) + 1e-12


def test_projection_properties():
    rng = np.random.default_rng(5)
    model = random_gaussian_model(rng, 3, 10)
    weighting = make_weighting(model, "optimal")
    vec = random_projection(model, weighting, 50, np.random.default_rng(6))
    assert vec.vectors.shape == (10, 50) and vec.S == 50 and vec.N == 10
    F = model.eval_potentials(weighting.sample(50, np.random.default_rng(6)))
    np.testing.assert_allclose(np.sum(vec.vectors**2, axis=1), F.var(axis=0), rtol=1e-10)
    np.testing.assert_allclose(vec.vectors.sum(axis=1), 0.0, atol=1e-10)
    with pytest.raises(InputError):
        random_projection(model, weighting, 0)


def test_projection_constant_potential():
    class Constant(GaussianMeanModel):
        def eval_potentials(self, theta, idx=None):
            f = super().eval_potentials(theta, idx)
            f[..., 0] = 4.0
            return f

    m = Constant(np.ones((3, 2)), np.zeros(2), np.eye(2), np.eye(2))
    vec = random_projection(m, m.prior, 20, np.random.default_rng(0))
    np.testing.assert_array_equal(vec.vectors[0], 0.0)


def test_weighting_endpoints():
    model = random_gaussian_model(np.random.default_rng(7), 3, 10)
    post = model.weighted_posterior(np.ones(10))
    opt = make_weighting(model, "optimal")
    np.testing.assert_array_equal(opt.mean, post.mean)
    np.testing.assert_array_equal(opt.cov, post.cov)
    lo = make_weighting(model, "realistic", np.random.default_rng(0), noise=0.0, u=0.0)
    hi = make_weighting(model, "realistic", np.random.default_rng(0), noise=0.0, u=1.0)
    np.testing.assert_allclose(lo.mean, model.prior.mean, atol=1e-12)
    np.testing.assert_allclose(lo.cov, model.prior.cov, atol=1e-12)
    np.testing.assert_allclose(hi.mean, post.mean, atol=1e-12)
    np.testing.assert_allclose(hi.cov, post.cov, atol=1e-12)
    assert WEIGHTING_NOISE_CONVENTION == "per-component-multiplicative-uniform"


def test_weighting_realistic_is_valid_and_seeded(logistic):
    for model in (random_gaussian_model(np.random.default_rng(8), 4, 10), logistic):
        a = make_weighting(model, "realistic", np.random.default_rng(1))
        b = make_weighting(model, "realistic", np.random.default_rng(1))
        np.testing.assert_array_equal(a.mean, b.mean)
        assert np.linalg.eigvalsh(a.cov).min() >= 1e-9
    with pytest.raises(InputError):
        make_weighting(logistic, "spectral")


def test_uniform_subsample():
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(uniform_subsample(7, 7, rng).values, np.ones(7))
    w = uniform_subsample(10, 3, np.random.default_rng(1))
    assert w.nnz == 3 and w.values.sum() == pytest.approx(10.0)
    np.testing.assert_array_equal(w.values, uniform_subsample(10, 3, np.random.default_rng(1)).values)
    for bad in (0, 11):
        with pytest.raises(InputError):
            uniform_subsample(10, bad, rng)


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 50), data=st.data())
def test_uniform_sum_property(N, data):
    M = data.draw(st.integers(1, N))
    w = uniform_subsample(N, M, np.random.default_rng(N * 100 + M))
    assert w.nnz == M
    assert w.values.sum() == pytest.approx(N)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), M=st.integers(0, 10))
def test_giga_contract_property(seed, M):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((12, 5))
    G -= G.mean(axis=1, keepdims=True)
    w = giga(G, M)
    assert np.all(w.values >= 0) and w.nnz <= M
    assert projected_objective(G, w) <= projected_objective(G, np.zeros(12)) + 1e-9
