import numpy as np
import pytest

from coreset import geometry
from coreset.errors import InputError, NumericalError
from coreset.harness.diagnostics import check_lemma, check_prop1, check_prop2, random_gaussian_model
from coreset.models import GaussianMeanModel, gaussian_kl
from coreset.sparsevi import exact_correlations, select_greedy


class _ConstantOp:
    def __init__(self, G):
        self.G = G

    def matrix(self):
        return self.G

    def times(self, r, rows=None):
        out = self.G @ r
        return out if rows is None else out[np.asarray(rows)]


class ConstantMetric:
    """Stub family whose metric does not depend on the weights."""

    has_conjugate_posterior = True
    has_exact_covariance = True

    def __init__(self, G):
        self.G = G
        self.N = G.shape[0]

    def covariance_operator(self, w):
        return _ConstantOp(self.G)


def test_metric_symmetric_psd(gauss):
    rng = np.random.default_rng(0)
    for _ in range(20):
        G = geometry.fisher_metric(gauss, rng.uniform(0, 2, gauss.N))
        np.testing.assert_array_equal(G, G.T)
        assert np.linalg.eigvalsh(G).min() >= -1e-9


def test_metric_two_point_oracle(oracles):
    o = oracles["fisher_two_points"]
    m = GaussianMeanModel(np.array(o["x"])[:, None], [0.0], [[1.0]], [[1.0]])
    G = geometry.fisher_metric(m, np.array(o["w"]))
    np.testing.assert_allclose(G, o["G"], rtol=0.01)


def test_metric_monte_carlo_backend(gauss):
    w = np.random.default_rng(1).uniform(0, 2, gauss.N)
    ev = geometry.MetricEvaluator(gauss, "monte-carlo", S=20000, rng=np.random.default_rng(2))
    G_mc = ev.evaluate(w)
    G = geometry.fisher_metric(gauss, w)
    assert np.abs(G_mc - G).max() <= 0.05 * np.abs(G).max()
    with pytest.raises(InputError):
        geometry.MetricEvaluator(gauss, "monte-carlo", S=1)
    with pytest.raises(InputError):
        geometry.MetricEvaluator(gauss, "quadrature")


def test_hilbert_objective_basics(gauss):
    rng = np.random.default_rng(3)
    assert geometry.hilbert_objective(gauss, np.ones(gauss.N), rng.uniform(0, 2, gauss.N)) == 0.0
    for _ in range(10):
        assert geometry.hilbert_objective(gauss, rng.uniform(0, 2, gauss.N), rng.uniform(0, 2, gauss.N)) >= 0.0


def test_hilbert_objective_eq1_oracle(oracles):
    o = oracles["eq1_objective"]
    X = np.array(o["X"])
    m = GaussianMeanModel(X, np.zeros(3), np.eye(3), np.eye(3))
    J = geometry.hilbert_objective(m, np.array(o["w"]), np.array(o["w_hat"]))
    assert abs(J - o["value"]) <= 0.01 * o["value"]
    assert abs(J - o["value"]) <= 4 * o["se"]


def test_alignment_score(gauss):
    rng = np.random.default_rng(4)
    assert geometry.greedy_alignment_score(gauss, np.ones(gauss.N), 3) == 0.0
    w = np.where(rng.random(gauss.N) < 0.5, rng.uniform(0.5, 1.5, gauss.N), 0.0)
    scores = np.array([geometry.greedy_alignment_score(gauss, w, n) for n in range(gauss.N)])
    assert np.all(np.abs(scores) <= 1 + 1e-12)
    # same ordering as the unnormalised selection scores
    assert select_greedy(scores, w) == select_greedy(exact_correlations(gauss, w), w)


def test_tangent_misalignment_minimiser(gauss):
    w = np.random.default_rng(5).uniform(0.5, 1.5, gauss.N)
    n = 2
    G = geometry.fisher_metric(gauss, w)
    r = 1 - w
    t_star = G[n] @ r / G[n, n]
    best = geometry.tangent_misalignment(gauss, w, n, t_star)
    for dt in (-0.1, 0.1):
        assert geometry.tangent_misalignment(gauss, w, n, t_star + dt) >= best
    assert best == pytest.approx(r @ G @ r - (G[n] @ r) ** 2 / G[n, n], rel=1e-9, abs=1e-9)


def test_lemma_quadrature(gauss):
    full = gauss.weighted_posterior(np.ones(gauss.N))
    rng = np.random.default_rng(6)
    for _ in range(5):
        w = rng.uniform(0, 3, gauss.N)
        pw = gauss.weighted_posterior(w)
        fwd, rev = geometry.directed_kl_estimates(gauss, w)
        sym = geometry.symmetrized_kl_estimate(gauss, w)
        assert fwd == pytest.approx(gaussian_kl(pw, full), rel=1e-6)
        assert rev == pytest.approx(gaussian_kl(full, pw), rel=1e-6)
        assert sym == pytest.approx(fwd + rev, rel=1e-12)
    assert geometry.symmetrized_kl_estimate(gauss, np.ones(gauss.N)) == 0.0


def test_lemma_monte_carlo_forms(gauss):
    w = np.random.default_rng(7).uniform(0, 2, gauss.N)
    fwd, rev = geometry.directed_kl_estimates(gauss, w)
    mc = geometry.symmetrized_kl_estimate(gauss, w, "mc-path", samples=4000, rng=np.random.default_rng(8))
    beta = geometry.beta_kl_estimate(gauss, w, samples=4000, rng=np.random.default_rng(9))
    assert mc == pytest.approx(fwd + rev, rel=0.05)
    assert beta == pytest.approx(fwd, rel=0.05)
    with pytest.raises(InputError):
        geometry.symmetrized_kl_estimate(gauss, w, "simpson")


def test_bound_constant_constant_metric():
    rng = np.random.default_rng(10)
    A = rng.standard_normal((4, 4))
    stub = ConstantMetric(A @ A.T + np.eye(4))
    assert geometry.bound_constant(stub, rng.uniform(0, 2, 4), rng.uniform(0, 2, 4)) == pytest.approx(1.0, rel=1e-10)


def test_bound_constant_singular_and_near_one():
    singular = random_gaussian_model(np.random.default_rng(11), 2, 10)
    with pytest.raises(NumericalError):
        geometry.bound_constant(singular, np.ones(10), np.zeros(10))
    m = random_gaussian_model(np.random.default_rng(12), 5, 5)
    w = np.full(5, 0.99)
    C = geometry.bound_constant(m, w, w)
    assert C == pytest.approx(1.0, abs=0.05)


def test_prop2_bound():
    m = random_gaussian_model(np.random.default_rng(13), 5, 5)
    rng = np.random.default_rng(14)
    for _ in range(10):
        w, w_hat = rng.uniform(0, 2, 5), rng.uniform(0, 2, 5)
        sym = geometry.symmetrized_kl_estimate(m, w)
        assert sym <= geometry.bound_constant(m, w, w_hat) * geometry.hilbert_objective(m, w, w_hat) + 1e-8


@pytest.mark.parametrize("check", [check_lemma, check_prop1, check_prop2])
def test_diagnostic_checks_pass(check):
    res = check(seed=0)
    assert res.passed, res.line()
    assert res.line().startswith("PASS")
