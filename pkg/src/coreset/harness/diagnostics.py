"""Numerical checks of the geometric identities on seeded conjugate instances."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import geometry
from ..models import GaussianMeanModel, gaussian_kl
from ..sparsevi import exact_correlations, select_greedy

__all__ = ["CheckResult", "CHECKS", "run_check", "check_lemma", "check_prop1", "check_prop2", "random_gaussian_model"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    details: list = field(default_factory=list)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst={self.worst:.3e} tolerance={self.tolerance:.1e} cases={len(self.details)}"


def random_gaussian_model(rng, d, N, spread=1.0):
    """Gaussian-mean instance with random SPD prior and likelihood covariances."""
    A = rng.standard_normal((d, d))
    B = rng.standard_normal((d, d))
    prior_cov = np.eye(d) + 0.5 * A @ A.T / d
    lik_cov = np.eye(d) + 0.5 * B @ B.T / d
    data = rng.standard_normal(d) + spread * rng.standard_normal((N, d))
    return GaussianMeanModel(data, rng.standard_normal(d), prior_cov, lik_cov)


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def check_lemma(seed=0, points=10, d=5, N=30, K=50, tol=1e-6) -> CheckResult:
    """Quadrature path integrals against the closed-form Gaussian KLs."""
    rng = np.random.default_rng(seed)
    model = random_gaussian_model(rng, d, N)
    full = model.weighted_posterior(np.ones(N))
    details, worst = [], 0.0
    for _ in range(points):
        w = np.where(rng.random(N) < 0.6, rng.uniform(0.0, 3.0, N), 0.0)
        pw = model.weighted_posterior(w)
        fwd_true, rev_true = gaussian_kl(pw, full), gaussian_kl(full, pw)
        fwd, rev = geometry.directed_kl_estimates(model, w, K)
        sym = geometry.symmetrized_kl_estimate(model, w, "quadrature", K)
        errs = (_rel(sym, fwd_true + rev_true), _rel(fwd, fwd_true), _rel(rev, rev_true))
        worst = max(worst, *errs)
        details.append({"symmetrized": sym, "forward": fwd, "reverse": rev, "rel_errors": errs})
    return CheckResult("lemma", worst <= tol, worst, tol, details)


def check_prop1(seed=0, instances=10, d=2, N=10, grid=200, t_max=5.0) -> CheckResult:
    """Greedy correlation argmax against grid minimisation of the tangent misalignment.

    Inactive indices search ``t`` in ``[0, t_max]``; active ones in
    ``[-t_max, t_max]`` since their weights may move either way.
    Instances use identity covariances and weights near 1 so that the
    minimising ``t`` usually falls inside the grid; ``t_star`` of the greedy
    choice is recorded. ``worst`` counts disagreements.
    """
    rng = np.random.default_rng(seed)
    ts = np.linspace(0.0, t_max, grid)
    both = np.concatenate([-ts[::-1], ts])
    details, misses = [], 0
    for _ in range(instances):
        model = GaussianMeanModel(rng.standard_normal((N, d)), np.zeros(d), np.eye(d), np.eye(d))
        w = np.where(rng.random(N) < 0.8, rng.uniform(0.5, 1.5, N), 0.0)
        G = model.covariance_operator(w).matrix()
        r = 1.0 - w
        n_greedy = select_greedy(exact_correlations(model, w), w)
        best = np.empty(N)
        for n in range(N):
            t = both if w[n] > 0 else ts
            # (r - t e_n)^T G (r - t e_n) expanded in t
            best[n] = np.min(r @ G @ r - 2.0 * t * (G[n] @ r) + t**2 * G[n, n])
        n_grid = int(np.argmin(best))
        t_star = float(G[n_greedy] @ r / G[n_greedy, n_greedy])
        misses += n_grid != n_greedy
        details.append({"greedy": n_greedy, "grid": n_grid, "t_star": t_star})
    return CheckResult("prop1", misses == 0, float(misses), 0.0, details)


def check_prop2(seed=0, pairs=20, d=5, N=5, K=50, slack=1e-8) -> CheckResult:
    """Symmetrised KL against ``C(w) J(w)``; ``N <= d + 1`` keeps ``G(w_hat)`` nonsingular.

    ``worst`` is the largest ``KL - C J`` (negative when the bound holds).
    """
    rng = np.random.default_rng(seed)
    model = random_gaussian_model(rng, d, N)
    details, worst = [], -np.inf
    for _ in range(pairs):
        w = rng.uniform(0.0, 2.0, N)
        w_hat = rng.uniform(0.0, 2.0, N)
        sym = geometry.symmetrized_kl_estimate(model, w, "quadrature", K)
        C = geometry.bound_constant(model, w, w_hat, K)
        J = geometry.hilbert_objective(model, w, w_hat)
        worst = max(worst, sym - C * J)
        details.append({"symmetrized": sym, "C": C, "J": J})
    return CheckResult("prop2", worst <= slack, float(worst), slack, details)


CHECKS = {"lemma": check_lemma, "prop1": check_prop1, "prop2": check_prop2}


def run_check(name, seed=0) -> CheckResult:
    return CHECKS[name](seed=seed)
