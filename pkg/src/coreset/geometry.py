"""Fisher metric of the coreset family and KL diagnostics along straight paths in weight space.

The coreset posteriors form an exponential family in ``w`` with log
normaliser ``log Z(w)``, so ``G(w) = cov_w[f]`` is both the Hessian of
``log Z`` and the Fisher metric. Along ``gamma(t) = (1 - t) w + t 1`` with
``h(t) = (1 - w)^T G(gamma(t)) (1 - w)``::

    KL(pi_w || pi_1) = int_0^1 (1 - t) h(t) dt
    KL(pi_1 || pi_w) = int_0^1 t h(t) dt

and their sum is the integral of ``h``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError
from .models import PotentialFamily, check_weights
from .posterior import PosteriorSampler
from .sparsevi import VAR_GUARD

__all__ = [
    "MetricEvaluator",
    "fisher_metric",
    "hilbert_objective",
    "tangent_misalignment",
    "greedy_alignment_score",
    "symmetrized_kl_estimate",
    "directed_kl_estimates",
    "beta_kl_estimate",
    "bound_constant",
    "BACKENDS",
]

BACKENDS = ("exact", "monte-carlo")


@dataclass
class MetricEvaluator:
    """Evaluates ``G(w) = cov_w[f]`` in closed form or from ``S`` posterior draws."""

    model: PotentialFamily
    backend: str = "exact"
    S: int = 1000
    sampler: PosteriorSampler | None = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise InputError(f"unknown metric backend {self.backend!r}; expected one of {BACKENDS}")
        if self.backend == "monte-carlo" and self.S < 2:
            raise InputError("Monte Carlo metric needs S >= 2")
        if self.sampler is None:
            strategy = "exact-conjugate" if self.model.has_conjugate_posterior else "laplace"
            self.sampler = PosteriorSampler(strategy)

    def evaluate(self, w):
        w = check_weights(getattr(w, "values", w), self.model.N)
        if self.backend == "exact":
            G = self.model.covariance_operator(w).matrix()
        else:
            draws = self.sampler.sample(self.model, w, self.S, self.rng)
            F = self.model.eval_potentials(draws)
            if not np.all(np.isfinite(F)):
                raise NumericalError("non-finite potential values")
            F = F - F.mean(axis=0)
            G = F.T @ F / (self.S - 1)
        return 0.5 * (G + G.T)

    def quadratic(self, w, r):
        """``r^T G(w) r`` without forming the matrix when possible."""
        if self.backend == "exact":
            w = check_weights(getattr(w, "values", w), self.model.N)
            return float(r @ self.model.covariance_operator(w).times(r))
        return float(r @ self.evaluate(w) @ r)


def fisher_metric(model, w, backend="exact", S=1000, rng=None, sampler=None):
    rng = np.random.default_rng() if rng is None else rng
    return MetricEvaluator(model, backend, S, sampler, rng).evaluate(w)


def _metric(model, metric):
    return MetricEvaluator(model) if metric is None else metric


def _residual(model, w):
    return 1.0 - check_weights(getattr(w, "values", w), model.N)


def hilbert_objective(model, w, w_hat, metric: MetricEvaluator | None = None) -> float:
    """``(1 - w)^T G(w_hat) (1 - w)``: the Hilbert-norm coreset error under ``pi_{w_hat}``."""
    return max(_metric(model, metric).quadratic(w_hat, _residual(model, w)), 0.0)


def tangent_misalignment(model, w, n, t, metric: MetricEvaluator | None = None) -> float:
    """``|| xi_{w->1} - xi_{w->w + t e_n} ||_w^2`` for straight-line tangents in weight space."""
    d = _residual(model, w)
    d[n] -= t
    return max(_metric(model, metric).quadratic(w, d), 0.0)


def greedy_alignment_score(model, w, n) -> float:
    """``corr_w[f_n, f^T (1 - w)]`` from closed-form covariances (0 if either variance is negligible)."""
    r = _residual(model, w)
    op = model.covariance_operator(1.0 - r)
    c = float(op.times(r, [n])[0])
    vn = float(op.variances([n])[0])
    vr = float(r @ op.times(r))
    if vn < VAR_GUARD or vr < VAR_GUARD:
        return 0.0
    return c / np.sqrt(vn * vr)


def _path_values(model, w, t, metric):
    w = check_weights(getattr(w, "values", w), model.N)
    r = 1.0 - w
    metric = _metric(model, metric)
    return np.array([metric.quadratic((1.0 - ti) * w + ti, r) for ti in np.atleast_1d(t)])


def _nodes(K):
    if K < 1:
        raise InputError("need at least one quadrature node")
    x, q = np.polynomial.legendre.leggauss(K)
    return 0.5 * (x + 1.0), 0.5 * q


def directed_kl_estimates(model, w, K=50, metric: MetricEvaluator | None = None):
    """``(KL(pi_w || pi_1), KL(pi_1 || pi_w))`` by ``K``-node Gauss-Legendre quadrature."""
    t, q = _nodes(K)
    h = _path_values(model, w, t, metric)
    return float(q @ ((1.0 - t) * h)), float(q @ (t * h))


def symmetrized_kl_estimate(model, w, method="quadrature", K=50, samples=1000, rng=None, metric=None) -> float:
    """``KL(pi_w || pi_1) + KL(pi_1 || pi_w)`` as the path integral of ``h``.

    ``quadrature`` uses ``K`` Gauss-Legendre nodes; ``mc-path`` averages
    ``h`` over ``samples`` uniform times.
    """
    if method == "quadrature":
        t, q = _nodes(K)
        return float(q @ _path_values(model, w, t, metric))
    if method == "mc-path":
        rng = np.random.default_rng() if rng is None else rng
        return float(_path_values(model, w, rng.uniform(size=samples), metric).mean())
    raise InputError(f"unknown method {method!r}")


def beta_kl_estimate(model, w, samples=1000, rng=None, metric=None) -> float:
    """Monte Carlo ``KL(pi_w || pi_1) = E[h(T)] / 2`` with ``T ~ Beta(1, 2)``.

    The density of ``Beta(1, 2)`` is ``2 (1 - t)``, hence the factor one half.
    """
    rng = np.random.default_rng() if rng is None else rng
    return 0.5 * float(_path_values(model, w, rng.beta(1.0, 2.0, size=samples), metric).mean())


def bound_constant(model, w, w_hat, K=50, metric: MetricEvaluator | None = None) -> float:
    """Mean over the path from ``w`` to 1 of ``lambda_max(G(w_hat)^{-1/2} G(gamma(t)) G(w_hat)^{-1/2})``."""
    metric = _metric(model, metric)
    w = check_weights(getattr(w, "values", w), model.N)
    G0 = metric.evaluate(w_hat)
    vals, vecs = np.linalg.eigh(G0)
    if vals[0] <= 1e-10 * max(vals[-1], 0.0) or vals[-1] <= 0:
        raise NumericalError(f"metric at w_hat is singular (eigenvalues in [{vals[0]:.3e}, {vals[-1]:.3e}])")
    W = vecs / np.sqrt(vals)
    t, q = _nodes(K)
    lam = [np.linalg.eigvalsh(W.T @ metric.evaluate((1.0 - ti) * w + ti) @ W)[-1] for ti in t]
    return float(q @ np.asarray(lam))
