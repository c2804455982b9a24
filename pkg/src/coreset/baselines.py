"""Comparison constructions: Hilbert coresets via random projection + GIGA, and uniform subsampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .errors import InputError, NumericalError
from .models import GaussianDist
from .posterior import laplace_approximation
from .sparsevi import Weights

__all__ = [
    "ProjectedVectors",
    "WEIGHTING_NOISE_CONVENTION",
    "random_projection",
    "make_weighting",
    "giga",
    "projected_objective",
    "nnls_polish",
    "uniform_subsample",
]

WEIGHTING_NOISE_CONVENTION = "per-component-multiplicative-uniform"


@dataclass(frozen=True)
class ProjectedVectors:
    """Centered potential evaluations, one row per data point, scaled by ``1/sqrt(S)``."""

    vectors: np.ndarray
    weighting: GaussianDist | None = None
    mode: str = "custom"

    @property
    def N(self):
        return self.vectors.shape[0]

    @property
    def S(self):
        return self.vectors.shape[1]


def random_projection(model, weighting: GaussianDist, S_proj=100, rng=None, mode="custom") -> ProjectedVectors:
    if S_proj < 1:
        raise InputError("S_proj must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    draws = weighting.sample(S_proj, rng)
    F = np.atleast_2d(model.eval_potentials(draws))
    if not np.all(np.isfinite(F)):
        raise NumericalError("non-finite potential values in random projection")
    G = (F - F.mean(axis=0)).T / np.sqrt(S_proj)
    return ProjectedVectors(G, weighting, mode)


def _posterior_moments(model):
    ones = np.ones(model.N)
    if model.has_conjugate_posterior:
        return model.weighted_posterior(ones)
    return laplace_approximation(model, ones)


def make_weighting(model, mode="realistic", rng=None, noise=0.75, u=None) -> GaussianDist:
    """Weighting Gaussian for the Hilbert norm.

    ``optimal`` uses the exact (or Laplace) posterior moments. ``realistic``
    interpolates prior and posterior moments at ``u ~ Unif[0, 1]`` and
    multiplies every mean and covariance entry by ``1 + noise * eps``,
    ``eps ~ Unif[-1, 1]``; the covariance is then symmetrised and its
    eigenvalues clipped at 1e-8.
    """
    post = _posterior_moments(model)
    if mode == "optimal":
        return post
    if mode != "realistic":
        raise InputError(f"unknown weighting mode {mode!r}")
    rng = np.random.default_rng() if rng is None else rng
    u = rng.uniform() if u is None else u
    prior = model.prior
    mean = (1.0 - u) * prior.mean + u * post.mean
    cov = (1.0 - u) * prior.cov + u * post.cov
    D = mean.size
    mean = mean * (1.0 + noise * rng.uniform(-1.0, 1.0, size=D))
    cov = cov * (1.0 + noise * rng.uniform(-1.0, 1.0, size=(D, D)))
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("weighting covariance has non-finite eigenvalues")
    cov = (vecs * np.maximum(vals, 1e-8)) @ vecs.T
    return GaussianDist.from_cov(mean, cov)


def projected_objective(vectors: ProjectedVectors | np.ndarray, w) -> float:
    """``|| sum_n g_n - sum_n w_n g_n ||^2``."""
    G = getattr(vectors, "vectors", vectors)
    w = np.asarray(getattr(w, "values", w), dtype=float)
    r = G.sum(axis=0) - w @ G
    return float(r @ r)


def nnls_polish(vectors, w) -> Weights:
    """Re-solve the weights on the support of ``w`` by nonnegative least squares."""
    G = getattr(vectors, "vectors", vectors)
    w = np.asarray(getattr(w, "values", w), dtype=float)
    act = np.flatnonzero(w > 0)
    out = np.zeros_like(w)
    if act.size:
        out[act], _ = nnls(G[act].T, G.sum(axis=0))
    return Weights(out)


def giga(vectors: ProjectedVectors | np.ndarray, M, callback=None) -> Weights:
    """Greedy iterative geodesic ascent.

    Works with the unit vectors of the target ``sum_n g_n`` and of every
    atom, keeps a unit-norm combination of selected atoms, and at each
    iteration moves along the great circle towards the atom best aligned
    with the geodesic direction to the target. The final weights are scaled
    so that the combination is the projection of the target onto its ray.
    ``callback(m, weights)`` receives the scaled weights after each
    iteration, so one run yields every budget up to ``M``.
    """
    G = np.asarray(getattr(vectors, "vectors", vectors), dtype=float)
    if M < 0:
        raise InputError("M must be nonnegative")
    N = G.shape[0]
    target = G.sum(axis=0)
    tnorm = np.linalg.norm(target)
    norms = np.linalg.norm(G, axis=1)
    usable = norms > 0
    w = np.zeros(N)
    if tnorm == 0 or not np.any(usable) or M == 0:
        return Weights(w)
    ell = target / tnorm
    atoms = np.zeros_like(G)
    atoms[usable] = G[usable] / norms[usable, None]
    cur = np.zeros_like(ell)

    def scaled():
        out = np.zeros(N)
        a = float(ell @ cur)
        if a > 0:
            out[usable] = w[usable] * tnorm * a / norms[usable]
        return out

    for m in range(1, M + 1):
        if m == 1:
            scores = np.where(usable, atoms @ ell, -np.inf)
            n = int(np.argmax(scores))
            w[n] = 1.0
            cur = atoms[n].copy()
        else:
            dt = ell - (ell @ cur) * cur
            dnorm = np.linalg.norm(dt)
            if dnorm > 1e-14:
                dt /= dnorm
                dn = atoms - np.outer(atoms @ cur, cur)
                nn = np.linalg.norm(dn, axis=1)
                ok = usable & (nn > 1e-14)
                scores = np.full(N, -np.inf)
                scores[ok] = (dn[ok] @ dt) / nn[ok]
                if np.any(ok):
                    n = int(np.argmax(scores))
                    z0, z1, z2 = ell @ atoms[n], ell @ cur, atoms[n] @ cur
                    num = z0 - z1 * z2
                    den = num + (z1 - z0 * z2)
                    gamma = min(max(num / den, 0.0), 1.0) if den > 0 else 0.0
                    cur = (1.0 - gamma) * cur + gamma * atoms[n]
                    w *= 1.0 - gamma
                    w[n] += gamma
                    s = np.linalg.norm(cur)
                    cur /= s
                    w /= s
        out = scaled()
        if callback is not None:
            callback(m, Weights(out))
        if tnorm**2 * max(1.0 - float(ell @ cur) ** 2, 0.0) < 1e-12:
            if callback is not None:
                for k in range(m + 1, M + 1):
                    callback(k, Weights(out))
            break
    return Weights(scaled())


def uniform_subsample(N, M, rng=None) -> Weights:
    """``M`` indices without replacement, each weighted ``N / M``."""
    if M < 1 or M > N:
        raise InputError(f"need 1 <= M <= N, got M={M}, N={N}")
    rng = np.random.default_rng() if rng is None else rng
    w = np.zeros(N)
    w[rng.choice(N, size=M, replace=False)] = N / M
    return Weights(w)
