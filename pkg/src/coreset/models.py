"""Potential families: models whose log-density is ``sum_n w_n f_n(theta) + log pi_0(theta)``.

Every model exposes ``eval_potentials`` and ``log_likelihood_derivatives``.
The two conjugate models (Gaussian mean, RBF regression) additionally give
the weighted posterior and the covariance of the potentials in closed form,
through a :class:`CovarianceOperator` that never materialises the N x N
matrix unless asked to.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import expit, gammaln

from .errors import CapabilityError, InputError, NumericalError

__all__ = [
    "GaussianDist",
    "gaussian_kl",
    "PotentialFamily",
    "GaussianMeanModel",
    "RbfRegressionModel",
    "GlmModel",
    "LogisticModel",
    "PoissonModel",
    "ScaledModel",
    "rbf_basis",
    "rbf_features",
    "weighted_posterior",
    "exact_potential_covariance",
    "glm_log_likelihood_derivatives",
    "check_weights",
]


def cholesky(a, what="matrix"):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{what} is not positive definite") from exc


def check_weights(w, N):
    w = np.asarray(getattr(w, "values", w), dtype=float)
    if w.shape != (N,):
        raise InputError(f"weights must have shape ({N},), got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InputError("weights must be finite")
    if np.any(w < 0):
        raise InputError("weights must be nonnegative")
    return w


@dataclass(frozen=True)
class GaussianDist:
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(repr=False)

    @classmethod
    def from_cov(cls, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise InputError(f"covariance shape {cov.shape} does not match mean size {mean.size}")
        cov = 0.5 * (cov + cov.T)
        return cls(mean, cov, cholesky(cov, "covariance"))

    @classmethod
    def from_precision(cls, prec, shift):
        """Gaussian with precision ``prec`` and mean ``prec^{-1} shift``."""
        prec = 0.5 * (prec + prec.T)
        c = cholesky(prec, "precision")
        cov = cho_solve((c, True), np.eye(prec.shape[0]))
        mean = cho_solve((c, True), shift)
        cov = 0.5 * (cov + cov.T)
        return cls(mean, cov, cholesky(cov, "covariance"))

    @property
    def dim(self):
        return self.mean.size

    @property
    def precision(self):
        return cho_solve((self.chol, True), np.eye(self.dim))

    def sample(self, n, rng):
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self.chol.T

    def logpdf(self, theta):
        theta = np.atleast_2d(theta)
        z = solve_triangular(self.chol, (theta - self.mean).T, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(self.chol)))
        return -0.5 * (np.sum(z**2, axis=0) + logdet + self.dim * np.log(2 * np.pi))


def gaussian_kl(p: GaussianDist, q: GaussianDist) -> float:
    """KL(p || q) between two multivariate normals."""
    a = solve_triangular(q.chol, p.chol, lower=True)
    dm = solve_triangular(q.chol, q.mean - p.mean, lower=True)
    logdet = 2.0 * (np.sum(np.log(np.diag(q.chol))) - np.sum(np.log(np.diag(p.chol))))
    return 0.5 * (np.sum(a**2) + dm @ dm - p.dim + logdet)


class PotentialFamily:
    """Base class. Subclasses set ``N``, ``D``, ``prior`` and the two flags."""

    has_conjugate_posterior = False
    has_exact_covariance = False
    N: int
    D: int
    prior: GaussianDist

    def eval_potentials(self, theta, idx=None):
        """Potentials ``f_n(theta)``; ``theta`` of shape (D,) or (S, D)."""
        raise NotImplementedError

    def log_likelihood_derivatives(self, theta, w):
        """Value, gradient and Hessian of ``sum_n w_n f_n`` at one ``theta``."""
        raise NotImplementedError

    def log_density_derivatives(self, theta, w):
        v, g, h = self.log_likelihood_derivatives(theta, w)
        prec = self._prior_precision
        d = theta - self.prior.mean
        return v - 0.5 * d @ prec @ d, g - prec @ d, h - prec

    @cached_property
    def _prior_precision(self):
        return self.prior.precision

    def weighted_posterior(self, w) -> GaussianDist:
        raise CapabilityError(f"{type(self).__name__} has no conjugate posterior")

    def covariance_operator(self, w) -> "CovarianceOperator":
        raise CapabilityError(f"{type(self).__name__} has no closed-form potential covariance")

    @staticmethod
    def _batch(theta):
        theta = np.asarray(theta, dtype=float)
        return np.atleast_2d(theta), theta.ndim == 1


class CovarianceOperator:
    """Closed-form ``cov_w[f]`` at a fixed ``w``.

    ``rows`` selects potentials; ``times(r)`` returns ``cov_w[f_rows, f^T r]``.
    """

    N: int

    def times(self, r, rows=None):
        raise NotImplementedError

    def variances(self, rows=None):
        raise NotImplementedError

    def matrix(self, rows=None, cols=None):
        raise NotImplementedError

    def entry(self, n, m):
        return float(self.matrix([n], [m])[0, 0])


def _sel(a, rows):
    return a if rows is None else a[np.asarray(rows)]


class _GaussianMeanCov(CovarianceOperator):
    # cov[f_n, f_m] = 1/2 tr(Psi^T Psi) + nu_m^T Psi nu_n
    def __init__(self, psi, nu):
        self.psi, self.nu = psi, nu
        self.N = nu.shape[0]
        self.c = 0.5 * np.sum(psi * psi)

    def times(self, r, rows=None):
        return self.c * np.sum(r) + _sel(self.nu, rows) @ (self.psi @ (self.nu.T @ r))

    def variances(self, rows=None):
        v = _sel(self.nu, rows)
        return self.c + np.einsum("ij,ij->i", v @ self.psi, v)

    def matrix(self, rows=None, cols=None):
        return self.c + _sel(self.nu, rows) @ self.psi @ _sel(self.nu, cols).T


class _RegressionCov(CovarianceOperator):
    # cov[f_n, f_m] = sigma^-4 (nu_n nu_m b_n^T b_m + 1/2 (b_n^T b_m)^2), b = L^T basis
    def __init__(self, beta, nu, noise_var):
        self.beta, self.nu = beta, nu
        self.s4 = 1.0 / noise_var**2
        self.N = nu.shape[0]

    def times(self, r, rows=None):
        b, nu = _sel(self.beta, rows), _sel(self.nu, rows)
        first = nu * (b @ (self.beta.T @ (self.nu * r)))
        m = (self.beta * r[:, None]).T @ self.beta
        second = 0.5 * np.einsum("ij,ij->i", b @ m, b)
        return self.s4 * (first + second)

    def variances(self, rows=None):
        b2 = np.sum(_sel(self.beta, rows) ** 2, axis=1)
        return self.s4 * (_sel(self.nu, rows) ** 2 * b2 + 0.5 * b2**2)

    def matrix(self, rows=None, cols=None):
        gram = _sel(self.beta, rows) @ _sel(self.beta, cols).T
        return self.s4 * (np.outer(_sel(self.nu, rows), _sel(self.nu, cols)) * gram + 0.5 * gram**2)


class GaussianMeanModel(PotentialFamily):
    """``theta ~ N(mu0, Sigma0)``, ``x_n ~ N(theta, Sigma)``; normalising constants dropped."""

    has_conjugate_posterior = True
    has_exact_covariance = True

    def __init__(self, data, prior_mean, prior_cov, likelihood_cov):
        self.data = np.atleast_2d(np.asarray(data, dtype=float))
        self.N, self.D = self.data.shape
        if self.N == 0:
            raise InputError("dataset is empty")
        if not np.all(np.isfinite(self.data)):
            raise InputError("data must be finite")
        self.prior = GaussianDist.from_cov(prior_mean, prior_cov)
        if self.prior.dim != self.D:
            raise InputError("prior dimension does not match data")
        self.likelihood_cov = np.asarray(likelihood_cov, dtype=float)
        self.Q = cholesky(self.likelihood_cov, "likelihood covariance")
        self.lik_prec = cho_solve((self.Q, True), np.eye(self.D))
        # whitened data Q^{-1} x_n
        self._xw = solve_triangular(self.Q, self.data.T, lower=True).T

    def eval_potentials(self, theta, idx=None):
        th, single = self._batch(theta)
        tw = solve_triangular(self.Q, th.T, lower=True).T
        xw = _sel(self._xw, idx)
        f = -0.5 * (np.sum(xw**2, axis=1)[None, :] - 2.0 * tw @ xw.T + np.sum(tw**2, axis=1)[:, None])
        return f[0] if single else f

    def log_likelihood_derivatives(self, theta, w):
        w = np.asarray(w, dtype=float)
        W = w.sum()
        diff = self.data - theta
        val = -0.5 * np.sum(w * np.einsum("ij,jk,ik->i", diff, self.lik_prec, diff))
        grad = self.lik_prec @ (w @ self.data - W * theta)
        return val, grad, -W * self.lik_prec

    def weighted_posterior(self, w):
        w = check_weights(w, self.N)
        p0 = self._prior_precision
        prec = p0 + w.sum() * self.lik_prec
        shift = p0 @ self.prior.mean + self.lik_prec @ (w @ self.data)
        return GaussianDist.from_precision(prec, shift)

    def covariance_operator(self, w):
        post = self.weighted_posterior(w)
        a = solve_triangular(self.Q, post.chol, lower=True)
        psi = a @ a.T
        nu = solve_triangular(self.Q, (self.data - post.mean).T, lower=True).T
        return _GaussianMeanCov(psi, nu)


def rbf_features(locations, centers, scales):
    """``b_k(x) = exp(-|x - mu_k|^2 / (2 sigma_k^2))``; returns (N, K)."""
    locations = np.atleast_2d(locations)
    d2 = np.sum((locations[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
    return np.exp(-0.5 * d2 / np.asarray(scales)[None, :] ** 2)


def rbf_basis(locations, rng, scales=(0.2, 0.4, 0.8, 1.2, 1.6, 2.0), per_scale=50, constant_scale=100.0):
    """Centers drawn uniformly from the data for each scale, plus one near-constant basis at the data mean."""
    locations = np.atleast_2d(locations)
    centers, widths = [], []
    for s in scales:
        pick = rng.integers(0, locations.shape[0], size=per_scale)
        centers.append(locations[pick])
        widths.extend([s] * per_scale)
    centers.append(locations.mean(axis=0, keepdims=True))
    widths.append(constant_scale)
    return np.vstack(centers), np.asarray(widths, dtype=float)


class RbfRegressionModel(PotentialFamily):
    """``y_n = b_n^T alpha + eps``, ``eps ~ N(0, sigma^2)``, ``alpha ~ N(mu0, sigma0^2 I)``."""

    has_conjugate_posterior = True
    has_exact_covariance = True

    def __init__(self, y, features, noise_var, prior_mean, prior_var, centers=None, scales=None):
        self.y = np.asarray(y, dtype=float).ravel()
        self.features = np.atleast_2d(np.asarray(features, dtype=float))
        self.N, self.D = self.features.shape
        if self.N == 0:
            raise InputError("dataset is empty")
        if self.y.shape[0] != self.N:
            raise InputError("responses and features disagree in length")
        if noise_var <= 0 or prior_var <= 0:
            raise InputError("noise and prior variances must be positive")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.features))):
            raise InputError("data must be finite")
        self.noise_var = float(noise_var)
        self.prior_var = float(prior_var)
        mean = np.broadcast_to(np.asarray(prior_mean, dtype=float), (self.D,)).copy()
        self.prior = GaussianDist.from_cov(mean, self.prior_var * np.eye(self.D))
        self.centers, self.scales = centers, scales

    def eval_potentials(self, theta, idx=None):
        th, single = self._batch(theta)
        resid = _sel(self.y, idx)[None, :] - th @ _sel(self.features, idx).T
        f = -0.5 * resid**2 / self.noise_var
        return f[0] if single else f

    def log_likelihood_derivatives(self, theta, w):
        w = np.asarray(w, dtype=float)
        resid = self.y - self.features @ theta
        val = -0.5 * np.sum(w * resid**2) / self.noise_var
        grad = self.features.T @ (w * resid) / self.noise_var
        hess = -(self.features * w[:, None]).T @ self.features / self.noise_var
        return val, grad, hess

    def weighted_posterior(self, w):
        w = check_weights(w, self.N)
        p0 = self._prior_precision
        prec = p0 + (self.features * w[:, None]).T @ self.features / self.noise_var
        shift = p0 @ self.prior.mean + self.features.T @ (w * self.y) / self.noise_var
        return GaussianDist.from_precision(prec, shift)

    def covariance_operator(self, w):
        post = self.weighted_posterior(w)
        beta = self.features @ post.chol
        nu = self.y - self.features @ post.mean
        return _RegressionCov(beta, nu, self.noise_var)


def _softplus(s):
    return np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s)))


class GlmModel(PotentialFamily):
    """Generalised linear model on ``z_n = [x_n; 1]`` with a Gaussian prior on theta."""

    kind = "glm"

    def __init__(self, X, y, prior: GaussianDist | None = None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        self.X = X
        self.y = np.asarray(y, dtype=float).ravel()
        self.N = X.shape[0]
        if self.N == 0:
            raise InputError("dataset is empty")
        if self.y.shape[0] != self.N:
            raise InputError("labels and covariates disagree in length")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(self.y))):
            raise InputError("data must be finite")
        self._check_labels(self.y)
        self.Z = np.hstack([X, np.ones((self.N, 1))])
        self.D = self.Z.shape[1]
        self.prior = prior if prior is not None else GaussianDist.from_cov(np.zeros(self.D), np.eye(self.D))
        if self.prior.dim != self.D:
            raise InputError(f"prior must have dimension {self.D}")

    def _check_labels(self, y):
        pass

    def link(self, s, y):
        """Potential and its first two derivatives with respect to ``s = z^T theta``."""
        raise NotImplementedError

    def eval_potentials(self, theta, idx=None):
        th, single = self._batch(theta)
        s = th @ _sel(self.Z, idx).T
        f = self.link(s, _sel(self.y, idx)[None, :], order=0)
        return f[0] if single else f

    def log_likelihood_derivatives(self, theta, w):
        w = np.asarray(w, dtype=float)
        act = np.flatnonzero(w)
        z, wa = self.Z[act], w[act]
        f, d1, d2 = self.link(z @ theta, self.y[act], order=2)
        return wa @ f, z.T @ (wa * d1), (z * (wa * d2)[:, None]).T @ z


class LogisticModel(GlmModel):
    """``y_n | theta ~ Bern(sigmoid(z_n^T theta))`` with labels in {-1, +1}."""

    kind = "logistic"

    def _check_labels(self, y):
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise InputError("logistic labels must be -1 or +1")

    def link(self, s, y, order=2):
        ys = y * s
        if order == 0:
            # log sigmoid(ys) = min(ys, 0) - log1p(exp(-|s|)) since |y| = 1; in place for speed
            t = np.abs(s)
            np.negative(t, out=t)
            np.exp(t, out=t)
            np.log1p(t, out=t)
            np.minimum(ys, 0.0, out=ys)
            ys -= t
            return ys
        f = -_softplus(-ys)
        return f, y * expit(-ys), -expit(ys) * expit(-ys)


class PoissonModel(GlmModel):
    """``y_n | theta ~ Poisson(log(1 + exp(z_n^T theta)))``."""

    kind = "poisson"

    def _check_labels(self, y):
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise InputError("Poisson labels must be nonnegative integers")

    def link(self, s, y, order=2):
        rate = _softplus(s)
        # log(softplus(s)) ~ s for very negative s, avoiding log(0)
        with np.errstate(divide="ignore"):
            lograte = np.where(s < -30.0, s, np.log(rate))
        f = y * lograte - rate - gammaln(y + 1.0)
        if order == 0:
            return f
        sig = expit(s)
        ratio = np.where(s < -30.0, 1.0, sig / np.where(rate > 0, rate, 1.0))
        d1 = y * ratio - sig
        d2 = (y * ratio - sig) * expit(-s) - y * ratio**2
        return f, d1, d2


class ScaledModel(PotentialFamily):
    """Potentials ``c_n f_n`` of a base model, for ``c_n > 0``.

    ``pi_w`` of the scaled model is ``pi_{c * w}`` of the base model.
    """

    def __init__(self, base: PotentialFamily, scales):
        self.base = base
        self.scales = np.broadcast_to(np.asarray(scales, dtype=float), (base.N,)).copy()
        if np.any(self.scales <= 0):
            raise InputError("scales must be positive")
        self.N, self.D, self.prior = base.N, base.D, base.prior
        self.has_conjugate_posterior = base.has_conjugate_posterior
        self.has_exact_covariance = base.has_exact_covariance

    def eval_potentials(self, theta, idx=None):
        return _sel(self.scales, idx) * self.base.eval_potentials(theta, idx)

    def log_likelihood_derivatives(self, theta, w):
        return self.base.log_likelihood_derivatives(theta, self.scales * np.asarray(w, dtype=float))

    def weighted_posterior(self, w):
        return self.base.weighted_posterior(self.scales * check_weights(w, self.N))

    def covariance_operator(self, w):
        return _ScaledCov(self.base.covariance_operator(self.scales * check_weights(w, self.N)), self.scales)


class _ScaledCov(CovarianceOperator):
    def __init__(self, inner, scales):
        self.inner, self.c = inner, scales
        self.N = inner.N

    def times(self, r, rows=None):
        return _sel(self.c, rows) * self.inner.times(self.c * r, rows)

    def variances(self, rows=None):
        return _sel(self.c, rows) ** 2 * self.inner.variances(rows)

    def matrix(self, rows=None, cols=None):
        return np.outer(_sel(self.c, rows), _sel(self.c, cols)) * self.inner.matrix(rows, cols)


def weighted_posterior(model: PotentialFamily, w) -> GaussianDist:
    if not model.has_conjugate_posterior:
        raise CapabilityError(f"{type(model).__name__} has no conjugate posterior")
    return model.weighted_posterior(w)


def exact_potential_covariance(model: PotentialFamily, w, n: int, m: int) -> float:
    """``cov_w[f_n, f_m]`` from the model's closed form."""
    if not model.has_exact_covariance:
        raise CapabilityError(f"{type(model).__name__} has no closed-form potential covariance")
    return model.covariance_operator(w).entry(n, m)


def glm_log_likelihood_derivatives(model: GlmModel, theta):
    """Per-point values ``f_n``, gradients (N, D) and Hessians (N, D, D) at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.D,):
        raise InputError(f"theta must have shape ({model.D},)")
    if not np.all(np.isfinite(theta)):
        raise InputError("theta must be finite")
    z = model.Z
    f, d1, d2 = model.link(z @ theta, model.y, order=2)
    return f, d1[:, None] * z, d2[:, None, None] * z[:, :, None] * z[:, None, :]
