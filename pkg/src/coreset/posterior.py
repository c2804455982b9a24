"""Samples from, and Gaussian approximations to, the coreset posterior pi_w."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, ConvergenceError, InputError, NumericalError
from .models import GaussianDist, PotentialFamily, check_weights, cholesky

__all__ = ["laplace_approximation", "PosteriorSampler", "sample", "mh_chain", "STRATEGIES"]

STRATEGIES = ("exact-conjugate", "laplace", "laplace-mh")


def laplace_approximation(model: PotentialFamily, w, init=None, tol=1e-8, max_iter=100, max_halvings=50):
    """Gaussian at the mode of ``log pi_0 + w^T f`` with the inverse negative Hessian as covariance.

    Damped Newton: each step is halved until the log-density does not
    decrease. Raises :class:`ConvergenceError` (carrying the last iterate)
    if the gradient norm is still above ``tol`` after ``max_iter`` steps.
    """
    w = check_weights(w, model.N)
    theta = np.array(model.prior.mean if init is None else init, dtype=float)
    if not np.all(np.isfinite(theta)):
        theta = model.prior.mean.copy()
    val, grad, hess = model.log_density_derivatives(theta, w)
    for it in range(max_iter + 1):
        gnorm = np.linalg.norm(grad)
        try:
            c = np.linalg.cholesky(-hess)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"negative Hessian is not positive definite at iteration {it}") from exc
        step = np.linalg.solve(c.T, np.linalg.solve(c, grad))
        if gnorm <= tol or np.linalg.norm(step) <= 1e-14 * (1.0 + np.linalg.norm(theta)):
            break
        if it == max_iter:
            raise ConvergenceError(
                f"Newton did not converge in {max_iter} iterations (|grad| = {gnorm:.3e})",
                last_iterate=theta,
                iteration=it,
            )
        slack = 1e-12 * (1.0 + abs(val))
        alpha = 1.0
        for _ in range(max_halvings + 1):
            cand = theta + alpha * step
            cval, cgrad, chess = model.log_density_derivatives(cand, w)
            if np.isfinite(cval) and cval >= val - slack:
                break
            alpha *= 0.5
        else:
            raise ConvergenceError("line search failed", last_iterate=theta, iteration=it)
        theta, val, grad, hess = cand, cval, cgrad, chess
    cov = np.linalg.solve(c.T, np.linalg.solve(c, np.eye(theta.size)))
    cov = 0.5 * (cov + cov.T)
    return GaussianDist(theta, cov, cholesky(cov, "Laplace covariance"))


def mh_chain(model: PotentialFamily, w, approx: GaussianDist, n_states, rng, scale=None, burn=500, thin=5):
    """Random-walk Metropolis on ``pi_w`` started at ``approx.mean``.

    The proposal covariance is ``scale * approx.cov`` (default ``2.38^2 / D``).
    Returns the kept states and the acceptance rate.
    """
    w = np.asarray(w, dtype=float)
    act = np.flatnonzero(w)
    wa = w[act]
    scale = 2.38**2 / model.D if scale is None else scale
    step_chol = np.sqrt(scale) * approx.chol

    def logp(th):
        return float(model.prior.logpdf(th)[0] + (model.eval_potentials(th, act) @ wa if act.size else 0.0))

    theta = approx.mean.copy()
    cur = logp(theta)
    total = burn + n_states * thin
    out = np.empty((n_states, model.D))
    accepted = 0
    noise = rng.standard_normal((total, model.D)) @ step_chol.T
    logu = np.log(rng.random(total))
    for i in range(total):
        prop = theta + noise[i]
        lp = logp(prop)
        if logu[i] < lp - cur:
            theta, cur = prop, lp
            accepted += 1
        j = i - burn
        if j >= 0 and (j + 1) % thin == 0:
            out[j // thin] = theta
    return out, accepted / total


@dataclass(frozen=True)
class PosteriorSampler:
    """Draws ``(theta_s) ~ pi_w``; stateless apart from the caller's generator."""

    strategy: str = "laplace"
    newton_tol: float = 1e-8
    max_newton_iter: int = 100
    max_halvings: int = 50
    mh_step_scale: float | None = None
    mh_burn: int = 500
    mh_thin: int = 5

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InputError(f"unknown sampler strategy {self.strategy!r}; expected one of {STRATEGIES}")

    def fit(self, model, w, init=None) -> GaussianDist:
        """Gaussian the draws come from (exact posterior or Laplace approximation)."""
        if self.strategy == "exact-conjugate":
            if not model.has_conjugate_posterior:
                raise CapabilityError("exact-conjugate sampling requires a conjugate model")
            return model.weighted_posterior(w)
        return laplace_approximation(
            model, w, init=init, tol=self.newton_tol, max_iter=self.max_newton_iter, max_halvings=self.max_halvings
        )

    def draw(self, model, w, fit: GaussianDist, S, rng):
        if S < 1:
            raise InputError("S must be at least 1")
        if self.strategy == "laplace-mh":
            draws, _ = mh_chain(model, w, fit, S, rng, self.mh_step_scale, self.mh_burn, self.mh_thin)
        else:
            draws = fit.sample(S, rng)
        if not np.all(np.isfinite(draws)):
            raise NumericalError("sampler produced non-finite draws")
        return draws

    def sample(self, model, w, S, rng, init=None):
        w = check_weights(w, model.N)
        return self.draw(model, w, self.fit(model, w, init), S, rng)


def sample(sampler: PosteriorSampler, model, w, S, rng):
    return sampler.sample(model, w, S, rng)
