"""Greedy sparse variational inference for Bayesian coresets.

Coreset posteriors ``pi_w ∝ exp(w^T f(theta)) pi_0(theta)`` form an
exponential family with natural parameter ``w``, so

    grad_w KL(pi_w || pi_1) = -cov_w[f, f^T (1 - w)].

The construction alternates greedy selection of the potential most
correlated with the residual ``f^T (1 - w)`` with a weight refinement over
the active set. Covariances come either from Monte Carlo draws of ``pi_w``
(any model plus a :class:`~coreset.posterior.PosteriorSampler`) or from the
model's closed forms when it has them.

Weight steps are scaled per coordinate by the inverse variance of ``f_n``
under ``pi_w`` (the diagonal of the Fisher metric). This keeps the update
invariant to rescaling individual potentials, which is the same reason the
selection rule uses correlations; set ``precondition=False`` for the plain
projected SGD step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import ConvergenceError, CoresetError, IndefiniteHessianError, InputError, NumericalError
from .models import PotentialFamily, check_weights, gaussian_kl
from .posterior import PosteriorSampler

__all__ = [
    "Weights",
    "CenteredPotentialMatrix",
    "SparseViConfig",
    "VARIANTS",
    "VAR_GUARD",
    "centered_potentials",
    "residual_coefficients",
    "estimate_correlations",
    "estimate_kl_gradient",
    "exact_correlations",
    "exact_kl_gradient",
    "select_greedy",
    "update_weights_sgd",
    "update_weights_single",
    "line_search_gradient",
    "update_weights_quadratic",
    "quadratic_step",
    "sparsevi",
    "potential_scales",
    "l1_upper_bound",
    "l1_construct",
    "L1Result",
    "L1SearchConfig",
    "L1SearchResult",
    "l1_binary_search",
]

VARIANTS = ("full-sgd", "single", "quadratic")
VAR_GUARD = 1e-12


@dataclass(frozen=True)
class Weights:
    """Nonnegative coreset weights; ``active`` lists the indices with ``w_n > 0``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InputError("weights must be a finite nonnegative vector")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, N):
        return cls(np.zeros(N))

    @classmethod
    def from_pairs(cls, N, pairs):
        v = np.zeros(N)
        for i, x in pairs:
            v[int(i)] = x
        return cls(v)

    @property
    def N(self):
        return self.values.size

    @property
    def active(self):
        return np.flatnonzero(self.values > 0)

    @property
    def nnz(self):
        return int(np.count_nonzero(self.values > 0))

    def pairs(self):
        return [(int(i), float(self.values[i])) for i in self.active]


@dataclass(frozen=True)
class CenteredPotentialMatrix:
    """Rows ``g_s = f(theta_s) - mean_r f(theta_r)`` restricted to the columns ``index``."""

    values: np.ndarray
    index: np.ndarray
    N: int

    @property
    def S(self):
        return self.values.shape[0]

    @property
    def column_variance(self):
        return np.mean(self.values**2, axis=0)

    @property
    def full(self):
        return self.index.size == self.N


def centered_potentials(model: PotentialFamily, draws, index=None) -> CenteredPotentialMatrix:
    draws = np.atleast_2d(draws)
    if draws.shape[0] == 0:
        raise InputError("need at least one draw")
    index = np.arange(model.N) if index is None else np.asarray(index, dtype=int)
    F = model.eval_potentials(draws, None if index.size == model.N else index)
    if not np.all(np.isfinite(F)):
        bad = index[np.flatnonzero(~np.all(np.isfinite(F), axis=0))]
        raise NumericalError(f"non-finite potential values at index {int(bad[0])}")
    return CenteredPotentialMatrix(F - F.mean(axis=0), index, model.N)


def residual_coefficients(index, w, N, active=None):
    """Coefficients ``r`` on the columns ``index`` such that ``f_index^T r`` estimates ``f^T (1 - w)``.

    Known indices (``active``, default ``w > 0``) get ``1 - w_n``; when
    ``index`` is a subsample, the remaining columns stand in for all
    unknown potentials and are scaled up accordingly.
    """
    index = np.asarray(index)
    if index.size == N:
        return 1.0 - w
    known = np.flatnonzero(w > 0) if active is None else np.union1d(np.asarray(active, dtype=int), np.flatnonzero(w > 0))
    in_known = np.isin(index, known)
    r = np.where(in_known, 1.0 - w[index], 0.0)
    rest = ~in_known
    n_rest = int(np.count_nonzero(rest))
    if n_rest:
        r[rest] = (N - known.size) / n_rest
    return r


def _guarded_ratio(num, var):
    out = np.zeros_like(num)
    ok = var >= VAR_GUARD
    out[ok] = num[ok] / np.sqrt(var[ok])
    return out


def _cov_with_residual(G: CenteredPotentialMatrix, w, active=None):
    r = residual_coefficients(G.index, np.asarray(getattr(w, "values", w), dtype=float), G.N, active)
    return G.values.T @ (G.values @ r) / G.S


def estimate_correlations(G: CenteredPotentialMatrix, w, active=None):
    """Monte Carlo estimate of ``corr[f_n, f^T (1 - w)]`` up to a positive constant, per column of ``G``."""
    return _guarded_ratio(_cov_with_residual(G, w, active), G.column_variance)


def estimate_kl_gradient(G: CenteredPotentialMatrix, w, active=None):
    """``D = -(1/S) sum_s g_s g_s^T (1 - w)`` on the columns of ``G``."""
    return -_cov_with_residual(G, w, active)


def exact_correlations(model, w, index=None):
    op = model.covariance_operator(w)
    w = np.asarray(getattr(w, "values", w), dtype=float)
    return _guarded_ratio(op.times(1.0 - w, index), op.variances(index))


def exact_kl_gradient(model, w, index=None):
    """``-cov_w[f, f^T (1 - w)]`` from closed-form covariances."""
    op = model.covariance_operator(w)
    w = np.asarray(getattr(w, "values", w), dtype=float)
    return -op.times(1.0 - w, index)


def select_greedy(corr, w, index=None, active=None) -> int:
    """Index maximising ``|corr_n|`` over active and ``corr_n`` over inactive potentials.

    Ties go to the lowest index. ``index`` maps entries of ``corr`` to model
    indices (identity when omitted) and must be sorted.
    """
    corr = np.asarray(corr, dtype=float)
    w = np.asarray(getattr(w, "values", w), dtype=float)
    index = np.arange(corr.size) if index is None else np.asarray(index)
    is_active = w[index] > 0
    if active is not None:
        is_active |= np.isin(index, active)
    scores = np.where(is_active, np.abs(corr), corr)
    return int(index[int(np.argmax(scores))])


class _Moments:
    """Covariances of the potentials with the residual under ``pi_w``, exact or by Monte Carlo."""

    def __init__(self, model, sampler, S, rng, exact):
        self.model, self.sampler, self.S, self.rng = model, sampler, S, rng
        self.exact = exact
        self.mode = None
        self.last = None

    def at(self, w, active, index, rows=None):
        """``cov[f_rows, f^T r]`` and ``var[f_rows]`` where ``f_index^T r`` stands for the residual.

        ``rows`` are model indices contained in ``index`` (default: all of ``index``).
        """
        N = self.model.N
        if self.exact:
            op = self.model.covariance_operator(w)
            sel = rows if rows is not None else (None if index.size == N else index)
            return op.times(1.0 - w, sel), op.variances(sel)
        draws = self.draw(w)
        F = self.model.eval_potentials(draws, None if index.size == N else index)
        fr = F @ residual_coefficients(index, w, N, active)
        proj = fr - fr.mean()
        Fc = F if rows is None else F[:, np.searchsorted(index, rows)]
        Fc = Fc - Fc.mean(axis=0)
        if not (np.all(np.isfinite(proj)) and np.all(np.isfinite(Fc))):
            centered_potentials(self.model, draws, index)
            raise NumericalError("non-finite potential values")
        return Fc.T @ proj / self.S, np.mean(Fc**2, axis=0)

    def draw(self, w):
        fit = self.sampler.fit(self.model, w, init=self.mode)
        self.mode = fit.mean
        draws = self.sampler.draw(self.model, w, fit, self.S, self.rng)
        self.last = (w.copy(), draws)
        return draws

    def centered(self, w, index, reuse=False):
        if reuse and self.last is not None and np.array_equal(self.last[0], w):
            draws = self.last[1]
        else:
            draws = self.draw(w)
        return centered_potentials(self.model, draws, index)


def _step(grad, var, precondition):
    if not precondition:
        return grad
    out = np.zeros_like(grad)
    ok = var >= VAR_GUARD
    out[ok] = grad[ok] / var[ok]
    return out


@dataclass(frozen=True)
class SparseViConfig:
    """Settings for :func:`sparsevi`.

    ``M`` greedy iterations, ``S`` draws per estimate, ``T`` weight-update
    steps per iteration with learning rate ``gamma0 / t``, optional
    subsample size ``U``. ``exact`` uses closed-form covariances when the
    model offers them.
    """

    M: int = 10
    S: int = 100
    T: int = 100
    gamma0: float = 1.0
    U: int | None = None
    variant: str = "full-sgd"
    seed: int = 0
    exact: bool = True
    precondition: bool = True

    def __post_init__(self):
        if min(self.M, self.S, self.T) < 0:
            raise InputError("M, S and T must be nonnegative")
        if self.gamma0 <= 0:
            raise InputError("gamma0 must be positive")
        if self.U is not None and self.U < 1:
            raise InputError("U must be positive")
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")


def _subsample_index(N, active, U, rng):
    if U is None or U >= N:
        return np.arange(N)
    return np.union1d(np.asarray(active, dtype=int), rng.choice(N, size=U, replace=False))


def _sgd(moments, w, active, T, gamma0, U, rng, precondition):
    w = w.copy()
    act = np.asarray(sorted(active), dtype=int)
    if act.size == 0:
        raise InputError("active set is empty")
    N = w.size
    for t in range(1, T + 1):
        index = _subsample_index(N, act, U, rng)
        cov_r, var = moments.at(w, act, index, rows=act)
        step = _step(-cov_r, var, precondition)
        w[act] = np.maximum(w[act] - gamma0 / t * step, 0.0)
    return w


def update_weights_sgd(model, sampler, w, T, gamma0, S, U=None, rng=None, active=None, exact=None, precondition=True):
    """``T`` projected SGD steps on the active coordinates with ``gamma_t = gamma0 / t``.

    Coordinates outside ``active`` (default: ``w > 0``) are never touched.
    """
    w = check_weights(w, model.N)
    rng = np.random.default_rng() if rng is None else rng
    exact = (sampler is None) if exact is None else exact
    active = np.flatnonzero(w > 0) if active is None else active
    moments = _Moments(model, sampler, S, rng, exact)
    try:
        return Weights(_sgd(moments, w, active, T, gamma0, U, rng, precondition))
    except CoresetError as exc:
        exc.last_iterate = w
        raise


def line_search_gradient(model, w, n, alpha, beta):
    """Exact ``(dKL/dalpha, dKL/dbeta)`` at ``omega = beta * w + alpha * 1_n``."""
    w = check_weights(w, model.N)
    om = beta * w
    om[n] += alpha
    g = exact_kl_gradient(model, om)
    return float(g[n]), float(w @ g)


def _single(moments, w, n, T, gamma0, precondition):
    N = w.size
    alpha, beta = 0.0, 1.0
    e = np.zeros(N)
    e[n] = 1.0
    has_w = np.any(w > 0)
    for t in range(1, T + 1):
        om = beta * w + alpha * e
        if moments.exact:
            op = moments.model.covariance_operator(om)
            r = 1.0 - om
            ga = -float(op.times(r, [n])[0])
            va = float(op.variances([n])[0])
            if has_w:
                gw = op.times(w)
                gb = -float(w @ op.times(r))
                vb = float(w @ gw)
            else:
                gb = vb = 0.0
        else:
            active = np.flatnonzero(om > 0) if np.any(om > 0) else np.array([n])
            G = moments.centered(om, np.arange(N))
            r = residual_coefficients(G.index, om, N, np.union1d(active, [n]))
            proj = G.values @ r
            ga = -float(G.values[:, n] @ proj) / G.S
            va = float(G.column_variance[n])
            pw = G.values @ w
            gb = -float(pw @ proj) / G.S
            vb = float(pw @ pw) / G.S
        sa, sb = _step(np.array([ga, gb]), np.array([va, vb]), precondition)
        alpha = max(alpha - gamma0 / t * sa, 0.0)
        if has_w:
            beta = max(beta - gamma0 / t * sb, 0.0)
    return beta * w + alpha * e


def update_weights_single(model, sampler, w, n, T, gamma0, S=100, rng=None, exact=None, precondition=True):
    """Optimise ``(alpha, beta) >= 0`` for ``omega = beta * w + alpha * 1_n`` by projected SGD."""
    w = check_weights(w, model.N)
    if not 0 <= n < model.N:
        raise InputError(f"index {n} out of range")
    rng = np.random.default_rng() if rng is None else rng
    exact = (sampler is None) if exact is None else exact
    moments = _Moments(model, sampler, S, rng, exact)
    try:
        return Weights(_single(moments, w, n, T, gamma0, precondition))
    except CoresetError as exc:
        exc.last_iterate = w
        raise


def quadratic_step(H, D, w, gamma):
    """Minimise the quadratic model ``D^T (v - w) + 1/2 (v - w)^T H (v - w)`` over ``v >= 0``
    as a nonnegative least-squares problem, then return ``(1 - gamma) w + gamma v*``.
    """
    try:
        L = np.linalg.cholesky(0.5 * (H + H.T))
    except np.linalg.LinAlgError as exc:
        raise IndefiniteHessianError("Hessian estimate is not positive definite on the active set") from exc
    target = L.T @ w - np.linalg.solve(L, D)
    v, _ = nnls(L.T, target)
    return (1.0 - gamma) * w + gamma * v


def update_weights_quadratic(G: CenteredPotentialMatrix, w, active, gamma):
    """One quadratic-model update of the active weights from the draws in ``G``.

    Raises :class:`IndefiniteHessianError` when the Hessian estimate
    ``(1/S) sum_s g_s g_s^T (1 - g_s^T (1 - w))`` is not positive definite;
    callers then take an SGD step instead.
    """
    w = np.asarray(getattr(w, "values", w), dtype=float)
    act = np.asarray(sorted(active), dtype=int)
    r = residual_coefficients(G.index, w, G.N, act)
    proj = G.values @ r
    ga = G.values[:, np.searchsorted(G.index, act)]
    D = -(ga.T @ proj) / G.S
    H = (ga * (1.0 - proj)[:, None]).T @ ga / G.S
    out = w.copy()
    out[act] = quadratic_step(H, D, w[act], gamma)
    return Weights(np.maximum(out, 0.0))


def _quadratic(moments, w, active, T, gamma0, U, rng, precondition):
    w = w.copy()
    act = np.asarray(sorted(active), dtype=int)
    N = w.size
    for t in range(1, T + 1):
        index = _subsample_index(N, act, U, rng)
        G = moments.centered(w, index, reuse=(t == 1))
        try:
            w = update_weights_quadratic(G, w, act, gamma0 / t).values
        except IndefiniteHessianError:
            r = residual_coefficients(G.index, w, N, act)
            cov_r = G.values.T @ (G.values @ r) / G.S
            pos = np.searchsorted(G.index, act)
            step = _step(-cov_r[pos], G.column_variance[pos], precondition)
            w[act] = np.maximum(w[act] - gamma0 / t * step, 0.0)
    return w


def sparsevi(model: PotentialFamily, sampler: PosteriorSampler | None = None, config: SparseViConfig = SparseViConfig(), callback=None) -> Weights:
    """Greedy sparse stochastic variational inference.

    Runs ``config.M`` iterations of sample, center, correlate, select and
    re-weight. A point may be selected again; ``M`` counts iterations, so
    the result has at most ``M`` nonzero weights. ``callback(m, weights)``
    is invoked after every iteration.
    """
    rng = np.random.default_rng(config.seed)
    N = model.N
    exact = config.exact and model.has_exact_covariance
    if config.variant == "quadratic":
        exact = False
        if sampler is None and model.has_conjugate_posterior:
            sampler = PosteriorSampler("exact-conjugate")
    if not exact and sampler is None:
        raise InputError("a sampler is required for models without closed-form covariances")
    moments = _Moments(model, sampler, config.S, rng, exact)
    w = np.zeros(N)
    active: list[int] = []
    for m in range(1, config.M + 1):
        try:
            index = _subsample_index(N, active, config.U, rng)
            cov_r, var = moments.at(w, active, index)
            corr = _guarded_ratio(cov_r, var)
            n = select_greedy(corr, w, index, active)
            if n not in active:
                active.append(n)
            if config.variant == "full-sgd":
                w = _sgd(moments, w, active, config.T, config.gamma0, config.U, rng, config.precondition)
            elif config.variant == "single":
                w = _single(moments, w, n, config.T, config.gamma0, config.precondition)
            else:
                w = _quadratic(moments, w, active, config.T, config.gamma0, config.U, rng, config.precondition)
        except CoresetError as exc:
            exc.iteration = m
            exc.last_iterate = w
            raise
        if callback is not None:
            callback(m, Weights(w.copy()))
    return Weights(w)


# l1-regularised construction


def potential_scales(model, S=2000, seed=0):
    """``var_0 f_n``: exact when the model has closed forms, else Monte Carlo under the prior."""
    if model.has_exact_covariance:
        return model.covariance_operator(np.zeros(model.N)).variances()
    draws = model.prior.sample(S, np.random.default_rng(seed))
    return centered_potentials(model, draws).column_variance


def _prior_cov_with_total(model, S=2000, seed=0):
    if model.has_exact_covariance:
        return model.covariance_operator(np.zeros(model.N)).times(np.ones(model.N))
    draws = model.prior.sample(S, np.random.default_rng(seed))
    G = centered_potentials(model, draws)
    return G.values.T @ G.values.sum(axis=1) / G.S


def l1_upper_bound(model, scales=None, S=2000, seed=0):
    """Smallest ``lambda`` at which ``w = 0`` is a fixed point: ``max_n |cov_0[f_n, f^T 1]| / var_0 f_n``."""
    scales = potential_scales(model, S, seed) if scales is None else scales
    c = _prior_cov_with_total(model, S, seed)
    ok = scales >= VAR_GUARD
    return float(np.max(np.abs(c[ok]) / scales[ok])) if np.any(ok) else 0.0


@dataclass(frozen=True)
class L1Result:
    weights: Weights
    aborted: bool
    steps: int


class _ExactL1:
    """``KL(pi_w || pi_1) + lam * scales^T w`` and its gradient from closed forms."""

    def __init__(self, model, scales):
        self.model, self.scales = model, scales
        self.full = model.weighted_posterior(np.ones(model.N))

    def kl(self, w):
        return gaussian_kl(self.model.weighted_posterior(w), self.full)

    def grad(self, w):
        return exact_kl_gradient(self.model, w)


def _fista(obj, lam, w, work, iters, tol=1e-10):
    """Accelerated proximal gradient on the coordinates ``work`` with backtracking on the exact KL."""
    sc = obj.scales
    y, tk, step = w.copy(), 1.0, 1.0
    used = 0
    for used in range(1, iters + 1):
        g = obj.grad(y)
        fy = obj.kl(y)
        for _ in range(60):
            z = y.copy()
            z[work] = np.maximum(y[work] - step * (g[work] + lam * sc[work]), 0.0)
            d = z - y
            if obj.kl(z) <= fy + g @ d + d @ d / (2.0 * step) + 1e-15 * (1.0 + abs(fy)):
                break
            step *= 0.5
        else:
            raise ConvergenceError("proximal line search failed", last_iterate=w, iteration=used)
        done = np.linalg.norm(z - w) <= tol * (1.0 + np.linalg.norm(w))
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        y = np.maximum(z + (tk - 1.0) / tn * (z - w), 0.0)
        w, tk = z, tn
        step *= 1.5
        if done:
            break
    return w, used


def _l1_exact(model, lam, steps, scales, cap, init):
    """Working-set solver: optimise over the current support, then admit the single
    coordinate that most violates the optimality conditions."""
    obj = _ExactL1(model, scales)
    N = model.N
    w = np.zeros(N) if init is None else np.array(init, dtype=float)
    total = 0
    for _ in range(N + 1):
        work = np.flatnonzero(w > 0)
        if work.size:
            w, used = _fista(obj, lam, w, work, steps)
            total += used
        work = np.flatnonzero(w > 0)
        viol = -obj.grad(w) - lam * scales
        viol[work] = -np.inf
        n = int(np.argmax(viol))
        if viol[n] <= 1e-12 * max(lam * scales[n], 1e-300):
            break
        if cap is not None and work.size + 1 > cap:
            return L1Result(Weights(w), True, total)
        # a tiny positive value puts n into the next working set
        w[n] = np.finfo(float).tiny
    return L1Result(Weights(w), False, total)


def l1_construct(
    model, lam, steps=200, gamma0=1.0, sampler=None, S=100, seed=0, exact=True, scales=None, cap=None,
    precondition=True, rng=None, init=None,
) -> L1Result:
    """Minimise ``KL(pi_w || pi) + lam * scales^T w`` over ``w >= 0``.

    With closed-form covariances the problem is deterministic and is solved
    by accelerated proximal gradient with backtracking on a working set that
    grows one coordinate at a time (``steps`` iterations per working set).
    Otherwise each of ``steps`` iterations soft-thresholds
    ``w - gamma_t D`` by ``gamma_t * lam * scales`` with ``gamma_t = gamma0 / t``
    and clips at zero (the sign in the usual soft-threshold is redundant on
    the nonnegative orthant); with ``precondition`` the step and threshold
    are divided by ``var_w f_n``. Either way the run stops, flagged
    ``aborted``, once the support exceeds ``cap``. ``init`` warm-starts.
    """
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    rng = np.random.default_rng(seed) if rng is None else rng
    exact = exact and model.has_exact_covariance and model.has_conjugate_posterior
    if not exact and sampler is None:
        raise InputError("a sampler is required for models without closed-form covariances")
    scales = potential_scales(model, seed=seed) if scales is None else np.asarray(scales, dtype=float)
    if init is not None:
        init = check_weights(getattr(init, "values", init), model.N)
    if exact:
        return _l1_exact(model, lam, steps, scales, cap, init)
    moments = _Moments(model, sampler, S, rng, False)
    N = model.N
    w = np.zeros(N) if init is None else init.copy()
    everything = np.arange(N)
    for t in range(1, steps + 1):
        cov_r, var = moments.at(w, everything, everything)
        gamma = gamma0 / t
        if precondition:
            inv = np.where(var >= VAR_GUARD, 1.0 / np.maximum(var, VAR_GUARD), 0.0)
        else:
            inv = np.ones(N)
        w = np.maximum(w + gamma * inv * cov_r - gamma * lam * scales * inv, 0.0)
        if cap is not None and np.count_nonzero(w) > cap:
            return L1Result(Weights(w), True, t)
    return L1Result(Weights(w), False, steps)


@dataclass(frozen=True)
class L1SearchConfig:
    """``max_bisections`` bounds the failed trials; ``min_ratio`` the smallest ``lambda / lambda_u`` tried."""

    steps: int = 200
    gamma0: float = 1.0
    max_bisections: int = 20
    max_runs: int = 100
    min_ratio: float = 1e-12
    S: int = 100
    seed: int = 0
    exact: bool = True
    precondition: bool = True


@dataclass
class L1SearchResult:
    weights: Weights
    lam: float
    conforming: bool
    history: list = field(default_factory=list)


def l1_binary_search(model, M, config: L1SearchConfig = L1SearchConfig(), sampler=None) -> L1SearchResult:
    """Smallest ``lambda`` (densest solution) found with at most ``M`` nonzero weights.

    Starts at the upper bound, where ``w = 0`` (doubling it while Monte
    Carlo noise keeps the run too dense), and lowers ``lambda``
    geometrically, warm-starting each run from the last conforming solution.
    A run that ends with more than ``M`` weights, or aborts because the
    support passed ``2 M``, bisects the log-ratio towards the last
    conforming ``lambda`` instead. If nothing conforms, the sparsest iterate
    seen is returned with ``conforming=False``.
    """
    if M < 1:
        raise InputError("M must be at least 1")
    scales = potential_scales(model, seed=config.seed)
    kw = dict(
        steps=config.steps, gamma0=config.gamma0, sampler=sampler, S=config.S, seed=config.seed,
        exact=config.exact, scales=scales, cap=2 * M, precondition=config.precondition,
    )
    history = []

    def run(lam, init=None):
        res = l1_construct(model, lam, init=init, **kw)
        history.append((lam, res.weights.nnz, res.aborted))
        return res

    if M >= model.N:
        res = run(0.0)
        return L1SearchResult(res.weights, 0.0, True, history)
    upper = l1_upper_bound(model, scales, seed=config.seed)
    # with sampled moments w = 0 need not be a fixed point at the estimated
    # upper bound, so grow lambda until a run conforms
    hi, failures = upper, 0
    best = sparsest = run(hi)
    while (best.aborted or best.weights.nnz > M) and failures < config.max_bisections and hi > 0:
        failures += 1
        hi *= 2.0
        best = run(hi)
        if best.weights.nnz < sparsest.weights.nnz:
            sparsest = best
    if best.aborted or best.weights.nnz > M:
        best = None
    ratio = 0.5
    while len(history) < config.max_runs and failures <= config.max_bisections:
        lam = hi * ratio
        if lam < config.min_ratio * upper:
            break
        res = run(lam, None if best is None else best.weights)
        if res.weights.nnz < sparsest.weights.nnz:
            sparsest = res
        if not res.aborted and res.weights.nnz <= M:
            best, hi = res, lam
            ratio = max(ratio * ratio, 1e-3)
        else:
            failures += 1
            ratio = np.sqrt(ratio)
            if best is None:
                hi = lam
    if best is None:
        return L1SearchResult(sparsest.weights, hi, False, history)
    return L1SearchResult(best.weights, hi, True, history)
