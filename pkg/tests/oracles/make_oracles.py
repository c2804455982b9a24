"""Independent reference values for the test suite.

Uses only numpy/scipy (never the package under test) and writes
``frozen.json`` next to this file. Rerun only if an oracle definition changes.
"""
import json
from pathlib import Path

import numpy as np
from scipy import integrate, optimize, stats

OUT = Path(__file__).with_name("frozen.json")


def posterior_1d():
    # theta ~ N(0, 1), x_n ~ N(theta, 1), data {1, 3}, w = (1, 1): normalise by quadrature
    def dens(t):
        return np.exp(-0.5 * t**2 - 0.5 * (1 - t) ** 2 - 0.5 * (3 - t) ** 2)

    Z = integrate.quad(dens, -30, 30, epsabs=1e-13)[0]
    m = integrate.quad(lambda t: t * dens(t), -30, 30, epsabs=1e-13)[0] / Z
    v = integrate.quad(lambda t: (t - m) ** 2 * dens(t), -30, 30, epsabs=1e-13)[0] / Z
    return {"mean": m, "var": v}


def potential_cov_mc():
    # theta ~ N(mu_w, 0.5), f(theta) = -(x - theta)^2 / 2 with x - mu_w = 2
    rng = np.random.default_rng(11)
    th = rng.normal(0.0, np.sqrt(0.5), size=10**6)
    f = -0.5 * (2.0 - th) ** 2
    return {"cov": float(np.var(f)), "n": 10**6}


def fisher_two_points():
    # d = 1, prior N(0, 1), Sigma = 1, data {0.5, -1.0}, w = (0.7, 1.3); 1e6-draw metric
    x = np.array([0.5, -1.0])
    w = np.array([0.7, 1.3])
    prec = 1.0 + w.sum()
    mean = (w @ x) / prec
    rng = np.random.default_rng(12)
    th = rng.normal(mean, np.sqrt(1.0 / prec), size=10**6)
    F = -0.5 * (x[None, :] - th[:, None]) ** 2
    return {"x": x.tolist(), "w": w.tolist(), "G": np.cov(F.T).tolist()}


def eq1_objective():
    # random 3-d instance; Var_{pi_hat}[sum (1 - w_n) f_n] by 1e6 draws
    rng = np.random.default_rng(13)
    d, N = 3, 8
    X = rng.standard_normal((N, d)) + 0.5
    w = rng.uniform(0, 2, N)
    w_hat = rng.uniform(0, 2, N)
    prec = (1.0 + w_hat.sum()) * np.eye(d)
    cov = np.linalg.inv(prec)
    mean = cov @ (w_hat @ X)
    th = rng.multivariate_normal(mean, cov, size=10**6)
    r = 1.0 - w
    vals = np.zeros(len(th))
    for n in range(N):
        vals += r[n] * (-0.5 * np.sum((X[n] - th) ** 2, axis=1))
    return {"X": X.tolist(), "w": w.tolist(), "w_hat": w_hat.tolist(), "value": float(np.var(vals)),
            "se": float(np.var(vals) * np.sqrt(2.0 / (len(th) - 1)))}


def logistic_mode():
    # MAP of a small logistic regression with N(0, I) prior, via BFGS
    rng = np.random.default_rng(14)
    X = rng.standard_normal((40, 2))
    Z = np.hstack([X, np.ones((40, 1))])
    y = np.where(rng.random(40) < 1 / (1 + np.exp(-Z @ np.array([1.5, -1.0, 0.3]))), 1.0, -1.0)
    w = rng.uniform(0, 2, 40)

    def negpost(th):
        s = y * (Z @ th)
        return -(w @ -np.logaddexp(0, -s)) + 0.5 * th @ th

    def grad(th):
        s = y * (Z @ th)
        return -(Z.T @ (w * y / (1.0 + np.exp(s)))) + th

    res = optimize.minimize(negpost, np.zeros(3), jac=grad, method="BFGS", options={"gtol": 1e-11})
    # central differences of the hand-written gradient
    h = 1e-5
    H = np.column_stack([(grad(res.x + h * e) - grad(res.x - h * e)) / (2 * h) for e in np.eye(3)])
    return {"X": X.tolist(), "y": y.tolist(), "w": w.tolist(), "mode": res.x.tolist(),
            "cov": np.linalg.inv(0.5 * (H + H.T)).tolist()}


def poisson_value():
    # z^T theta = 0, y = 1: rate = log 2, log pmf
    return {"f": float(stats.poisson.logpmf(1, np.log(2.0)))}


def gaussian_kl_pair():
    # KL(N(m0, S0) || N(m1, S1)) by 2e6-draw Monte Carlo of the log ratio
    rng = np.random.default_rng(15)
    m0, m1 = np.array([0.3, -0.2]), np.array([-0.1, 0.4])
    S0 = np.array([[1.0, 0.3], [0.3, 0.5]])
    S1 = np.array([[0.8, -0.1], [-0.1, 1.2]])
    th = rng.multivariate_normal(m0, S0, size=2 * 10**6)
    lr = stats.multivariate_normal(m0, S0).logpdf(th) - stats.multivariate_normal(m1, S1).logpdf(th)
    return {"m0": m0.tolist(), "m1": m1.tolist(), "S0": S0.tolist(), "S1": S1.tolist(),
            "kl": float(lr.mean()), "se": float(lr.std() / np.sqrt(len(lr)))}


def main():
    doc = {
        "posterior_1d": posterior_1d(),
        "potential_cov_mc": potential_cov_mc(),
        "fisher_two_points": fisher_two_points(),
        "eq1_objective": eq1_objective(),
        "logistic_mode": logistic_mode(),
        "poisson_value": poisson_value(),
        "gaussian_kl_pair": gaussian_kl_pair(),
    }
    OUT.write_text(json.dumps(doc, indent=1))
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
