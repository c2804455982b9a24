"""Datasets: synthetic generators, CSV ingestion and model construction."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InputError, ParseError, SchemaError
from ..models import (
    GaussianDist,
    GaussianMeanModel,
    LogisticModel,
    PoissonModel,
    RbfRegressionModel,
    gaussian_kl,
    rbf_basis,
    rbf_features,
)
from ..posterior import laplace_approximation

__all__ = [
    "Dataset",
    "SCHEMAS",
    "KINDS",
    "generate_synthetic",
    "load_csv",
    "write_csv",
    "build_model",
    "KlEvaluator",
    "evaluate_kl",
    "KL_MODES",
]

# schema -> whether the file carries a response column
SCHEMAS = {"points": False, "regression": True, "classification": True, "count": True}
KINDS = {
    "gaussian-mean": "points",
    "rbf-regression": "regression",
    "logistic": "classification",
    "poisson": "count",
}
KL_MODES = ("exact", "laplace-normalized")


@dataclass(frozen=True)
class Dataset:
    """Rectangular finite data; ``y`` is ``None`` for the ``points`` schema."""

    schema: str
    X: np.ndarray
    y: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.schema not in SCHEMAS:
            raise InputError(f"unknown schema {self.schema!r}")
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise InputError("covariates must be a 2-d array")
        object.__setattr__(self, "X", X)
        if SCHEMAS[self.schema]:
            if self.y is None:
                raise InputError(f"schema {self.schema!r} needs responses")
            y = np.asarray(self.y, dtype=float).ravel()
            if y.shape[0] != X.shape[0]:
                raise InputError("responses and covariates disagree in length")
            object.__setattr__(self, "y", y)
            _check_labels(self.schema, y)
        elif self.y is not None:
            raise InputError("the points schema has no response column")
        if not (np.all(np.isfinite(X)) and (self.y is None or np.all(np.isfinite(self.y)))):
            raise InputError("dataset contains non-finite values")

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    def header(self):
        cols = [f"x{i + 1}" for i in range(self.dim)]
        return (["y"] + cols) if SCHEMAS[self.schema] else cols


def _check_labels(schema, y):
    if schema == "classification" and not np.all(np.isin(y, (-1.0, 1.0))):
        raise InputError("classification labels must be -1 or 1")
    if schema == "count" and not (np.all(y >= 0) and np.all(y == np.round(y))):
        raise InputError("count labels must be nonnegative integers")


_DEFAULTS = {
    "gaussian-mean": {"d": 200, "N": 1000},
    "rbf-regression": {"N": 1000, "noise": 0.5, "bumps": 6},
    "logistic": {"N": 500, "theta": (3.0, 3.0, 0.0)},
    "poisson": {"N": 500, "theta": (1.0, 0.0)},
}


def _params(kind, params):
    if kind not in KINDS:
        raise InputError(f"unknown dataset kind {kind!r}; expected one of {sorted(KINDS)}")
    out = dict(_DEFAULTS[kind])
    for k, v in (params or {}).items():
        if k not in out:
            raise InputError(f"unknown parameter {k!r} for {kind}")
        out[k] = v
    if int(out["N"]) < 1:
        raise InputError("N must be positive")
    if "d" in out and int(out["d"]) < 1:
        raise InputError("d must be positive")
    return out


def generate_synthetic(kind, params=None, seed=0) -> Dataset:
    """Seeded synthetic data.

    ``gaussian-mean``: ``theta ~ N(0, I_d)``, ``x_n ~ N(theta, I_d)``.
    ``rbf-regression``: 2-d locations on a 10 x 6 box, responses from a sum
    of Gaussian bumps plus noise. ``logistic``: ``x_n ~ N(0, I_2)`` with
    labels from the logistic likelihood at ``theta``. ``poisson``: ``x_n ~
    N(0, 1)`` with counts at rate ``log(1 + exp(z^T theta))``.
    """
    p = _params(kind, params)
    rng = np.random.default_rng(seed)
    N = int(p["N"])
    meta = {"kind": kind, "seed": seed, **{k: (list(v) if isinstance(v, tuple) else v) for k, v in p.items()}}
    if kind == "gaussian-mean":
        d = int(p["d"])
        theta = rng.standard_normal(d)
        return Dataset("points", theta + rng.standard_normal((N, d)), meta=meta)
    if kind == "rbf-regression":
        X = rng.uniform((0.0, 0.0), (10.0, 6.0), size=(N, 2))
        k = int(p["bumps"])
        centers = rng.uniform((0.0, 0.0), (10.0, 6.0), size=(k, 2))
        heights = rng.normal(0.0, 1.0, size=k)
        widths = rng.uniform(0.5, 2.0, size=k)
        y = rbf_features(X, centers, widths) @ heights + float(p["noise"]) * rng.standard_normal(N)
        return Dataset("regression", X, y, meta=meta)
    theta = np.asarray(p["theta"], dtype=float)
    D = theta.size - 1
    if D < 1:
        raise InputError("theta needs at least one slope and an intercept")
    X = rng.standard_normal((N, D))
    s = X @ theta[:-1] + theta[-1]
    if kind == "logistic":
        y = np.where(rng.random(N) < 1.0 / (1.0 + np.exp(-s)), 1.0, -1.0)
        return Dataset("classification", X, y, meta=meta)
    y = rng.poisson(np.logaddexp(0.0, s)).astype(float)
    return Dataset("count", X, y, meta=meta)


def write_csv(dataset: Dataset, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(dataset.header())
        cols = dataset.X if dataset.y is None else np.column_stack([dataset.y, dataset.X])
        for row in cols:
            out.writerow([repr(float(v)) for v in row])


def load_csv(path, schema) -> Dataset:
    """Parse ``y,x1..xD`` (or ``x1..xd`` for ``points``) with a header row."""
    if schema not in SCHEMAS:
        raise InputError(f"unknown schema {schema!r}; expected one of {sorted(SCHEMAS)}")
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        try:
            header = [h.strip() for h in next(rows)]
        except StopIteration:
            raise SchemaError(["y", "x1", "..."] if SCHEMAS[schema] else ["x1", "..."], []) from None
        lead = ["y"] if SCHEMAS[schema] else []
        D = len(header) - len(lead)
        expected = lead + [f"x{i + 1}" for i in range(max(D, 1))]
        if header != expected:
            raise SchemaError(expected, header)
        values = []
        for row in rows:
            line = rows.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(line, f"expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(line, str(exc)) from None
            if not np.all(np.isfinite(vals)):
                raise InputError(f"line {line}: non-finite value")
            values.append(vals)
    arr = np.asarray(values, dtype=float).reshape(len(values), len(header))
    if lead:
        return Dataset(schema, arr[:, 1:], arr[:, 0], meta={"path": str(path)})
    return Dataset(schema, arr, meta={"path": str(path)})


def build_model(dataset: Dataset, params=None, seed=0):
    """Model for a dataset, with the defaults used by the experiments.

    ``points``: Gaussian mean with ``N(0, prior_var I)`` prior and
    ``likelihood_var I`` noise. ``regression``: RBF basis drawn from the
    locations (seeded), prior mean and variance from the empirical mean and
    second moment of ``y`` (``second_moment = raw | centered``), noise
    variance from its empirical variance. GLMs: ``N(0, prior_var I)`` prior.
    """
    params = dict(params or {})
    prior_var = float(params.pop("prior_var", 1.0))
    if prior_var <= 0:
        raise InputError("prior_var must be positive")
    if dataset.schema == "points":
        lik_var = float(params.pop("likelihood_var", 1.0))
        _no_extra(params)
        d = dataset.dim
        return GaussianMeanModel(dataset.X, np.zeros(d), prior_var * np.eye(d), lik_var * np.eye(d))
    if dataset.schema == "regression":
        moment = params.pop("second_moment", "raw")
        _no_extra(params)
        if dataset.N < 2:
            raise InputError("regression needs at least two rows")
        y = dataset.y
        if moment == "raw":
            s0 = float(np.mean(y**2))
        elif moment == "centered":
            s0 = float(np.var(y))
        else:
            raise InputError("second_moment must be 'raw' or 'centered'")
        centers, scales = rbf_basis(dataset.X, np.random.default_rng(seed))
        feats = rbf_features(dataset.X, centers, scales)
        return RbfRegressionModel(y, feats, float(np.var(y)), float(np.mean(y)), s0, centers, scales)
    _no_extra(params)
    D = dataset.dim + 1
    prior = GaussianDist.from_cov(np.zeros(D), prior_var * np.eye(D))
    cls = LogisticModel if dataset.schema == "classification" else PoissonModel
    return cls(dataset.X, dataset.y, prior)


def _no_extra(params):
    if params:
        raise InputError(f"unknown model parameters: {sorted(params)}")


class KlEvaluator:
    """``KL(pi_w || pi_1)``; the full-data reference and normaliser are computed once."""

    def __init__(self, model, mode="exact"):
        if mode not in KL_MODES:
            raise InputError(f"unknown KL mode {mode!r}; expected one of {KL_MODES}")
        self.model, self.mode = model, mode
        ones = np.ones(model.N)
        if mode == "exact":
            self.reference = model.weighted_posterior(ones)
            self.scale = 1.0
        else:
            self.reference = laplace_approximation(model, ones)
            self.scale = gaussian_kl(laplace_approximation(model, np.zeros(model.N)), self.reference)
            if not self.scale > 0:
                raise InputError("prior and full posterior coincide; normalised KL is undefined")

    def __call__(self, w):
        w = np.asarray(getattr(w, "values", w), dtype=float)
        if self.mode == "exact":
            approx = self.model.weighted_posterior(w)
        else:
            approx = laplace_approximation(self.model, w, init=self.reference.mean)
        return max(gaussian_kl(approx, self.reference), 0.0) / self.scale


def evaluate_kl(model, w, mode="exact") -> float:
    return KlEvaluator(model, mode)(w)
