import json
from pathlib import Path

import numpy as np
import pytest

from coreset.harness.data import build_model, generate_synthetic
from coreset.harness.diagnostics import random_gaussian_model
from coreset.models import LogisticModel, RbfRegressionModel, rbf_basis, rbf_features

ORACLES = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


@pytest.fixture
def gauss():
    """Random-SPD Gaussian-mean instance, d=5, N=30."""
    return random_gaussian_model(np.random.default_rng(0), 5, 30)


@pytest.fixture
def gauss_small():
    return build_model(generate_synthetic("gaussian-mean", {"d": 5, "N": 50}, seed=0))


@pytest.fixture
def rbf():
    rng = np.random.default_rng(3)
    X = rng.uniform(0, 5, size=(40, 2))
    y = np.sin(X[:, 0]) + 0.3 * rng.standard_normal(40)
    centers, scales = rbf_basis(X, rng, scales=(0.5, 1.0), per_scale=4)
    return RbfRegressionModel(y, rbf_features(X, centers, scales), 0.2, float(y.mean()), 1.0)


@pytest.fixture
def logistic():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((60, 2))
    s = X @ np.array([1.0, -1.0]) + 0.2
    y = np.where(rng.random(60) < 1 / (1 + np.exp(-s)), 1.0, -1.0)
    return LogisticModel(X, y)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
