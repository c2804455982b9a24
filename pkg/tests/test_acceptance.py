"""Acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL criterion k`` line (also repeated in the
terminal summary) before asserting.
"""

import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import nnls

from coreset import geometry
from coreset.baselines import giga, make_weighting, projected_objective, random_projection
from coreset.harness.diagnostics import check_lemma, check_prop1, check_prop2, random_gaussian_model
from coreset.harness.experiment import ExperimentConfig, run_experiment
from coreset.models import gaussian_kl
from coreset.posterior import PosteriorSampler
from coreset.sparsevi import centered_potentials, estimate_kl_gradient, exact_kl_gradient

from conftest import ACCEPTANCE_LINES

ROOT = Path(__file__).resolve().parents[1]


def report(k, ok, elapsed, limit, detail):
    ok = bool(ok) and elapsed < limit
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail} ({elapsed:.1f}s, limit {limit:.0f}s)"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def instance():
    """Conjugate Gaussian instance, d=5, N=30."""
    return random_gaussian_model(np.random.default_rng(0), 5, 30)


def closed_form_kl(model, w):
    return gaussian_kl(model.weighted_posterior(w), model.weighted_posterior(np.ones(model.N)))


def test_criterion_1_exact_gradient():
    start = time.perf_counter()
    model = instance()
    rng = np.random.default_rng(100)
    h, worst = 1e-5, 0.0
    for _ in range(20):
        w = rng.uniform(0, 2, model.N)
        g = exact_kl_gradient(model, w)
        fd = np.empty(model.N)
        for n in range(model.N):
            e = np.zeros(model.N)
            e[n] = h
            fd[n] = (closed_form_kl(model, w + e) - closed_form_kl(model, w - e)) / (2 * h)
        worst = max(worst, np.max(np.abs(g - fd)) / np.max(np.abs(g)))
    ok = report(1, worst <= 1e-6, time.perf_counter() - start, 5, f"max relative error {worst:.2e} <= 1e-6")
    assert ok


def test_criterion_2_estimator_unbiased():
    start = time.perf_counter()
    model = instance()
    rng = np.random.default_rng(101)
    w = rng.uniform(0, 1, model.N)
    exact = exact_kl_gradient(model, w)
    sampler = PosteriorSampler("exact-conjugate")
    reps = np.array([
        estimate_kl_gradient(centered_potentials(model, sampler.sample(model, w, 100, rng)), w) for _ in range(200)
    ])
    se = reps.std(axis=0, ddof=1) / np.sqrt(len(reps))
    z = np.max(np.abs(reps.mean(axis=0) - exact) / se)
    ok = report(2, z <= 4, time.perf_counter() - start, 30, f"max |mean - exact| / SE = {z:.2f} <= 4")
    assert ok


def test_criterion_3_lemma():
    start = time.perf_counter()
    res = check_lemma(seed=0, points=10, K=50)
    ok = report(3, res.passed, time.perf_counter() - start, 5, f"max relative error {res.worst:.2e} <= 1e-6")
    assert ok


def test_criterion_4_greedy_is_tangent_minimiser():
    start = time.perf_counter()
    res = check_prop1(seed=0, instances=10, d=2, N=10, grid=200, t_max=5.0)
    ok = report(4, res.passed, time.perf_counter() - start, 10, f"{int(res.worst)} disagreements in 10 instances")
    assert ok


def test_criterion_5_kl_bound():
    start = time.perf_counter()
    res = check_prop2(seed=0, pairs=20)
    ok = report(5, res.passed, time.perf_counter() - start, 10, f"max KL - C J = {res.worst:.3e} <= 1e-8")
    assert ok


@pytest.fixture(scope="module")
def gaussian_run():
    cfg = ExperimentConfig(
        kind="gaussian-mean", data={"d": 20, "N": 200}, arms=("sparsevi", "giga-realistic", "uniform"),
        M=tuple(range(1, 51)), T=100, gamma0=1.0, trials=10, seed=0, exact=True,
    )
    start = time.perf_counter()
    doc = run_experiment(cfg, write=False)
    elapsed = time.perf_counter() - start
    med = {(a["arm"], a["M"]): a["median"] for a in doc["aggregates"]}
    errors = [r.error for r in doc["rows"] if r.error]
    return med, elapsed, errors


def test_criterion_6_gaussian_ordering(gaussian_run):
    med, elapsed, errors = gaussian_run
    svi, unif, gg = med[("sparsevi", 50)], med[("uniform", 50)], med[("giga-realistic", 50)]
    ok_a, ok_b = svi * 10 <= unif, svi <= gg
    ok = report(6, ok_a and ok_b and not errors, elapsed, 300,
                f"M=50 medians sparsevi {svi:.3g}, uniform {unif:.3g} (a: {ok_a}), giga-realistic {gg:.3g} (b: {ok_b})")
    assert ok


def test_criterion_7_improvement_vs_plateau(gaussian_run):
    med, elapsed, _ = gaussian_run
    s10, s50 = med[("sparsevi", 10)], med[("sparsevi", 50)]
    g10, g50 = med[("giga-realistic", 10)], med[("giga-realistic", 50)]
    ok_a, ok_b = s50 <= 0.5 * s10, g50 >= 0.5 * g10
    ok = report(7, ok_a and ok_b, elapsed, 300,
                f"sparsevi M=10 {s10:.3g} -> M=50 {s50:.3g} (a: {ok_a}); "
                f"giga-realistic M=10 {g10:.3g} -> M=50 {g50:.3g} (b, plateau: {ok_b})")
    assert ok


@pytest.mark.slow
def test_criterion_8_logistic():
    cfg = ExperimentConfig(
        kind="logistic", data={"N": 500}, arms=("sparsevi", "uniform"), M=(100,), S=100, T=500, gamma0=0.5,
        trials=10, seed=0, kl_mode="laplace-normalized", sampler="laplace",
    )
    start = time.perf_counter()
    doc = run_experiment(cfg, write=False)
    elapsed = time.perf_counter() - start
    med = {a["arm"]: a["median"] for a in doc["aggregates"]}
    errors = [r.error for r in doc["rows"] if r.error]
    svi, unif = med["sparsevi"], med["uniform"]
    ok = report(8, svi < unif and svi < 1.0 and not errors, elapsed, 1200,
                f"M=100 normalized medians sparsevi {svi:.4f}, uniform {unif:.4f}, prior 1.0")
    assert ok


def test_criterion_9_giga_brute_force():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        model = random_gaussian_model(rng, 2, 4)
        vec = random_projection(model, make_weighting(model, "optimal"), 3, rng)
        G = vec.vectors
        target = G.sum(axis=0)
        opt = target @ target
        for supp in ([i] for i in range(4)):
            opt = min(opt, nnls(G[supp].T, target)[1] ** 2)
        for i in range(4):
            for j in range(i + 1, 4):
                opt = min(opt, nnls(G[[i, j]].T, target)[1] ** 2)
        obj = projected_objective(vec, giga(vec, 2))
        worst = max(worst, (obj - opt) / max(opt, 1e-300) if obj > opt + 1e-12 else 0.0)
    ok = report(9, worst <= 0.1, time.perf_counter() - start, 5, f"worst excess over optimum {worst:.2%} <= 10%")
    assert ok


def test_criterion_10_invariant_suite():
    start = time.perf_counter()
    env = dict(os.environ, CORESET_THREADS="1")
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(ROOT / "tests"),
         "--ignore", str(ROOT / "tests" / "test_acceptance.py")],
        capture_output=True, text=True, cwd=ROOT, env=env,
    )
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = report(10, proc.returncode == 0, time.perf_counter() - start, 120, f"module suite: {tail}")
    assert ok, proc.stdout[-3000:]
