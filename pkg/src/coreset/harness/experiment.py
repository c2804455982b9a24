"""Multi-trial KL-versus-coreset-size experiments and their serialisation."""
from __future__ import annotations

import configparser
import csv
import hashlib
import json
import os
import platform
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from ..baselines import WEIGHTING_NOISE_CONVENTION, giga, make_weighting, random_projection, uniform_subsample
from ..errors import CoresetError, InputError
from ..posterior import STRATEGIES, PosteriorSampler
from ..sparsevi import L1SearchConfig, SparseViConfig, l1_binary_search, sparsevi
from .data import KINDS, KL_MODES, SCHEMAS, KlEvaluator, build_model, generate_synthetic, load_csv

__all__ = [
    "ARMS",
    "ExperimentConfig",
    "ResultRow",
    "load_config",
    "arm_seed",
    "construct_arm",
    "run_trial",
    "run_experiment",
    "aggregate",
    "write_results",
]

ARMS = ("sparsevi", "sparsevi-single", "sparsevi-quadratic", "l1", "giga-optimal", "giga-realistic", "uniform")
_VARIANT = {"sparsevi": "full-sgd", "sparsevi-single": "single", "sparsevi-quadratic": "quadratic"}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a data source, the arms to compare, and the protocol.

    ``kind`` names a synthetic generator (parameters in ``data``) unless
    ``csv`` is given, in which case ``schema`` says how to read it. ``model``
    holds :func:`build_model` options. Trial ``i`` uses data seed
    ``seed + i``.
    """

    kind: str = "gaussian-mean"
    data: dict = field(default_factory=dict)
    csv: str | None = None
    schema: str | None = None
    model: dict = field(default_factory=dict)
    arms: tuple = ("sparsevi", "giga-realistic", "uniform")
    M: tuple = (1, 2, 5, 10)
    S: int = 100
    T: int = 100
    gamma0: float = 1.0
    U: int | None = None
    S_proj: int = 100
    trials: int = 10
    seed: int = 0
    kl_mode: str = "exact"
    exact: bool = True
    sampler: str = "laplace"
    precondition: bool = True
    l1_steps: int = 200
    output: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "M", tuple(sorted({int(m) for m in self.M})))
        if self.csv is None and self.kind not in KINDS:
            raise InputError(f"unknown kind {self.kind!r}; expected one of {sorted(KINDS)}")
        if self.csv is not None and self.schema not in SCHEMAS:
            raise InputError(f"csv input needs a schema among {sorted(SCHEMAS)}")
        bad = [a for a in self.arms if a not in ARMS]
        if bad or not self.arms:
            raise InputError(f"unknown arms {bad}; expected some of {ARMS}")
        if not self.M or self.M[0] < 1:
            raise InputError("M must be a nonempty list of positive integers")
        if self.trials < 1:
            raise InputError("trials must be at least 1")
        if min(self.S, self.T, self.S_proj, self.l1_steps) < 1 or self.gamma0 <= 0:
            raise InputError("S, T, S_proj, l1_steps and gamma0 must be positive")
        if self.U is not None and self.U < 1:
            raise InputError("U must be positive")
        if self.kl_mode not in KL_MODES:
            raise InputError(f"unknown kl_mode {self.kl_mode!r}; expected one of {KL_MODES}")
        if self.sampler not in STRATEGIES:
            raise InputError(f"unknown sampler {self.sampler!r}; expected one of {STRATEGIES}")

    def to_dict(self):
        d = asdict(self)
        d["arms"], d["M"] = list(self.arms), list(self.M)
        return d

    def hash(self):
        d = self.to_dict()
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _parse_value(text):
    text = text.strip()
    low = text.lower()
    if low in ("none", ""):
        return None
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _parse_sizes(text):
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def load_config(path_or_text, **overrides) -> ExperimentConfig:
    """Read a key-value config; a leading ``[experiment]`` header is optional.

    Keys prefixed ``data.`` and ``model.`` fill the nested dictionaries.
    ``M`` accepts ranges and lists (``1-10,20,50``); ``arms`` is a comma list.
    """
    text = str(path_or_text)
    if "\n" not in text and "=" not in text:
        p = Path(text)
        if not p.is_file():
            raise InputError(f"no such config file: {p}")
        text = p.read_text()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    body = text.lstrip()
    if not body.startswith("["):
        text = "[experiment]\n" + text
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InputError(f"bad config: {exc}") from None
    if not parser.sections():
        raise InputError("config has no sections")
    kw, data, model = {}, {}, {}
    names = set(ExperimentConfig.__dataclass_fields__)
    for key, raw in parser[parser.sections()[0]].items():
        if key.startswith("data."):
            data[key[5:]] = _parse_value(raw)
        elif key.startswith("model."):
            model[key[6:]] = _parse_value(raw)
        elif key == "M":
            kw["M"] = _parse_sizes(raw)
        elif key == "arms":
            kw["arms"] = [a.strip() for a in raw.split(",") if a.strip()]
        elif key in names:
            val = _parse_value(raw)
            kw[key] = str(val) if key in ("csv", "output", "kind", "schema") and val is not None else val
        else:
            raise InputError(f"unknown config key {key!r}")
    if data:
        kw["data"] = data
    if model:
        kw["model"] = model
    kw.update(overrides)
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise InputError(str(exc)) from None


@dataclass(frozen=True)
class ResultRow:
    arm: str
    M: int
    trial: int
    seed: int
    kl: float
    wall_time_s: float
    error: str = ""
    pairs: tuple = ()


def arm_seed(base, trial, arm) -> int:
    """Independent per-(trial, arm) seed."""
    ss = np.random.SeedSequence([int(base), int(trial), zlib.crc32(arm.encode())])
    return int(ss.generate_state(1)[0])


def _dataset(config, trial):
    if config.csv is not None:
        return load_csv(config.csv, config.schema)
    return generate_synthetic(config.kind, config.data, seed=config.seed + trial)


def _sampler(config, model):
    # conjugate models are always sampled exactly; ``sampler`` applies to GLMs
    if model.has_conjugate_posterior:
        return PosteriorSampler("exact-conjugate")
    return PosteriorSampler(config.sampler)


def construct_arm(arm, model, config, seed, sizes):
    """Weights and cumulative construction time for every size in ``sizes``."""
    out = {}
    start = time.perf_counter()
    if arm in _VARIANT:
        cfg = SparseViConfig(
            M=max(sizes), S=config.S, T=config.T, gamma0=config.gamma0, U=config.U, variant=_VARIANT[arm],
            seed=seed, exact=config.exact, precondition=config.precondition,
        )

        def keep(m, w):
            if m in sizes:
                out[m] = (w, time.perf_counter() - start)

        sparsevi(model, _sampler(config, model), cfg, callback=keep)
    elif arm.startswith("giga"):
        rng = np.random.default_rng(seed)
        weighting = make_weighting(model, arm.split("-", 1)[1], rng)
        vectors = random_projection(model, weighting, config.S_proj, rng)

        def keep(m, w):
            if m in sizes:
                out[m] = (w, time.perf_counter() - start)

        giga(vectors, max(sizes), callback=keep)
    elif arm == "uniform":
        rng = np.random.default_rng(seed)
        for m in sizes:
            t = time.perf_counter()
            out[m] = (uniform_subsample(model.N, m, rng), time.perf_counter() - t)
    elif arm == "l1":
        for m in sizes:
            t = time.perf_counter()
            cfg = L1SearchConfig(
                steps=config.l1_steps, gamma0=config.gamma0, S=config.S, seed=seed,
                exact=config.exact, precondition=config.precondition,
            )
            res = l1_binary_search(model, m, cfg, sampler=_sampler(config, model))
            out[m] = (res.weights, time.perf_counter() - t)
    return out


def run_trial(config: ExperimentConfig, trial: int) -> list[ResultRow]:
    rows = []
    try:
        dataset = _dataset(config, trial)
        model = build_model(dataset, config.model, seed=config.seed + trial)
        kl = KlEvaluator(model, config.kl_mode)
    except CoresetError as exc:
        tag = f"{type(exc).__name__}: {exc}"
        return [ResultRow(a, m, trial, arm_seed(config.seed, trial, a), float("nan"), float("nan"), tag)
                for a in config.arms for m in config.M]
    for arm in config.arms:
        seed = arm_seed(config.seed, trial, arm)
        try:
            built = construct_arm(arm, model, config, seed, config.M)
            err = ""
        except CoresetError as exc:
            built, err = {}, f"{type(exc).__name__}: {exc}"
        for m in config.M:
            if m not in built:
                rows.append(ResultRow(arm, m, trial, seed, float("nan"), float("nan"), err or "not reached"))
                continue
            w, elapsed = built[m]
            try:
                value, tag = float(kl(w)), ""
            except CoresetError as exc:
                value, tag = float("nan"), f"{type(exc).__name__}: {exc}"
            rows.append(ResultRow(arm, m, trial, seed, value, elapsed, tag, tuple(w.pairs())))
    return rows


def _workers(trials):
    cap = os.environ.get("CORESET_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(int(cap), 1))
        except ValueError:
            raise InputError("CORESET_THREADS must be an integer") from None
    return max(1, min(n, trials))


def run_experiment(config: ExperimentConfig, write=True) -> dict:
    """Run every trial, aggregate, and (if ``config.output`` is set) write the result files.

    Returns the JSON-ready document with ``rows`` and ``aggregates``.
    """
    workers = _workers(config.trials)
    if workers == 1:
        parts = [run_trial(config, t) for t in range(config.trials)]
    else:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(run_trial, [config] * config.trials, range(config.trials)))
    order = {a: i for i, a in enumerate(config.arms)}
    rows = sorted((r for p in parts for r in p), key=lambda r: (order[r.arm], r.M, r.trial))
    doc = {
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "weighting_noise_convention": WEIGHTING_NOISE_CONVENTION,
        "environment": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "platform": platform.platform(),
            "workers": workers,
        },
        "rows": rows,
        "aggregates": aggregate(rows),
    }
    if write and config.output:
        write_results(doc, config.output)
    return doc


def aggregate(rows) -> list[dict]:
    """Median and 25th/75th percentiles of KL per (arm, M) over finite rows."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.arm, r.M), []).append(r.kl)
    out = []
    for (arm, m), vals in groups.items():
        v = np.asarray([x for x in vals if np.isfinite(x)])
        stats = np.percentile(v, [50, 25, 75]) if v.size else [float("nan")] * 3
        out.append({"arm": arm, "M": m, "n": int(v.size), "median": float(stats[0]),
                    "p25": float(stats[1]), "p75": float(stats[2])})
    return out


def _row_dict(r: ResultRow):
    d = asdict(r)
    d["pairs"] = [[int(i), float(x)] for i, x in r.pairs]
    return d


def write_results(doc, output):
    """``<output>.csv`` (raw rows), ``<output>_summary.csv`` and ``<output>.json``."""
    base = Path(output)
    if base.suffix in (".csv", ".json"):
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{base}.csv", "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["arm", "M", "trial", "seed", "kl", "wall_time_s", "error", "config_hash"])
        for r in doc["rows"]:
            out.writerow([r.arm, r.M, r.trial, r.seed, repr(r.kl), repr(r.wall_time_s), r.error, doc["config_hash"]])
    with open(f"{base}_summary.csv", "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["arm", "M", "n", "median", "p25", "p75"])
        for a in doc["aggregates"]:
            out.writerow([a["arm"], a["M"], a["n"], repr(a["median"]), repr(a["p25"]), repr(a["p75"])])
    body = dict(doc, rows=[_row_dict(r) for r in doc["rows"]])
    with open(f"{base}.json", "w") as fh:
        json.dump(body, fh, indent=1, allow_nan=True)
    return base
