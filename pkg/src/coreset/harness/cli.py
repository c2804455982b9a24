"""Command line entry point: ``coreset {run,build,diag,gen}``.

Exit codes: 0 success, 1 input error, 2 numerical or convergence error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

from ..errors import CapabilityError, InputError, NumericalError
from .data import KINDS, KL_MODES, SCHEMAS, KlEvaluator, build_model, generate_synthetic, load_csv, write_csv
from .diagnostics import CHECKS, run_check
from .experiment import ARMS, ExperimentConfig, construct_arm, arm_seed, load_config, run_experiment

__all__ = ["main", "build_parser"]


def _kv(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _cmd_run(args):
    overrides = {}
    if args.output:
        overrides["output"] = args.output
    if args.trials is not None:
        overrides["trials"] = args.trials
    config = load_config(args.config, **overrides)
    doc = run_experiment(config)
    for a in doc["aggregates"]:
        print(f"{a['arm']:<20} M={a['M']:<5} n={a['n']:<3} median={a['median']:.4g} "
              f"p25={a['p25']:.4g} p75={a['p75']:.4g}")
    failed = sum(bool(r.error) for r in doc["rows"])
    if failed:
        print(f"{failed} rows recorded errors", file=sys.stderr)
    if config.output:
        print(f"wrote {config.output}.csv, {config.output}_summary.csv, {config.output}.json")
    return 0


def _cmd_build(args):
    if args.model in KINDS:
        dataset = generate_synthetic(args.model, _kv(args.param), seed=args.seed)
    else:
        if args.schema is None:
            raise InputError("--schema is required when --model is a CSV path")
        dataset = load_csv(args.model, args.schema)
    model = build_model(dataset, _kv(args.model_param), seed=args.seed)
    config = ExperimentConfig(
        kind=args.model if args.model in KINDS else "gaussian-mean", arms=(args.algo,), M=(args.M,),
        S=args.S, T=args.T, gamma0=args.gamma0, trials=1, seed=args.seed, kl_mode=args.kl_mode,
        exact=not args.monte_carlo,
    )
    seed = arm_seed(args.seed, 0, args.algo)
    start = time.perf_counter()
    built = construct_arm(args.algo, model, config, seed, (args.M,))
    elapsed = time.perf_counter() - start
    if args.M not in built:
        raise NumericalError(f"construction stopped before reaching M={args.M}")
    w = built[args.M][0]
    kl = KlEvaluator(model, args.kl_mode)(w)
    doc = {"algo": args.algo, "M": args.M, "seed": args.seed, "kl": kl, "kl_mode": args.kl_mode,
           "wall_time_s": elapsed, "pairs": [[i, x] for i, x in w.pairs()]}
    text = json.dumps(doc, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"{args.algo} M={args.M}: nnz={w.nnz} kl={kl:.6g} -> {args.out}")
    else:
        print(text)
    return 0


def _cmd_diag(args):
    names = list(CHECKS) if args.check == "all" else [args.check]
    ok = True
    for name in names:
        res = run_check(name, seed=args.seed)
        print(res.line())
        ok &= res.passed
    return 0 if ok else 2


def _cmd_gen(args):
    dataset = generate_synthetic(args.kind, _kv(args.param), seed=args.seed)
    write_csv(dataset, args.out)
    print(f"{args.kind}: N={dataset.N} dim={dataset.dim} schema={dataset.schema} -> {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="coreset", description="Sparse variational coreset construction and experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a key-value config file")
    run.add_argument("--config", required=True)
    run.add_argument("--output", help="override the output path prefix")
    run.add_argument("--trials", type=int)
    run.set_defaults(func=_cmd_run)

    build = sub.add_parser("build", help="build one coreset and report its KL")
    build.add_argument("--model", required=True, help=f"synthetic kind ({', '.join(KINDS)}) or CSV path")
    build.add_argument("--schema", choices=sorted(SCHEMAS))
    build.add_argument("--algo", choices=ARMS, default="sparsevi")
    build.add_argument("--M", type=int, required=True)
    build.add_argument("--seed", type=int, default=0)
    build.add_argument("--S", type=int, default=100)
    build.add_argument("--T", type=int, default=100)
    build.add_argument("--gamma0", type=float, default=1.0)
    build.add_argument("--kl-mode", choices=KL_MODES, default="exact")
    build.add_argument("--monte-carlo", action="store_true", help="use sampled instead of closed-form covariances")
    build.add_argument("--param", action="append", help="generator parameter key=value")
    build.add_argument("--model-param", action="append", help="model option key=value")
    build.add_argument("--out")
    build.set_defaults(func=_cmd_build)

    diag = sub.add_parser("diag", help="numerical checks of the geometric identities")
    diag.add_argument("--check", choices=[*CHECKS, "all"], required=True)
    diag.add_argument("--seed", type=int, default=0)
    diag.set_defaults(func=_cmd_diag)

    gen = sub.add_parser("gen", help="write a synthetic dataset as CSV")
    gen.add_argument("--kind", choices=sorted(KINDS), required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--param", action="append", help="generator parameter key=value")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, CapabilityError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
