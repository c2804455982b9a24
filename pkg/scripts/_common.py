import argparse
from pathlib import Path

from coreset.harness.experiment import load_config, run_experiment

CONFIGS = Path(__file__).parent / "configs"


def run(name, description):
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--config", default=str(CONFIGS / f"{name}.ini"))
    parser.add_argument("--trials", type=int)
    parser.add_argument("--output")
    args = parser.parse_args()
    overrides = {k: v for k, v in (("trials", args.trials), ("output", args.output)) if v is not None}
    config = load_config(args.config, **overrides)
    doc = run_experiment(config)
    arms = list(config.arms)
    med = {(a["arm"], a["M"]): a["median"] for a in doc["aggregates"]}
    print("M".rjust(4) + "".join(a.rjust(16) for a in arms))
    for m in config.M:
        print(f"{m:4d}" + "".join(f"{med[(a, m)]:16.4g}" for a in arms))
    if config.output:
        print(f"results written under {config.output}")
