"""Run the geometry diagnostics and print one PASS/FAIL line each."""

import argparse
import sys

from coreset.harness.diagnostics import CHECKS, run_check

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    results = [run_check(name, seed=args.seed) for name in CHECKS]
    for res in results:
        print(res.line())
    sys.exit(0 if all(r.passed for r in results) else 1)
