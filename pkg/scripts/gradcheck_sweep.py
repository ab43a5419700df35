#!/usr/bin/env python3
"""Run the finite-difference gradient check for many seeds and report the worst case.

    python scripts/gradcheck_sweep.py --seeds 50
"""
import argparse

from stochgaze import reports
from stochgaze.config import ExperimentConfig, load_config
from stochgaze.experiments import run_gradcheck


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, default=20, help="number of seeds, starting at 0")
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig()

    rows, failures = [], 0
    for seed in range(args.seeds):
        res = run_gradcheck(cfg.gradcheck, cfg.train, cfg.prior, seed)
        worst = max(res["configs"], key=lambda c: max(c["errors"].values()))
        group = max(worst["errors"], key=worst["errors"].get)
        rows.append([seed, f"{res['max_rel_error']:.2e}", group, worst["prior_mode"], "PASS" if res["passed"] else "FAIL"])
        failures += not res["passed"]
    print(reports.table(rows, ["seed", "max rel err", "worst group", "objective", "result"]), end="")
    print(f"{args.seeds - failures}/{args.seeds} seeds pass at tolerance {cfg.gradcheck.tolerance:.0e}")
    raise SystemExit(1 if failures else 0)


if __name__ == "__main__":
    main()
