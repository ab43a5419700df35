#!/usr/bin/env python3
"""Train and evaluate every attention variant over several seeds.

Writes ``baselines.json`` (schema-checked report) and a text table to the
output directory and prints per-seed numbers plus the paired checks.

    python scripts/run_baselines.py --config configs/default.toml --out runs/baselines
"""
import argparse
import logging
from pathlib import Path

import numpy as np

from stochgaze import reports
from stochgaze.config import ExperimentConfig, load_config
from stochgaze.experiments import compare_baselines


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/baselines")
    ap.add_argument("--seeds", type=int, nargs="+")
    ap.add_argument("--variants", nargs="+")
    ap.add_argument("--epochs", type=int, help="override total_epochs (decay moves to the midpoint)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.epochs is not None:
        import dataclasses
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(
            cfg.train, total_epochs=args.epochs, decay_epoch=args.epochs // 2))
    comp = compare_baselines(cfg, args.seeds, args.variants)

    rows = []
    for v, reps in comp.runs.items():
        acc = comp.values(v, "mean_class_accuracy")
        f1 = np.array([np.nan if r.best_f1 is None else r.best_f1 for r in reps])
        rows.append([v, float(acc.mean()), float(acc.std()), float(np.nanmean(f1)), float(np.nanstd(f1))])
    text = reports.table(rows, ["variant", "acc mean", "acc sd", "F1 mean", "F1 sd"])
    text += f"oracle accuracy: {np.mean(comp.oracle):.4f} (seeds {comp.seeds})\n"
    text += "".join(f"{k}: {v:+.4f}\n" for k, v in comp.checks().items())
    print(text, end="")

    out = Path(args.out)
    rep = reports.make_report("baselines", seeds=comp.seeds, oracle_accuracy=comp.oracle,
                              runs={v: [r.to_dict() for r in reps] for v, reps in comp.runs.items()},
                              summary=comp.summary(), checks=comp.checks())
    reports.write_report(rep, out / "baselines.json")
    (out / "baselines.txt").write_text(text)


if __name__ == "__main__":
    main()
