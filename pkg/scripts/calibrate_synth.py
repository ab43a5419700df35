#!/usr/bin/env python3
"""Oracle accuracy of the planted-attention task across seeds and noise levels.

The oracle knows the planted cell and classifies by nearest template, so
it bounds what any pooling scheme can reach. Use this to pick a noise
level before running the baseline comparison.

    python scripts/calibrate_synth.py --noise 0.4 0.6 0.8 --seeds 0 1 2 3 4
"""
import argparse
import dataclasses

import numpy as np

from stochgaze import reports
from stochgaze.synthetic import SynthConfig, generate, oracle_accuracy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--noise", type=float, nargs="+", default=[SynthConfig().noise_std])
    ap.add_argument("--signal", type=float, default=SynthConfig().signal_strength)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--n-test", type=int, default=SynthConfig().n_test)
    args = ap.parse_args()

    rows = []
    for noise in args.noise:
        accs = []
        for seed in args.seeds:
            cfg = dataclasses.replace(SynthConfig(), noise_std=noise, signal_strength=args.signal,
                                      n_train=0, n_test=args.n_test, seed=seed)
            accs.append(oracle_accuracy(generate(cfg)))
        rows.append([noise, float(np.mean(accs)), float(np.min(accs)), float(np.max(accs))])
    print(reports.table(rows, ["noise_std", "oracle mean", "min", "max"]), end="")


if __name__ == "__main__":
    main()
