"""Reusable experiment routines: gradient check sweep and baseline comparison."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .baselines import run_baseline_full
from .config import ExperimentConfig, GradcheckConfig
from .grid import GridShape
from .learning import TrainConfig, finite_diff_check
from .model import ClipSample, ModelParams
from .prior import GazeKind, GazeRecord, PriorConfig, build_prior, uniform_prior
from .synthetic import generate, oracle_accuracy

log = logging.getLogger(__name__)

GRADCHECK_MODES = ("gaze", "uniform", "mle")


def random_gradcheck_case(rng: np.random.Generator, gc: GradcheckConfig) -> tuple[ClipSample, ModelParams]:
    """Generic small instance: random weights (gaze head included) and mixed gaze events.

    Weights are fan-in scaled so class scores stay O(1); a saturated softmax
    leaves gradients near 1e-10, below what central differences resolve.
    """
    shape = GridShape(*gc.shape)
    D, H, C, K = gc.D, gc.H, gc.C, gc.K
    params = ModelParams(
        W1=rng.normal(size=(H, D)) / np.sqrt(D), b1=0.3 * rng.normal(size=H),
        wg=rng.normal(size=H),
        Wf=rng.normal(size=(C, H)) / np.sqrt(H), bf=0.3 * rng.normal(size=C),
        Wc=rng.normal(size=(K, C)) / np.sqrt(C), bc=0.3 * rng.normal(size=K),
    )
    n_frames = shape.t * PriorConfig().window_frames
    gaze = [GazeRecord(0, float(rng.random()), float(rng.random()), GazeKind.FIXATION)]
    for _ in range(int(rng.integers(0, 4))):
        kind = GazeKind(("fixation", "saccade", "unknown")[int(rng.integers(3))])
        gaze.append(GazeRecord(int(rng.integers(n_frames)), float(rng.random()), float(rng.random()), kind))
    sample = ClipSample(rng.normal(size=shape.as_tuple() + (D,)), gaze, int(rng.integers(K)))
    return sample, params


def run_gradcheck(gc: GradcheckConfig, train_cfg: TrainConfig, prior_cfg: PriorConfig,
                  seed: int = 0) -> dict:
    """Finite-difference check over ``gc.n_configs`` random instances.

    Instances cycle through the gaze prior, the uniform prior and the MLE
    objective; every other pair runs with dropout on.
    """
    results = []
    for i in range(gc.n_configs):
        rng = np.random.default_rng([seed, i])
        sample, params = random_gradcheck_case(rng, gc)
        mode = GRADCHECK_MODES[i % len(GRADCHECK_MODES)]
        dropout_on = (i // len(GRADCHECK_MODES)) % 2 == 1
        prior = (build_prior(sample.gaze, prior_cfg, sample.shape) if mode == "gaze"
                 else uniform_prior(sample.shape))
        errors = finite_diff_check(sample, params, train_cfg, gc.step, prior=prior, rng=rng,
                                   dropout_on=dropout_on, prior_mode=mode)
        results.append({"index": i, "prior_mode": mode, "dropout": dropout_on, "errors": errors})
    worst = float(max((max(r["errors"].values()) for r in results), default=0.0))
    return {"tolerance": gc.tolerance, "max_rel_error": worst, "passed": bool(worst < gc.tolerance),
            "configs": results}


@dataclass
class Comparison:
    seeds: list[int]
    oracle: list[float] = field(default_factory=list)
    runs: dict[str, list] = field(default_factory=dict)  # variant -> [MetricsReport per seed]

    def values(self, variant: str, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.runs[variant]], dtype=np.float64)

    def summary(self) -> dict:
        out = {}
        for name, reps in self.runs.items():
            out[name] = {
                "mean_class_accuracy": float(np.mean([r.mean_class_accuracy for r in reps])),
                "best_f1": float(np.mean([r.best_f1 for r in reps])),
            }
        return out

    def checks(self) -> dict:
        """Paired direction-of-effect checks; each difference is averaged over seeds."""
        out = {}
        acc = lambda v: self.values(v, "mean_class_accuracy")  # noqa: E731
        f1 = lambda v: self.values(v, "best_f1")  # noqa: E731
        have = set(self.runs)
        if {"stochastic_with_gaze", "gaze_mle"} <= have:
            out["f1_gain_over_mle"] = float(np.mean(f1("stochastic_with_gaze") - f1("gaze_mle")))
            out["acc_gain_over_mle"] = float(np.mean(acc("stochastic_with_gaze") - acc("gaze_mle")))
        if {"stochastic_with_gaze", "gt_gaze_pool", "uniform_pool"} <= have:
            gap = np.mean(acc("gt_gaze_pool") - acc("uniform_pool"))
            got = np.mean(acc("stochastic_with_gaze") - acc("uniform_pool"))
            out["gap"] = float(gap)
            out["gap_recovery"] = float(got / gap) if gap > 0 else float("nan")
        if {"stochastic_no_gaze", "uniform_pool"} <= have:
            out["no_gaze_gain_over_uniform"] = float(np.mean(acc("stochastic_no_gaze") - acc("uniform_pool")))
        return out


def compare_baselines(cfg: ExperimentConfig, seeds=None, variants=None) -> Comparison:
    seeds = list(cfg.baselines.seeds if seeds is None else seeds)
    variants = list(cfg.baselines.variants if variants is None else variants)
    comp = Comparison(seeds, runs={v: [] for v in variants})
    dims = dataclasses.asdict(cfg.model)
    for seed in seeds:
        run_cfg = cfg.with_seed(seed)
        ds = generate(run_cfg.synth)
        comp.oracle.append(oracle_accuracy(ds))
        for v in variants:
            res = run_baseline_full(v, ds.train, ds.test, run_cfg.train, run_cfg.prior, dims)
            log.info("seed %d %-22s acc %.3f f1 %.3f", seed, v, res.report.mean_class_accuracy,
                     res.report.best_f1)
            comp.runs[v].append(res.report)
    return comp
