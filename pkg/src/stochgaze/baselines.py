"""Controlled comparison of attention variants on a synthetic split.

Every variant shares the seed, initialization, optimizer schedule and
batch order; only the pooling map and the gaze term differ.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .grid import GridShape, InvalidInput
from .learning import TrainConfig, predict, train
from .metrics import MetricsReport, evaluate
from .prior import GazeKind, PriorConfig

BASELINES = ("uniform_pool", "center_prior", "gt_gaze_pool", "gaze_mle",
             "stochastic_with_gaze", "stochastic_no_gaze")

# variant -> training prior mode
PRIOR_MODE = {
    "uniform_pool": "fixed",
    "center_prior": "fixed",
    "gt_gaze_pool": "fixed",
    "gaze_mle": "mle",
    "stochastic_with_gaze": "gaze",
    "stochastic_no_gaze": "uniform",
}


def center_prior_map(ds: Dataset, shape: GridShape) -> np.ndarray:
    """Axis-aligned 2D Gaussian fitted to all training fixations, at cell centres."""
    pts = np.array([(r.u * shape.n, r.v * shape.m) for s in ds.samples for r in s.gaze
                    if r.kind is GazeKind.FIXATION])
    if len(pts) < 2:
        return np.full(shape.as_tuple(), 1.0 / shape.size)
    mu = pts.mean(axis=0)
    sd = np.maximum(pts.std(axis=0), 1e-3)
    cols = np.arange(shape.n) + 0.5
    rows = np.arange(shape.m) + 0.5
    logk = (-0.5 * ((cols[None, :] - mu[0]) / sd[0]) ** 2
            - 0.5 * ((rows[:, None] - mu[1]) / sd[1]) ** 2)
    k = np.exp(logk - logk.max())
    out = np.broadcast_to(k, shape.as_tuple()).copy()
    return out / out.sum()


@dataclass
class BaselineRun:
    name: str
    report: MetricsReport
    params: object
    final_train_accuracy: float


def _fixed_maps(name: str, train_ds: Dataset, part: Dataset, prior_cfg: PriorConfig) -> np.ndarray:
    shape = train_ds.shape
    if name == "uniform_pool":
        return np.full(shape.as_tuple(), 1.0 / shape.size)
    if name == "center_prior":
        return center_prior_map(train_ds, shape)
    return part.priors(prior_cfg)


def run_baseline_full(name: str, train_ds: Dataset, test_ds: Dataset, cfg: TrainConfig,
                      prior_cfg: PriorConfig = PriorConfig(), dims: dict | None = None) -> BaselineRun:
    if name not in BASELINES:
        raise InvalidInput(f"unknown baseline {name!r}; expected one of {BASELINES}")
    mode = PRIOR_MODE[name]
    if mode == "fixed":
        tr = train_ds.to_training_data(prior_cfg, "fixed", _fixed_maps(name, train_ds, train_ds, prior_cfg))
        te = test_ds.to_training_data(prior_cfg, "fixed", _fixed_maps(name, train_ds, test_ds, prior_cfg))
    else:
        tr = train_ds.to_training_data(prior_cfg, mode)
        te = test_ds.to_training_data(prior_cfg, "none")
    result = train(tr, cfg, mode, dims=dims)
    probs, maps = predict(result.params, te, mode)
    report = evaluate(probs, te.labels, test_ds.num_classes,
                      test_ds.gaze_eval_items(maps, prior_cfg))
    report.extra["variant"] = name
    final_acc = result.log[-1].accuracy if result.log else float("nan")
    return BaselineRun(name, report, result.params, final_acc)


def run_baseline(name: str, ds, cfg: TrainConfig, prior_cfg: PriorConfig = PriorConfig(),
                 dims: dict | None = None) -> MetricsReport:
    """Train (where applicable) and evaluate one variant on ``ds.train`` / ``ds.test``."""
    return run_baseline_full(name, ds.train, ds.test, cfg, prior_cfg, dims).report
