"""Gaze precision/recall sweeps and action-recognition accuracies."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .grid import InvalidInput


@dataclass
class GazeEvalItem:
    predicted: np.ndarray  # (t, m, n)
    positives: set  # {(slice, row, col)}
    valid: bool = True

    def __post_init__(self):
        self.predicted = np.asarray(self.predicted, dtype=np.float64)
        if self.valid and not self.positives:
            raise InvalidInput("a valid gaze item needs at least one positive cell")


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    precision: float
    recall: float
    f1: float


def _f1(p, r):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(p + r > 0, 2 * p * r / np.where(p + r > 0, p + r, 1.0), 0.0)


def _item_arrays(item: GazeEvalItem) -> tuple[np.ndarray, np.ndarray]:
    pos = np.zeros(item.predicted.shape, dtype=bool)
    for cell in item.positives:
        pos[cell] = True
    return item.predicted.ravel(), pos.ravel()


def gaze_pr_sweep(items: Iterable[GazeEvalItem], average: str = "micro") -> list[SweepPoint]:
    """Precision/recall/F1 at every distinct predicted value used as a threshold.

    A cell counts as predicted-positive when its value is ``>=`` the
    threshold. ``micro`` pools TP/FP/FN over all valid items; ``macro``
    averages per-item precision and recall. Points are returned in
    ascending threshold order.
    """
    valid = [it for it in items if it.valid]
    if not valid:
        raise InvalidInput("no valid gaze items to evaluate")
    arrays = [_item_arrays(it) for it in valid]
    values = np.concatenate([v for v, _ in arrays])
    thresholds = np.unique(values)

    if average == "micro":
        pos = np.concatenate([p for _, p in arrays])
        order = np.argsort(values, kind="stable")
        sv, sp = values[order], pos[order]
        # counts of cells (and positive cells) with value >= each threshold
        start = np.searchsorted(sv, thresholds, side="left")
        pos_suffix = np.concatenate([np.cumsum(sp[::-1])[::-1], [0]])
        predicted = len(sv) - start
        tp = pos_suffix[start]
        precision = tp / predicted
        recall = tp / sp.sum()
    elif average == "macro":
        precision = np.zeros(len(thresholds))
        recall = np.zeros(len(thresholds))
        for v, p in arrays:
            sv = np.sort(v)
            spos = np.sort(v[p])
            n_pred = len(sv) - np.searchsorted(sv, thresholds, side="left")
            n_tp = len(spos) - np.searchsorted(spos, thresholds, side="left")
            precision += np.where(n_pred > 0, n_tp / np.maximum(n_pred, 1), 0.0)
            recall += n_tp / len(spos)
        precision /= len(arrays)
        recall /= len(arrays)
    else:
        raise InvalidInput(f"unknown averaging {average!r}")
    f1 = _f1(precision, recall)
    return [SweepPoint(float(t), float(p), float(r), float(f))
            for t, p, r, f in zip(thresholds, precision, recall, f1)]


def best_f1(sweep: Sequence[SweepPoint]) -> SweepPoint:
    """Sweep point with the highest F1; ties go to the larger threshold."""
    if not sweep:
        raise InvalidInput("empty sweep")
    return max(sweep, key=lambda s: (s.f1, s.threshold))


def mean_class_accuracy(predictions, labels, num_classes: int) -> tuple[float, np.ndarray]:
    """Mean of per-class accuracies over classes present in ``labels``.

    The per-class vector holds NaN for classes without test instances.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise InvalidInput(f"length mismatch: {predictions.shape} vs {labels.shape}")
    if len(labels) and (labels.min() < 0 or labels.max() >= num_classes):
        raise InvalidInput("label out of range")
    per_class = np.full(num_classes, np.nan)
    for k in range(num_classes):
        sel = labels == k
        if sel.any():
            per_class[k] = float((predictions[sel] == k).mean())
    present = ~np.isnan(per_class)
    if not present.any():
        raise InvalidInput("no labelled instances")
    return float(per_class[present].mean()), per_class


def topk_accuracy(scores, labels, k: int) -> float:
    """Fraction of rows whose label ranks in the top ``k``.

    Equal scores rank the lower class index first.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    K = scores.shape[1]
    if not 1 <= k <= K:
        raise InvalidInput(f"k={k} outside [1, {K}]")
    own = scores[np.arange(len(labels)), labels][:, None]
    idx = np.arange(K)[None, :]
    rank = (scores > own).sum(axis=1) + ((scores == own) & (idx < labels[:, None])).sum(axis=1)
    return float((rank < k).mean())


@dataclass
class MetricsReport:
    best_f1: float | None
    precision_at_best: float | None
    recall_at_best: float | None
    threshold_at_best: float | None
    mean_class_accuracy: float
    topk: dict[int, float]
    per_class_accuracy: list[float | None]
    num_items: int = 0
    num_gaze_items: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["topk"] = {str(k): v for k, v in self.topk.items()}
        return d


def evaluate(class_probs: np.ndarray, labels: np.ndarray, num_classes: int,
             gaze_items: Sequence[GazeEvalItem] | None = None, ks=(1, 5),
             average: str = "micro") -> MetricsReport:
    preds = np.asarray(class_probs).argmax(axis=1)
    mca, per_class = mean_class_accuracy(preds, labels, num_classes)
    topk = {k: topk_accuracy(class_probs, labels, k) for k in ks if k <= class_probs.shape[1]}
    best = None
    n_gaze = 0
    if gaze_items is not None:
        n_gaze = sum(1 for it in gaze_items if it.valid)
        if n_gaze:
            best = best_f1(gaze_pr_sweep(gaze_items, average))
    return MetricsReport(
        best_f1=None if best is None else best.f1,
        precision_at_best=None if best is None else best.precision,
        recall_at_best=None if best is None else best.recall,
        threshold_at_best=None if best is None else best.threshold,
        mean_class_accuracy=mca,
        topk=topk,
        per_class_accuracy=[None if np.isnan(v) else float(v) for v in per_class],
        num_items=int(len(labels)),
        num_gaze_items=n_gaze,
    )
