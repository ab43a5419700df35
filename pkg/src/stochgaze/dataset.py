"""Clip datasets, their conversion to training arrays, and the on-disk format.

On disk a dataset is two files sharing a stem:

``<stem>.jsonl``
    line 1 is a header ``{"format": "stochgaze-dataset", "version": 1,
    "num_classes": K, "descriptor_dim": D, "blob": "<stem>.bin", ...}``;
    every following line is one sample ``{"label", "shape": [t, m, n],
    "offset", "count", "gaze": [[frame, u, v, kind], ...]}`` with an
    optional ``"truth"`` object. ``offset`` and ``count`` locate the
    sample's descriptors in the blob (in float64 elements).
``<stem>.bin``
    little-endian float64 descriptors, each sample stored in
    ``(t, m, n, D)`` C order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import grid
from .grid import GridShape, InvalidInput
from .learning import TrainingData
from .metrics import GazeEvalItem
from .model import ClipSample
from .prior import GazeKind, GazeRecord, PriorConfig, aggregate_fixations, build_prior

FORMAT_NAME = "stochgaze-dataset"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


class VersionMismatch(FormatError):
    pass


@dataclass
class Dataset:
    samples: list[ClipSample]
    num_classes: int
    truth: list[dict] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples:
            shp = self.samples[0].features.shape
            for s in self.samples:
                if s.features.shape != shp:
                    raise InvalidInput("all samples must share grid shape and descriptor width")
                if s.label >= self.num_classes:
                    raise InvalidInput(f"label {s.label} >= num_classes {self.num_classes}")

    def __len__(self):
        return len(self.samples)

    @property
    def shape(self) -> GridShape:
        return self.samples[0].shape

    @property
    def descriptor_dim(self) -> int:
        return self.samples[0].features.shape[-1]

    def subset(self, idx) -> "Dataset":
        idx = list(idx)
        truth = None if self.truth is None else [self.truth[i] for i in idx]
        return Dataset([self.samples[i] for i in idx], self.num_classes, truth, dict(self.meta))

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def features(self) -> np.ndarray:
        return np.stack([s.features for s in self.samples])

    def priors(self, cfg: PriorConfig) -> np.ndarray:
        return np.stack([build_prior(s.gaze, cfg, s.shape) for s in self.samples])

    def fixation_targets(self, cfg: PriorConfig) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell fixation indicators and a per-sample has-fixation flag."""
        targets = np.zeros((len(self),) + self.shape.as_tuple())
        for i, s in enumerate(self.samples):
            for cell in aggregate_fixations(s.gaze, s.shape, cfg.window_frames):
                targets[(i,) + cell] = 1.0
        return targets, targets.reshape(len(self), -1).any(axis=1)

    def to_training_data(self, cfg: PriorConfig, prior_mode: str = "gaze",
                         attention: np.ndarray | None = None) -> TrainingData:
        data = TrainingData(self.features(), self.labels(), self.num_classes)
        if prior_mode == "gaze":
            data.priors = self.priors(cfg)
        elif prior_mode == "uniform":
            data.priors = np.broadcast_to(grid.uniform(self.shape), (len(self),) + self.shape.as_tuple())
        elif prior_mode == "mle":
            data.gaze_targets, data.gaze_valid = self.fixation_targets(cfg)
        elif prior_mode == "fixed":
            if attention is None:
                raise InvalidInput("fixed prior mode needs attention maps")
            data.attention = np.broadcast_to(attention, (len(self),) + self.shape.as_tuple())
        return data

    def gaze_eval_items(self, maps: np.ndarray, cfg: PriorConfig) -> list[GazeEvalItem]:
        items = []
        for s, m in zip(self.samples, maps):
            cells = aggregate_fixations(s.gaze, s.shape, cfg.window_frames)
            items.append(GazeEvalItem(m, cells, valid=bool(cells)))
        return items


# ---------------------------------------------------------------------------
# persistence


def _gaze_to_json(r: GazeRecord) -> list:
    return [r.frame_index, r.u, r.v, r.kind.value]


def _gaze_from_json(row) -> GazeRecord:
    frame, u, v, kind = row
    return GazeRecord(int(frame), None if u is None else float(u), None if v is None else float(v),
                      GazeKind(kind))


def _paths(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix in (".jsonl", ".bin"):
        path = path.with_suffix("")
    return path.with_suffix(".jsonl"), path.with_suffix(".bin")


def save_dataset(ds: Dataset, path) -> Path:
    manifest, blob = _paths(path)
    manifest.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": FORMAT_NAME, "version": FORMAT_VERSION, "num_classes": ds.num_classes,
        "descriptor_dim": ds.descriptor_dim if len(ds) else 0, "num_samples": len(ds),
        "blob": blob.name, "meta": ds.meta,
    }
    lines = [json.dumps(header, sort_keys=True)]
    offset = 0
    with open(blob, "wb") as fb:
        for i, s in enumerate(ds.samples):
            arr = np.ascontiguousarray(s.features, dtype="<f8")
            fb.write(arr.tobytes())
            rec = {"label": int(s.label), "shape": list(s.features.shape[:3]), "offset": offset,
                   "count": int(arr.size), "gaze": [_gaze_to_json(r) for r in s.gaze]}
            if ds.truth is not None:
                rec["truth"] = ds.truth[i]
            lines.append(json.dumps(rec, sort_keys=True))
            offset += arr.size
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def load_dataset(path) -> Dataset:
    manifest, _ = _paths(path)
    with open(manifest) as fh:
        try:
            rows = [json.loads(line) for line in fh if line.strip()]
        except json.JSONDecodeError as e:
            raise FormatError(f"{manifest}: malformed manifest line: {e}") from e
    if not rows or rows[0].get("format") != FORMAT_NAME:
        raise FormatError(f"{manifest}: not a {FORMAT_NAME} manifest")
    header = rows[0]
    if header.get("version") != FORMAT_VERSION:
        raise VersionMismatch(f"{manifest}: dataset format version {header.get('version')}, "
                              f"expected {FORMAT_VERSION}")
    D = int(header["descriptor_dim"])
    blob = np.fromfile(manifest.parent / header["blob"], dtype="<f8")
    samples, truth = [], []
    for rec in rows[1:]:
        t, m, n = rec["shape"]
        if rec["count"] != t * m * n * D:
            raise FormatError(f"{manifest}: sample count {rec['count']} does not match shape")
        if rec["offset"] + rec["count"] > blob.size:
            raise FormatError(f"{manifest}: descriptor blob is truncated")
        feats = blob[rec["offset"]:rec["offset"] + rec["count"]].reshape(t, m, n, D).astype(np.float64)
        samples.append(ClipSample(feats, [_gaze_from_json(g) for g in rec["gaze"]], int(rec["label"])))
        truth.append(rec.get("truth"))
    has_truth = bool(truth) and all(x is not None for x in truth)
    return Dataset(samples, int(header["num_classes"]), truth if has_truth else None,
                   header.get("meta", {}))
