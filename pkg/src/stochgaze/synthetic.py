"""Planted-attention benchmark: one informative cell per clip, gaze aimed at it.

Each clip has a label ``y`` and a planted cell. The planted cell's
descriptor is ``signal_strength * proto[y] + marker_strength * salience``
plus Gaussian noise; every other cell holds ``clutter_strength * proto[k]``
for an independently drawn class ``k`` plus noise. The salience direction
is what makes the planted cell findable from the descriptors alone.
Clutter defaults to zero, so off-target cells carry pure noise; raising it
fills them with distractor classes.

Gaze events are drawn per frame from ``kind_mix``; fixations land on the
planted cell centre plus Gaussian jitter, saccades and unknown events land
anywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .grid import GridShape, InvalidInput
from .model import ClipSample
from .prior import KIND_ORDER, GazeKind, GazeRecord

# fixation, saccade, unknown, untracked shares of all tracked gaze points
DEFAULT_KIND_MIX = (0.536, 0.261, 0.170, 0.033)


@dataclass(frozen=True)
class SynthConfig:
    shape: GridShape = field(default_factory=GridShape)
    D: int = 16
    K: int = 10
    signal_strength: float = 2.0
    noise_std: float = 0.6
    marker_strength: float = 2.0
    clutter_strength: float = 0.0
    gaze_jitter_std: float = 0.05
    kind_mix: tuple[float, float, float, float] = DEFAULT_KIND_MIX
    window_frames: int = 8
    n_train: int = 1000
    n_test: int = 500
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind_mix", tuple(float(x) for x in self.kind_mix))
        if isinstance(self.shape, (tuple, list)):
            object.__setattr__(self, "shape", GridShape(*self.shape))
        if len(self.kind_mix) != 4 or min(self.kind_mix) < 0 or abs(sum(self.kind_mix) - 1) > 1e-9:
            raise InvalidInput("kind_mix must be four nonnegative shares summing to 1")
        if self.D < 2 or self.K < 2:
            raise InvalidInput("need D >= 2 and K >= 2")
        for name in ("signal_strength", "noise_std", "marker_strength", "clutter_strength",
                     "gaze_jitter_std"):
            if getattr(self, name) < 0:
                raise InvalidInput(f"{name} must be nonnegative")
        if self.n_train < 0 or self.n_test < 0 or self.window_frames < 1:
            raise InvalidInput("sizes must be nonnegative and window_frames positive")


@dataclass
class SynthDataset:
    train: Dataset
    test: Dataset
    prototypes: np.ndarray  # (K, D), unit rows
    salience: np.ndarray  # (D,), unit
    config: SynthConfig

    @property
    def samples(self) -> list[ClipSample]:
        return self.train.samples + self.test.samples


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _gaze(rng: np.random.Generator, cfg: SynthConfig, row: int, col: int) -> list[GazeRecord]:
    shape = cfg.shape
    cu, cv = (col + 0.5) / shape.n, (row + 0.5) / shape.m
    records = []
    n_frames = shape.t * cfg.window_frames
    kinds = rng.choice(4, size=n_frames, p=cfg.kind_mix)
    for f, ki in enumerate(kinds):
        kind = KIND_ORDER[ki]
        if kind is GazeKind.FIXATION:
            u, v = cu + cfg.gaze_jitter_std * rng.normal(), cv + cfg.gaze_jitter_std * rng.normal()
            records.append(GazeRecord(f, float(np.clip(u, 0, 1)), float(np.clip(v, 0, 1)), kind))
        elif kind is GazeKind.UNTRACKED:
            records.append(GazeRecord(f, None, None, kind))
        else:
            records.append(GazeRecord(f, float(rng.random()), float(rng.random()), kind))
    return records


def generate(cfg: SynthConfig) -> SynthDataset:
    """Draw ``n_train + n_test`` clips; every draw derives from ``cfg.seed``."""
    shape = cfg.shape
    n_total = cfg.n_train + cfg.n_test
    root = np.random.SeedSequence(cfg.seed)
    proto_ss, *sample_ss = root.spawn(1 + n_total)
    prng = np.random.default_rng(proto_ss)
    prototypes = _unit(prng.normal(size=(cfg.K, cfg.D)))
    salience = _unit(prng.normal(size=cfg.D))

    samples, truth = [], []
    for ss in sample_ss:
        rng = np.random.default_rng(ss)
        y = int(rng.integers(cfg.K))
        row, col = int(rng.integers(shape.m)), int(rng.integers(shape.n))
        clutter = rng.integers(cfg.K, size=shape.as_tuple())
        feats = cfg.clutter_strength * prototypes[clutter]
        feats[:, row, col] = cfg.signal_strength * prototypes[y] + cfg.marker_strength * salience
        feats = feats + cfg.noise_std * rng.normal(size=feats.shape)
        samples.append(ClipSample(feats, _gaze(rng, cfg, row, col), y))
        truth.append({"row": row, "col": col})

    meta = {"generator": "planted-attention", "seed": cfg.seed}
    train = Dataset(samples[:cfg.n_train], cfg.K, truth[:cfg.n_train], dict(meta))
    test = Dataset(samples[cfg.n_train:], cfg.K, truth[cfg.n_train:], dict(meta))
    return SynthDataset(train, test, prototypes, salience, cfg)


def oracle_predict(ds: Dataset, prototypes: np.ndarray, salience: np.ndarray,
                   cfg: SynthConfig) -> np.ndarray:
    """Nearest class template at the true planted cell (Bayes rule for equal priors)."""
    preds = []
    templates = cfg.signal_strength * prototypes + cfg.marker_strength * salience
    for s, tr in zip(ds.samples, ds.truth):
        x = s.features[:, tr["row"], tr["col"]]  # (t, D)
        d2 = ((x[:, None, :] - templates[None]) ** 2).sum(axis=(0, 2))
        preds.append(int(np.argmin(d2)))
    return np.array(preds)


def oracle_accuracy(ds: SynthDataset, split: str = "test") -> float:
    part = ds.test if split == "test" else ds.train
    if part.truth is None:
        raise InvalidInput("oracle needs the planted-cell truth")
    if len(part) == 0:
        raise InvalidInput("empty split")
    preds = oracle_predict(part, ds.prototypes, ds.salience, ds.config)
    return float((preds == part.labels()).mean())
