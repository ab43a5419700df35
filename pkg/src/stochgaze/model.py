"""Joint gaze / action network over per-cell descriptors.

A shared per-cell encoder ``h = relu(W1 x + b1)`` feeds two heads: a
gaze head producing one attention logit per cell, and a feature head
producing ``C`` channels per cell. An attention map pools the feature
grid into a single vector, which a softmax-linear classifier scores.

All batched arrays put the batch first: descriptors are ``(B, t, m, n, D)``,
attention maps ``(B, t, m, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Iterator

import numpy as np

from . import grid
from .grid import GridShape, InvalidInput
from .prior import GazeRecord

PARAM_NAMES = ("W1", "b1", "wg", "Wf", "bf", "Wc", "bc")
PARAM_GROUPS = {
    "encoder": ("W1", "b1"),
    "gaze_head": ("wg",),
    "feature_head": ("Wf", "bf"),
    "classifier": ("Wc", "bc"),
}


@dataclass
class ClipSample:
    features: np.ndarray  # (t, m, n, D)
    gaze: list[GazeRecord]
    label: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 4:
            raise InvalidInput(f"features must be (t, m, n, D), got {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise InvalidInput("features must be finite")
        if self.label < 0:
            raise InvalidInput(f"negative label {self.label}")

    @property
    def shape(self) -> GridShape:
        return GridShape(*self.features.shape[:3])


@dataclass
class ModelParams:
    """Encoder, gaze head, feature head and classifier weights.

    The gaze head has no bias: a constant added to every logit cancels in
    the normalization, so it would be a dead parameter.
    """

    W1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    wg: np.ndarray  # (H,)
    Wf: np.ndarray  # (C, H)
    bf: np.ndarray  # (C,)
    Wc: np.ndarray  # (K, C)
    bc: np.ndarray  # (K,)

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, np.asarray(getattr(self, f.name), dtype=np.float64))
        H, D = self.W1.shape
        C = self.Wf.shape[0]
        K = self.Wc.shape[0]
        expected = {"b1": (H,), "wg": (H,), "Wf": (C, H), "bf": (C,), "Wc": (K, C), "bc": (K,)}
        for name, shp in expected.items():
            if getattr(self, name).shape != shp:
                raise InvalidInput(f"{name} has shape {getattr(self, name).shape}, expected {shp}")

    @property
    def dims(self) -> dict[str, int]:
        return {"D": self.W1.shape[1], "H": self.W1.shape[0], "C": self.Wf.shape[0], "K": self.Wc.shape[0]}

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in PARAM_NAMES:
            yield name, getattr(self, name)

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(**{k: np.zeros_like(v) for k, v in self.items()})

    def num_parameters(self) -> int:
        return sum(v.size for _, v in self.items())


def init_params(D: int, H: int, C: int, K: int, rng: np.random.Generator) -> ModelParams:
    """Fan-in scaled uniform weights, zero biases, zero gaze head (uniform attention)."""
    def fan_in(rows, cols):
        bound = 1.0 / np.sqrt(cols)
        return rng.uniform(-bound, bound, size=(rows, cols))

    return ModelParams(
        W1=fan_in(H, D), b1=np.zeros(H),
        wg=np.zeros(H),
        Wf=fan_in(C, H), bf=np.zeros(C),
        Wc=fan_in(K, C), bc=np.zeros(K),
    )


@dataclass
class ModelOutput:
    gaze_logits: np.ndarray
    gaze_dist: np.ndarray
    attention: np.ndarray
    pooled: np.ndarray
    class_probs: np.ndarray
    # intermediates for backward
    cache: dict = field(default_factory=dict, repr=False)


# ---------------------------------------------------------------------------
# per-cell building blocks


def encode(features: np.ndarray, params: ModelParams) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != params.W1.shape[1]:
        raise InvalidInput(f"descriptor width {features.shape[-1]} != encoder input {params.W1.shape[1]}")
    return np.maximum(features @ params.W1.T + params.b1, 0.0)


def gaze_forward(hidden: np.ndarray, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    logits = hidden @ params.wg
    return logits, grid.normalize(logits)


def feature_forward(hidden: np.ndarray, params: ModelParams) -> np.ndarray:
    return hidden @ params.Wf.T + params.bf


def attention_pool(featgrid: np.ndarray, attn: np.ndarray) -> np.ndarray:
    featgrid = np.asarray(featgrid, dtype=np.float64)
    attn = np.asarray(attn, dtype=np.float64)
    if featgrid.shape[:-1] != attn.shape:
        raise InvalidInput(f"attention {attn.shape} does not match feature grid {featgrid.shape[:-1]}")
    return np.einsum("...tmn,...tmnc->...c", attn, featgrid)


def _softmax_rows(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def classify(pooled: np.ndarray, params: ModelParams) -> np.ndarray:
    return _softmax_rows(np.asarray(pooled, dtype=np.float64) @ params.Wc.T + params.bc)


# ---------------------------------------------------------------------------
# batched forward


def forward_batch(params: ModelParams, X: np.ndarray, *, mode: str = "mean",
                  tau: float = 2.0, gumbel: np.ndarray | None = None,
                  attention: np.ndarray | None = None,
                  keep_mask: np.ndarray | None = None, keep_prob: float = 1.0) -> ModelOutput:
    """Run the network on a batch ``X`` of shape ``(B, t, m, n, D)``.

    ``mode`` selects the pooling map: ``"sample"`` pools with the relaxed
    Gumbel sample built from ``gumbel``; ``"mean"`` pools with q itself;
    ``"fixed"`` pools with the supplied ``attention`` (no gradient reaches
    the gaze head through pooling).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 5:
        raise InvalidInput(f"batch must be (B, t, m, n, D), got {X.shape}")
    if X.shape[-1] != params.W1.shape[1]:
        raise InvalidInput(f"descriptor width {X.shape[-1]} != encoder input {params.W1.shape[1]}")
    pre = X @ params.W1.T + params.b1
    h = np.maximum(pre, 0.0)
    logits = h @ params.wg
    log_q = grid.log_normalize(logits)
    q = np.exp(log_q)
    if mode == "sample":
        if gumbel is None:
            raise InvalidInput("sample mode needs recorded gumbel noise")
        a = grid.gumbel_softmax(logits, gumbel, tau)
    elif mode == "mean":
        a = q
    elif mode == "fixed":
        if attention is None:
            raise InvalidInput("fixed mode needs an attention map")
        a = np.broadcast_to(np.asarray(attention, dtype=np.float64), logits.shape)
    else:
        raise InvalidInput(f"unknown attention mode {mode!r}")
    phi = h @ params.Wf.T + params.bf
    B = X.shape[0]
    pooled = np.matmul(a.reshape(B, 1, -1), phi.reshape(B, -1, phi.shape[-1]))[:, 0, :]
    if keep_mask is not None:
        dropped = pooled * keep_mask / keep_prob
    else:
        dropped = pooled
    scores = dropped @ params.Wc.T + params.bc
    probs = _softmax_rows(scores)
    cache = dict(X=X, pre=pre, h=h, log_q=log_q, phi=phi, dropped=dropped,
                 mode=mode, tau=tau, gumbel=gumbel, keep_mask=keep_mask, keep_prob=keep_prob)
    return ModelOutput(gaze_logits=logits, gaze_dist=q, attention=a, pooled=pooled,
                       class_probs=probs, cache=cache)


def draw_noise(rng: np.random.Generator, grid_shape: tuple, C: int, dropout_rate: float,
               dropout_on: bool) -> tuple[np.ndarray, np.ndarray | None, float]:
    """Gumbel noise for each cell and an (optional) dropout keep-mask over the pooled vector.

    ``grid_shape`` includes the batch axis.
    """
    gumbel = grid.sample_gumbel(grid_shape, rng)
    if dropout_on and dropout_rate > 0:
        keep = 1.0 - dropout_rate
        mask = (rng.random((grid_shape[0], C)) < keep).astype(np.float64)
        return gumbel, mask, keep
    return gumbel, None, 1.0


def _squeeze(out: ModelOutput) -> ModelOutput:
    return ModelOutput(
        gaze_logits=out.gaze_logits[0], gaze_dist=out.gaze_dist[0], attention=out.attention[0],
        pooled=out.pooled[0], class_probs=out.class_probs[0], cache=out.cache,
    )


def forward_train(sample: ClipSample, params: ModelParams, tau: float, rng: np.random.Generator,
                  dropout_rate: float = 0.7, dropout_on: bool = True) -> ModelOutput:
    if not tau > 0:
        raise InvalidInput(f"tau must be positive, got {tau}")
    X = sample.features[None]
    gumbel, mask, keep = draw_noise(rng, X.shape[:4], params.Wf.shape[0], dropout_rate, dropout_on)
    out = forward_batch(params, X, mode="sample", tau=tau, gumbel=gumbel,
                        keep_mask=mask, keep_prob=keep)
    return _squeeze(out)


def forward_infer(sample: ClipSample, params: ModelParams) -> ModelOutput:
    return _squeeze(forward_batch(params, sample.features[None], mode="mean"))
