"""Variational training: loss, analytic gradients, SGD and a gradient checker.

The per-example loss is ``-log p(y | g~, x) + kl_weight * KL[q || prior]``
where ``g~`` is a relaxed Gumbel sample of the predicted gaze map ``q``.
Gradients pass through the sample with the drawn noise held fixed.

The deterministic baseline (``prior_mode="mle"``) pools with ``q`` itself
and replaces the KL term with a per-cell sigmoid cross entropy against the
fixation-cell indicator. ``prior_mode="fixed"`` pools with a supplied map
and trains only the encoder, feature head and classifier.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import grid
from .grid import EPS_FLOOR, InvalidInput
from .model import (PARAM_GROUPS, PARAM_NAMES, ClipSample, ModelOutput, ModelParams,
                    draw_noise, forward_batch, init_params)

log = logging.getLogger(__name__)

PRIOR_MODES = ("gaze", "uniform", "mle", "none", "fixed")
REQUIRED_CACHE = ("X", "pre", "h", "log_q", "phi", "dropped", "mode")


class ContractViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.032
    momentum: float = 0.9
    weight_decay: float = 4e-5
    decay_epoch: int = 40
    decay_factor: float = 0.1
    total_epochs: int = 80
    tau: float = 2.0
    kl_weight: float = 1.0
    dropout: float = 0.7
    batch_size: int = 40
    seed: int = 0

    def __post_init__(self):
        if not self.lr0 > 0:
            raise InvalidInput("lr0 must be positive")
        if not 0 <= self.momentum < 1:
            raise InvalidInput("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise InvalidInput("weight_decay must be nonnegative")
        if self.total_epochs < 0 or self.decay_epoch < 0:
            raise InvalidInput("epoch counts must be nonnegative")
        if self.decay_epoch > self.total_epochs:
            raise InvalidInput("decay_epoch must not exceed total_epochs")
        if not 0 < self.decay_factor <= 1:
            raise InvalidInput("decay_factor must lie in (0, 1]")
        if not self.tau > 0:
            raise InvalidInput("tau must be positive")
        if self.kl_weight < 0:
            raise InvalidInput("kl_weight must be nonnegative")
        if not 0 <= self.dropout < 1:
            raise InvalidInput("dropout must lie in [0, 1)")
        if self.batch_size < 1:
            raise InvalidInput("batch_size must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    nll: float
    kl: float
    total: float


@dataclass
class OptimState:
    buffers: dict[str, np.ndarray]
    epoch: int = 0
    lr: float = 0.0

    @classmethod
    def fresh(cls, params: ModelParams, lr: float = 0.0) -> "OptimState":
        return cls({k: np.zeros_like(v) for k, v in params.items()}, 0, lr)


@dataclass
class TrainingData:
    """Stacked arrays for a training or evaluation split.

    ``priors`` feed the KL term, ``gaze_targets``/``gaze_valid`` feed the
    MLE cross entropy and ``attention`` holds fixed pooling maps.
    """

    X: np.ndarray  # (N, t, m, n, D)
    labels: np.ndarray  # (N,)
    num_classes: int
    priors: np.ndarray | None = None
    gaze_targets: np.ndarray | None = None
    gaze_valid: np.ndarray | None = None  # (N,) bool
    attention: np.ndarray | None = None

    def __len__(self):
        return len(self.labels)

    def take(self, idx) -> "TrainingData":
        sel = lambda a: None if a is None else a[idx]  # noqa: E731
        return TrainingData(self.X[idx], self.labels[idx], self.num_classes, sel(self.priors),
                            sel(self.gaze_targets), sel(self.gaze_valid), sel(self.attention))


# ---------------------------------------------------------------------------
# loss and gradients


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def loss_and_grads(params: ModelParams, out: ModelOutput, labels: np.ndarray, *,
                   priors: np.ndarray | None = None, kl_weight: float = 1.0,
                   gaze_targets: np.ndarray | None = None, gaze_valid: np.ndarray | None = None,
                   need_grads: bool = True) -> tuple[LossBreakdown, ModelParams | None]:
    """Batch-mean loss and its exact gradient for a batched forward pass.

    With ``priors`` the gaze term is ``KL[q || floor(prior)]``; with
    ``gaze_targets`` it is the summed per-cell sigmoid cross entropy on the
    gaze logits, masked by ``gaze_valid``.
    """
    c = out.cache
    missing = [k for k in REQUIRED_CACHE if k not in c]
    if missing:
        raise ContractViolation(f"forward output lacks intermediates {missing}")
    labels = np.asarray(labels)
    B, K = out.class_probs.shape
    if np.any(labels < 0) or np.any(labels >= K):
        raise InvalidInput(f"label out of range [0, {K})")
    rows = np.arange(B)
    nll_b = -np.log(out.class_probs[rows, labels])

    logits = out.gaze_logits
    gaze_b = np.zeros(B)
    dlogits_gaze = None
    if priors is not None and kl_weight > 0:
        log_p = np.log(grid.floor_dist(priors, EPS_FLOOR))
        q = out.gaze_dist
        g = c["log_q"] - log_p
        gaze_b = (q * g).sum(axis=(1, 2, 3))
        dlogits_gaze = kl_weight * q * (g - gaze_b[:, None, None, None])
    elif gaze_targets is not None and kl_weight > 0:
        valid = np.ones(B) if gaze_valid is None else np.asarray(gaze_valid, dtype=np.float64)
        vmask = valid[:, None, None, None]
        gaze_b = (vmask * (_softplus(logits) - gaze_targets * logits)).sum(axis=(1, 2, 3))
        dlogits_gaze = kl_weight * vmask * (_sigmoid(logits) - gaze_targets)

    breakdown = LossBreakdown(
        nll=float(nll_b.mean()), kl=float(gaze_b.mean()),
        total=float((nll_b + kl_weight * gaze_b).mean()),
    )
    if not need_grads:
        return breakdown, None

    h, phi, a = c["h"], c["phi"], out.attention
    H, C = h.shape[-1], phi.shape[-1]
    h2 = h.reshape(-1, H)
    dscores = out.class_probs.copy()
    dscores[rows, labels] -= 1.0
    dscores /= B
    dWc = dscores.T @ c["dropped"]
    dbc = dscores.sum(axis=0)
    dpooled = dscores @ params.Wc
    if c.get("keep_mask") is not None:
        dpooled = dpooled * c["keep_mask"] / c["keep_prob"]
    # dphi[b, cell] = a[b, cell] * dpooled[b]
    dphi = (a.reshape(B, -1, 1) * dpooled[:, None, :]).reshape(-1, C)
    dWf = dphi.T @ h2
    dbf = dphi.sum(axis=0)
    dh = dphi @ params.Wf

    dlogits = np.zeros_like(logits)
    if c["mode"] in ("sample", "mean"):
        da = np.matmul(phi.reshape(B, -1, C), dpooled[:, :, None]).reshape(logits.shape)
        dz = a * (da - (a * da).sum(axis=(1, 2, 3), keepdims=True))
        dlogits += dz / c["tau"] if c["mode"] == "sample" else dz
    if dlogits_gaze is not None:
        dlogits += dlogits_gaze / B
    dl = dlogits.reshape(-1)
    dwg = dl @ h2
    dh += dl[:, None] * params.wg
    dpre = dh * (c["pre"].reshape(-1, H) > 0)
    dW1 = dpre.T @ c["X"].reshape(-1, c["X"].shape[-1])
    db1 = dpre.sum(axis=0)
    grads = ModelParams(W1=dW1, b1=db1, wg=dwg, Wf=dWf, bf=dbf, Wc=dWc, bc=dbc)
    return breakdown, grads


def loss(output: ModelOutput, label: int, prior: np.ndarray, kl_weight: float = 1.0) -> LossBreakdown:
    """Per-example loss for a single (unbatched) forward output."""
    K = output.class_probs.shape[-1]
    if not 0 <= label < K:
        raise InvalidInput(f"label {label} out of range [0, {K})")
    nll = float(-np.log(output.class_probs[label]))
    kl = grid.kl_divergence(output.gaze_dist, prior) if prior is not None else 0.0
    return LossBreakdown(nll=nll, kl=kl, total=nll + kl_weight * kl)


def _batched_view(output: ModelOutput) -> ModelOutput:
    if output.class_probs.ndim == 2:
        return output
    return ModelOutput(output.gaze_logits[None], output.gaze_dist[None], output.attention[None],
                       output.pooled[None], output.class_probs[None], output.cache)


def backward(sample: ClipSample, params: ModelParams, output: ModelOutput, label: int,
             prior: np.ndarray | None, cfg: TrainConfig) -> ModelParams:
    """Exact gradients of the total loss for one example, Gumbel noise held fixed."""
    out = _batched_view(output)
    if "X" in out.cache and out.cache["X"].shape[1:] != sample.features.shape:
        raise ContractViolation("forward output was computed for a different sample")
    priors = None if prior is None else np.asarray(prior)[None]
    _, grads = loss_and_grads(params, out, np.array([label]), priors=priors, kl_weight=cfg.kl_weight)
    return grads


# ---------------------------------------------------------------------------
# optimizer


def sgd_step(params: ModelParams, grads: ModelParams, state: OptimState, cfg: TrainConfig,
             lr: float | None = None) -> tuple[ModelParams, OptimState]:
    """Heavy-ball SGD with L2 weight decay folded into the gradient."""
    lr = state.lr if lr is None else lr
    new_params, new_bufs = {}, {}
    for name, p in params.items():
        g = getattr(grads, name)
        if g.shape != p.shape:
            raise InvalidInput(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        buf = cfg.momentum * state.buffers[name] + (g + cfg.weight_decay * p)
        new_bufs[name] = buf
        new_params[name] = p - lr * buf
    return ModelParams(**new_params), OptimState(new_bufs, state.epoch, lr)


def lr_at_epoch(epoch: int, cfg: TrainConfig) -> float:
    if epoch < 0:
        raise InvalidInput(f"negative epoch {epoch}")
    return cfg.lr0 if epoch < cfg.decay_epoch else cfg.lr0 * cfg.decay_factor


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochLog:
    epoch: int
    lr: float
    nll: float
    kl: float
    total: float
    accuracy: float

    def as_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    params: ModelParams
    log: list[EpochLog] = field(default_factory=list)
    state: OptimState | None = None


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (init, shuffle, noise) generators derived from one seed."""
    ss = np.random.SeedSequence(seed)
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


def _objective_kwargs(data: TrainingData, prior_mode: str, kl_weight: float) -> dict:
    if prior_mode in ("gaze", "uniform"):
        if data.priors is None:
            raise InvalidInput(f"prior_mode={prior_mode!r} needs priors")
        return dict(priors=data.priors, kl_weight=kl_weight)
    if prior_mode == "mle":
        if data.gaze_targets is None:
            raise InvalidInput("prior_mode='mle' needs gaze targets")
        return dict(gaze_targets=data.gaze_targets, gaze_valid=data.gaze_valid, kl_weight=kl_weight)
    return dict(kl_weight=0.0)


def batch_forward_train(params: ModelParams, data: TrainingData, prior_mode: str, cfg: TrainConfig,
                        rng: np.random.Generator, dropout_on: bool = True) -> ModelOutput:
    gumbel, mask, keep = draw_noise(rng, data.X.shape[:4], params.Wf.shape[0], cfg.dropout, dropout_on)
    if prior_mode == "fixed":
        return forward_batch(params, data.X, mode="fixed", attention=data.attention,
                             keep_mask=mask, keep_prob=keep)
    if prior_mode == "mle":
        return forward_batch(params, data.X, mode="mean", keep_mask=mask, keep_prob=keep)
    return forward_batch(params, data.X, mode="sample", tau=cfg.tau, gumbel=gumbel,
                         keep_mask=mask, keep_prob=keep)


def train(data: TrainingData, cfg: TrainConfig, prior_mode: str = "gaze", dims: dict | None = None,
          params: ModelParams | None = None) -> TrainResult:
    """Mini-batch SGD for ``cfg.total_epochs`` epochs, deterministic given ``cfg.seed``.

    ``prior_mode`` is one of ``gaze`` and ``uniform`` (variational loss
    against ``data.priors``), ``mle`` (deterministic pooling with sigmoid
    cross entropy on gaze), ``none`` (variational without a KL term) or
    ``fixed`` (pool with ``data.attention``).
    """
    if prior_mode not in PRIOR_MODES:
        raise InvalidInput(f"unknown prior_mode {prior_mode!r}")
    if len(data) == 0:
        raise InvalidInput("empty training set")
    init_rng, shuffle_rng, noise_rng = seed_streams(cfg.seed)
    if params is None:
        dims = dict(dims or {})
        params = init_params(data.X.shape[-1], dims.get("H", 64), dims.get("C", 32),
                             dims.get("K", data.num_classes), init_rng)
    else:
        params = params.copy()
    if params.Wc.shape[0] < data.num_classes:
        raise InvalidInput("classifier has fewer outputs than the dataset has classes")
    state = OptimState.fresh(params, lr_at_epoch(0, cfg))
    result = TrainResult(params=params, state=state)
    N = len(data)
    for epoch in range(cfg.total_epochs):
        lr = lr_at_epoch(epoch, cfg)
        state.lr, state.epoch = lr, epoch
        order = shuffle_rng.permutation(N)
        sums = np.zeros(3)
        correct = 0
        for start in range(0, N, cfg.batch_size):
            batch = data.take(order[start:start + cfg.batch_size])
            out = batch_forward_train(params, batch, prior_mode, cfg, noise_rng)
            bd, grads = loss_and_grads(params, out, batch.labels,
                                       **_objective_kwargs(batch, prior_mode, cfg.kl_weight))
            if not np.isfinite(bd.total):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            params, state = sgd_step(params, grads, state, cfg, lr)
            nb = len(batch)
            sums += nb * np.array([bd.nll, bd.kl, bd.total])
            correct += int((out.class_probs.argmax(axis=1) == batch.labels).sum())
        sums /= N
        entry = EpochLog(epoch, lr, float(sums[0]), float(sums[1]), float(sums[2]), correct / N)
        result.log.append(entry)
        log.debug("epoch %d lr %.4g nll %.4f kl %.4f acc %.3f", epoch, lr, entry.nll, entry.kl,
                  entry.accuracy)
    state.epoch = cfg.total_epochs
    result.params, result.state = params, state
    return result


def predict(params: ModelParams, data: TrainingData, prior_mode: str = "gaze",
            batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic inference: (class probabilities, attention maps used for pooling)."""
    probs, maps = [], []
    for start in range(0, len(data), batch_size):
        batch = data.take(slice(start, start + batch_size))
        if prior_mode == "fixed":
            out = forward_batch(params, batch.X, mode="fixed", attention=batch.attention)
        else:
            out = forward_batch(params, batch.X, mode="mean")
        probs.append(out.class_probs)
        maps.append(np.array(out.attention))
    return np.concatenate(probs), np.concatenate(maps)


# ---------------------------------------------------------------------------
# gradient verification


def finite_diff_check(sample: ClipSample, params: ModelParams, cfg: TrainConfig,
                      step: float = 1e-5, prior: np.ndarray | None = None,
                      rng: np.random.Generator | None = None, dropout_on: bool = True,
                      prior_mode: str = "gaze") -> dict[str, float]:
    """Worst relative error of analytic vs central-difference gradients, per parameter group.

    One Gumbel draw and dropout mask are fixed (a mask dropping every channel
    is redrawn), then every scalar weight is perturbed by ``+-step``. Relative error uses ``max(|a|, |n|, 1e-8)`` as
    the denominator.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    X = sample.features[None]
    labels = np.array([sample.label])
    gumbel, mask, keep = draw_noise(rng, X.shape[:4], params.Wf.shape[0], cfg.dropout, dropout_on)
    # an all-dropped mask makes the classifier input constant, leaving exact
    # zero gradients whose finite-difference roundoff exceeds the 1e-8 floor
    while mask is not None and not mask.any():
        mask = (rng.random(mask.shape) < keep).astype(np.float64)
    if prior_mode == "mle":
        targets = np.zeros(X.shape[:4])
        from .prior import aggregate_fixations
        for s, r, cc in aggregate_fixations(sample.gaze, sample.shape):
            targets[0, s, r, cc] = 1.0
        kw = dict(gaze_targets=targets, gaze_valid=np.array([targets.any()]), kl_weight=cfg.kl_weight)
        fwd = dict(mode="mean")
    else:
        kw = dict(priors=None if prior is None else np.asarray(prior)[None], kl_weight=cfg.kl_weight)
        fwd = dict(mode="sample", tau=cfg.tau, gumbel=gumbel)

    # the two loss terms are differenced separately: folding a large constant
    # gaze term into the total first would swamp small NLL differences
    def terms(p: ModelParams) -> np.ndarray:
        out = forward_batch(p, X, keep_mask=mask, keep_prob=keep, **fwd)
        bd = loss_and_grads(p, out, labels, need_grads=False, **kw)[0]
        return np.array([bd.nll, bd.kl])

    weights = np.array([1.0, cfg.kl_weight])

    out = forward_batch(params, X, keep_mask=mask, keep_prob=keep, **fwd)
    _, grads = loss_and_grads(params, out, labels, **kw)
    worst = {name: 0.0 for name in PARAM_NAMES}
    for name in PARAM_NAMES:
        base = getattr(params, name)
        analytic = getattr(grads, name)
        for idx in np.ndindex(base.shape):
            plus, minus = params.copy(), params.copy()
            getattr(plus, name)[idx] += step
            getattr(minus, name)[idx] -= step
            num = float(weights @ (terms(plus) - terms(minus))) / (2 * step)
            a = analytic[idx]
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst[name] = max(worst[name], err)
    return {g: max(worst[n] for n in names) for g, names in PARAM_GROUPS.items()}
