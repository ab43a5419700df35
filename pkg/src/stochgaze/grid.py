"""Discrete distributions over (t, m, n) attention grids.

Grids are plain float64 arrays of shape ``(t, m, n)``. Functions that
produce a distribution return an array summing to one over all cells.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_FLOOR = 1e-8
U_CLAMP = 1e-12


class InvalidInput(ValueError):
    pass


@dataclass(frozen=True)
class GridShape:
    t: int = 1
    m: int = 7
    n: int = 7

    def __post_init__(self):
        for name in ("t", "m", "n"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InvalidInput(f"grid dimension {name}={v!r} must be a positive integer")

    @property
    def size(self) -> int:
        return self.t * self.m * self.n

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.t, self.m, self.n)


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise InvalidInput("logits must be finite")


def log_normalize(logits: np.ndarray) -> np.ndarray:
    """Log-softmax over every cell of the trailing three axes."""
    logits = np.asarray(logits, dtype=np.float64)
    axes = tuple(range(logits.ndim - 3, logits.ndim)) if logits.ndim >= 3 else None
    z = logits - logits.max(axis=axes, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axes, keepdims=True))


def normalize(logits: np.ndarray) -> np.ndarray:
    """Softmax over all cells of a logit grid (stabilised by max subtraction).

    Batched input ``(..., t, m, n)`` is normalized independently per grid.
    """
    logits = np.asarray(logits, dtype=np.float64)
    _check_finite(logits)
    axes = tuple(range(logits.ndim - 3, logits.ndim)) if logits.ndim >= 3 else None
    e = np.exp(logits - logits.max(axis=axes, keepdims=True))
    return e / e.sum(axis=axes, keepdims=True)


def uniform(shape: GridShape) -> np.ndarray:
    return np.full(shape.as_tuple(), 1.0 / shape.size)


def is_dist(p: np.ndarray, tol: float = 1e-9) -> bool:
    p = np.asarray(p)
    return bool(np.all(np.isfinite(p)) and np.all(p >= 0) and abs(p.sum() - 1.0) <= tol)


def floor_dist(p: np.ndarray, eps: float = EPS_FLOOR) -> np.ndarray:
    """Clip every cell to at least ``eps`` and renormalize."""
    p = np.maximum(np.asarray(p, dtype=np.float64), eps)
    axes = tuple(range(p.ndim - 3, p.ndim)) if p.ndim >= 3 else None
    return p / p.sum(axis=axes, keepdims=True)


def entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64).ravel()
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def kl_divergence(q: np.ndarray, p: np.ndarray, eps: float = EPS_FLOOR) -> float:
    """KL[q || p] in nats, with ``p`` floored at ``eps`` so the log is finite."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise InvalidInput(f"shape mismatch: {q.shape} vs {p.shape}")
    p = floor_dist(p, eps)
    mask = q > 0
    return float((q[mask] * (np.log(q[mask]) - np.log(p[mask]))).sum())


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(shape)
    u = np.clip(u, U_CLAMP, 1.0 - U_CLAMP)
    return -np.log(-np.log(u))


def gumbel_softmax(logits: np.ndarray, gumbel: np.ndarray, tau: float) -> np.ndarray:
    """Relaxed sample ``softmax((logits + gumbel) / tau)`` for pre-drawn noise."""
    if not tau > 0:
        raise InvalidInput(f"tau must be positive, got {tau}")
    return normalize((np.asarray(logits, dtype=np.float64) + gumbel) / tau)


def gumbel_softmax_sample(logits: np.ndarray, tau: float, rng: np.random.Generator) -> np.ndarray:
    if not tau > 0:
        raise InvalidInput(f"tau must be positive, got {tau}")
    logits = np.asarray(logits, dtype=np.float64)
    _check_finite(logits)
    return gumbel_softmax(logits, sample_gumbel(logits.shape, rng), tau)
