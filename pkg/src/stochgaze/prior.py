"""Gaze measurements and the noisy-gaze prior over attention grids.

Fixations become isotropic Gaussians (in grid-cell units) evaluated at
cell centres. Saccades, unknown events and untracked frames carry no
positional evidence, so a slice without any fixation gets a uniform map.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .grid import EPS_FLOOR, GridShape, InvalidInput, uniform


class GazeKind(str, enum.Enum):
    FIXATION = "fixation"
    SACCADE = "saccade"
    UNKNOWN = "unknown"
    UNTRACKED = "untracked"


KIND_ORDER = (GazeKind.FIXATION, GazeKind.SACCADE, GazeKind.UNKNOWN, GazeKind.UNTRACKED)


@dataclass(frozen=True)
class GazeRecord:
    frame_index: int
    u: float | None
    v: float | None
    kind: GazeKind

    def __post_init__(self):
        object.__setattr__(self, "kind", GazeKind(self.kind))
        if self.frame_index < 0:
            raise InvalidInput(f"negative frame index {self.frame_index}")
        if self.kind is GazeKind.UNTRACKED:
            if self.u is not None or self.v is not None:
                raise InvalidInput("untracked gaze records carry no position")
        else:
            if self.u is None or self.v is None:
                raise InvalidInput(f"{self.kind.value} record needs a position")
            if not (0.0 <= self.u <= 1.0 and 0.0 <= self.v <= 1.0):
                raise InvalidInput(f"gaze position ({self.u}, {self.v}) outside [0, 1]^2")


@dataclass(frozen=True)
class PriorConfig:
    sigma_cells: float = 0.5
    eps_floor: float = EPS_FLOOR
    window_frames: int = 8

    def __post_init__(self):
        if not self.sigma_cells > 0:
            raise InvalidInput("sigma_cells must be positive")
        if not self.eps_floor > 0:
            raise InvalidInput("eps_floor must be positive")
        if int(self.window_frames) != self.window_frames or self.window_frames < 1:
            raise InvalidInput("window_frames must be a positive integer")


def project_point_to_cell(u: float, v: float, shape: GridShape) -> tuple[int, int]:
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise InvalidInput(f"point ({u}, {v}) outside [0, 1]^2")
    row = min(int(math.floor(v * shape.m)), shape.m - 1)
    col = min(int(math.floor(u * shape.n)), shape.n - 1)
    return row, col


def _slice_of(frame_index: int, window_frames: int, start_frame: int, t: int) -> int | None:
    s = (frame_index - start_frame) // window_frames
    if frame_index < start_frame or s >= t:
        return None
    return s


def fixations_by_slice(records: Iterable[GazeRecord], shape: GridShape,
                       window_frames: int = 8, start_frame: int = 0) -> list[list[GazeRecord]]:
    out: list[list[GazeRecord]] = [[] for _ in range(shape.t)]
    for r in records:
        if r.kind is not GazeKind.FIXATION:
            continue
        s = _slice_of(r.frame_index, window_frames, start_frame, shape.t)
        if s is not None:
            out[s].append(r)
    return out


def aggregate_fixations(records: Iterable[GazeRecord], shape: GridShape,
                        window_frames: int = 8, start_frame: int = 0) -> set[tuple[int, int, int]]:
    """Cells hit by any fixation, keyed ``(slice, row, col)``.

    Slice ``s`` covers frames ``[start + s*W, start + (s+1)*W)``.
    """
    cells = set()
    for s, fix in enumerate(fixations_by_slice(records, shape, window_frames, start_frame)):
        for r in fix:
            cells.add((s, *project_point_to_cell(r.u, r.v, shape)))
    return cells


def gaussian_map(u: float, v: float, m: int, n: int, sigma_cells: float) -> np.ndarray:
    """Isotropic Gaussian at cell centres, normalized over an ``m x n`` slice."""
    rows = np.arange(m) + 0.5
    cols = np.arange(n) + 0.5
    dr = rows[:, None] - v * m
    dc = cols[None, :] - u * n
    logk = -(dr**2 + dc**2) / (2.0 * sigma_cells**2)
    k = np.exp(logk - logk.max())
    return k / k.sum()


def build_prior(records: Iterable[GazeRecord], cfg: PriorConfig, shape: GridShape,
                start_frame: int = 0) -> np.ndarray:
    records = list(records)
    prior = np.empty(shape.as_tuple())
    for s, fix in enumerate(fixations_by_slice(records, shape, cfg.window_frames, start_frame)):
        if fix:
            prior[s] = np.mean([gaussian_map(r.u, r.v, shape.m, shape.n, cfg.sigma_cells)
                                for r in fix], axis=0)
        else:
            prior[s] = 1.0 / (shape.m * shape.n)
    prior /= shape.t
    return prior / prior.sum()


def uniform_prior(shape: GridShape) -> np.ndarray:
    return uniform(shape)
