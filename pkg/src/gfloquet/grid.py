"""Uniform period/history grids, sampled state segments, and interpolation helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform discretization of one period plus the trailing memory window.

    Nodes are spaced h = period / samples_per_period; the history window
    [-memory_depth, 0] is covered by history_points extra nodes so that
    history_points * h >= memory_depth.
    """

    period: float
    samples_per_period: int
    memory_depth: float = 0.0

    def __post_init__(self):
        if not (self.period > 0 and np.isfinite(self.period)):
            raise GridError(f"period must be positive and finite, got {self.period}")
        if self.samples_per_period < 8:
            raise GridError(f"samples_per_period must be >= 8, got {self.samples_per_period}")
        if not (self.memory_depth >= 0 and np.isfinite(self.memory_depth)):
            raise GridError(f"memory_depth must be non-negative, got {self.memory_depth}")

    @property
    def step(self) -> float:
        return self.period / self.samples_per_period

    @property
    def history_points(self) -> int:
        # relative fuzz so that e.g. r = k*h computed in floating point does not
        # spuriously round up to k+1 nodes
        x = self.memory_depth / self.step
        return int(math.ceil(x - abs(x) * 1e-12))

    @property
    def segment_nodes(self) -> np.ndarray:
        """Nodes of the history window, [-history_points*h, ..., -h, 0]."""
        nh = self.history_points
        return (np.arange(nh + 1) - nh) * self.step

    @property
    def period_nodes(self) -> np.ndarray:
        """Nodes of one period, [0, h, ..., period]."""
        return np.arange(self.samples_per_period + 1) * self.step

    def refined(self, factor: int = 2) -> "PeriodicGrid":
        return PeriodicGrid(self.period, self.samples_per_period * factor, self.memory_depth)

    def state_size(self, dimension: int) -> int:
        return dimension * (self.history_points + 1)


@dataclass(frozen=True)
class StateSegment:
    """Samples of the state history on the nodes of [-memory_depth, 0]."""

    grid: PeriodicGrid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples))
        if samples.shape[0] != self.grid.history_points + 1:
            raise GridError(
                f"segment needs {self.grid.history_points + 1} sample rows, got {samples.shape[0]}"
            )
        if not np.all(np.isfinite(samples)):
            raise GridError("segment samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    @staticmethod
    def constant(grid: PeriodicGrid, value) -> "StateSegment":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return StateSegment(grid, np.tile(value, (grid.history_points + 1, 1)))


def interp_uniform(values: np.ndarray, t0: float, h: float, query) -> np.ndarray:
    """Piecewise-cubic Lagrange interpolation on uniform nodes t0 + j*h.

    values has the node axis first; query may be scalar or 1-d. Falls back to
    the full-degree Lagrange polynomial when fewer than 4 nodes are available.
    """
    values = np.asarray(values)
    q = np.atleast_1d(np.asarray(query, dtype=float))
    length = values.shape[0]
    s = (q - t0) / h
    extra = (None,) * (values.ndim - 1)
    if length < 4:
        # low-order fallback for very short histories
        out = np.zeros(q.shape + values.shape[1:], dtype=values.dtype)
        for i in range(length):
            w = np.ones_like(s)
            for j in range(length):
                if j != i:
                    w = w * (s - j) / (i - j)
            out = out + w[(...,) + extra] * values[i]
        return out
    k0 = np.clip(np.floor(s).astype(int) - 1, 0, length - 4)
    u = s - k0
    w0 = -(u - 1) * (u - 2) * (u - 3) / 6.0
    w1 = u * (u - 2) * (u - 3) / 2.0
    w2 = -u * (u - 1) * (u - 3) / 2.0
    w3 = u * (u - 1) * (u - 2) / 6.0
    return (
        w0[(...,) + extra] * values[k0]
        + w1[(...,) + extra] * values[k0 + 1]
        + w2[(...,) + extra] * values[k0 + 2]
        + w3[(...,) + extra] * values[k0 + 3]
    )


def periodic_interp(samples: np.ndarray, period: float, query) -> np.ndarray:
    """Cubic interpolation of a periodic signal sampled uniformly on [0, period).

    samples holds N rows (the node at `period` is the wrap of node 0).
    """
    samples = np.asarray(samples)
    n = samples.shape[0]
    h = period / n
    q = np.atleast_1d(np.asarray(query, dtype=float))
    s = (q / h) % n
    j = np.floor(s).astype(int)
    u = s - j
    idx = (j[:, None] + np.arange(-1, 3)[None, :]) % n
    w = np.stack(
        [
            -u * (u - 1) * (u - 2) / 6.0,
            (u + 1) * (u - 1) * (u - 2) / 2.0,
            -(u + 1) * u * (u - 2) / 2.0,
            (u + 1) * u * (u - 1) / 6.0,
        ],
        axis=1,
    )
    extra = (None,) * (samples.ndim - 1)
    vals = samples[idx]  # (Q, 4, ...)
    return np.sum(w[(slice(None), slice(None)) + extra] * vals, axis=1)
