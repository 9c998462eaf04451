"""Sample-based predictive distributions on a space-time grid."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .fem_oracle import GridSpec, write_grid_csv

Z95 = 1.959963984540054


class RunningMoments:
    """Welford mean/variance of equally shaped arrays fed one at a time."""

    def __init__(self):
        self.n = 0
        self.mean = None
        self._m2 = None
        self.min = None
        self.max = None

    def add(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64)
        self.n += 1
        if self.mean is None:
            self.mean = x.copy()
            self._m2 = np.zeros_like(x)
            self.min = x.copy()
            self.max = x.copy()
            return
        d = x - self.mean
        self.mean += d / self.n
        self._m2 += d * (x - self.mean)
        np.minimum(self.min, x, out=self.min)
        np.maximum(self.max, x, out=self.max)

    @property
    def var(self) -> np.ndarray:
        if self.n == 0:
            raise ValueError("no samples")
        return np.maximum(self._m2 / self.n, 0.0)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)


def _exact_degenerate(mean, std, lo, hi):
    # rounding can push the mean of identical samples off their value
    mean = np.clip(mean, lo, hi)
    same = lo == hi
    mean = np.where(same, lo, mean)
    std = np.where(same, 0.0, std)
    return mean, std


@dataclass(eq=False)
class PosteriorPredictive:
    """Per-point predictive summary, optionally with the raw samples.

    ``samples`` has shape (S, nx, nt).  Intervals are central 95% Gaussian
    intervals ``mean -/+ 1.96 std`` (population std over samples).
    """

    grid: GridSpec
    mean: np.ndarray
    std: np.ndarray
    n_samples: int
    samples: Optional[np.ndarray] = field(default=None, repr=False)
    units: str = "normalized"
    level: float = 0.95

    def __post_init__(self):
        shape = (self.grid.nx, self.grid.nt)
        if self.mean.shape != shape or self.std.shape != shape:
            raise ValueError(f"summary arrays must have shape {shape}")
        if np.any(self.std < 0):
            raise ValueError("std must be >= 0")

    @classmethod
    def from_samples(cls, grid: GridSpec, samples, units="normalized") -> "PosteriorPredictive":
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 3 or samples.shape[1:] != (grid.nx, grid.nt):
            raise ValueError("samples must have shape (S, nx, nt)")
        if samples.shape[0] < 2:
            raise ValueError("need at least two samples")
        lo, hi = samples.min(axis=0), samples.max(axis=0)
        mean, std = _exact_degenerate(samples.mean(axis=0), samples.std(axis=0), lo, hi)
        return cls(grid, mean, std, samples.shape[0], samples, units)

    @classmethod
    def from_stream(cls, grid: GridSpec, fields: Iterable[np.ndarray], units="normalized", keep_samples=False):
        acc = RunningMoments()
        kept = [] if keep_samples else None
        for f in fields:
            acc.add(f)
            if kept is not None:
                kept.append(np.array(f, dtype=np.float64))
        if acc.n < 2:
            raise ValueError("need at least two samples")
        mean, std = _exact_degenerate(acc.mean, acc.std, acc.min, acc.max)
        samples = np.stack(kept) if kept is not None else None
        return cls(grid, mean, std, acc.n, samples, units)

    @property
    def lower(self) -> np.ndarray:
        return self.mean - Z95 * self.std

    @property
    def upper(self) -> np.ndarray:
        return self.mean + Z95 * self.std

    def quantile(self, q) -> np.ndarray:
        if self.samples is None:
            raise ValueError("quantiles need stored samples")
        return np.quantile(self.samples, q, axis=0)

    def to_csv(self, directory, prefix: str = "") -> dict:
        """Write mean, std, lower and upper grids; returns the paths."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name, arr in (("mean", self.mean), ("std", self.std), ("lower", self.lower), ("upper", self.upper)):
            p = directory / f"{prefix}{name}.csv"
            write_grid_csv(p, self.grid, arr)
            paths[name] = p
        return paths


def evaluate_grid(forward, grid: GridSpec, chunk: int = 65536) -> np.ndarray:
    """Evaluate ``forward(x, t)`` over ``grid`` in chunks; returns (nx, nt)."""
    X, T = grid.mesh()
    out = np.empty(X.size)
    for s in range(0, X.size, chunk):
        out[s:s + chunk] = forward(X[s:s + chunk], T[s:s + chunk])
    return out.reshape(grid.nx, grid.nt)
