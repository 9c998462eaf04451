"""Profile ingestion, cleaning and a synthetic solar-plant profile generator."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .thermal_model import TimeSeriesProfile

log = logging.getLogger(__name__)

COLUMNS = ("t_s", "load_pu", "theta_a_c", "theta_to_c")
_MISSING = {"", "na", "nan", "null", "none"}


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, row: int, column: str, cell: str):
        self.row = row
        self.column = column
        super().__init__(f"row {row}: column {column!r} has non-numeric value {cell!r}")


class ResampleError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileSchema:
    """Column names and sampling interval (seconds) of a profile CSV."""

    t: str = "t_s"
    K: str = "load_pu"
    theta_A: str = "theta_a_c"
    theta_TO: str = "theta_to_c"
    interval: Optional[float] = None
    max_bad_fraction: float = 0.01


def save_profile(profile: TimeSeriesProfile, path, schema: ProfileSchema = ProfileSchema()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([schema.t, schema.K, schema.theta_A, schema.theta_TO])
        for row in zip(profile.t, profile.K, profile.theta_A, profile.theta_TO):
            w.writerow([repr(float(v)) for v in row])


def _read_columns(path: Path, schema: ProfileSchema):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        names = (schema.t, schema.K, schema.theta_A, schema.theta_TO)
        missing = [n for n in names if n not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        idx = [header.index(n) for n in names]
        cols = [[] for _ in names]
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            for j, (i, name) in enumerate(zip(idx, names)):
                cell = row[i].strip() if i < len(row) else ""
                if cell.lower() in _MISSING:
                    if j == 0:
                        raise ParseError(rownum, name, cell)
                    cols[j].append(np.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(rownum, name, cell) from None
                if not math.isfinite(v):
                    raise ParseError(rownum, name, cell)
                cols[j].append(v)
    if not cols[0]:
        raise SchemaError(f"{path}: no data rows")
    return [np.asarray(c, dtype=np.float64) for c in cols]


def impute_mean(values: np.ndarray) -> np.ndarray:
    """Replace NaNs with the mean of the finite entries."""
    values = np.array(values, dtype=np.float64)
    bad = np.isnan(values)
    if bad.all():
        raise ValueError("column has no valid values to impute from")
    if bad.any():
        values[bad] = values[~bad].mean()
    return values


def load_profile(path, schema: ProfileSchema = ProfileSchema()) -> TimeSeriesProfile:
    """Read, de-duplicate, impute and regularize a measured profile.

    Duplicate timestamps keep their first occurrence.  Missing cells and
    empty slots of the regular time base take the column mean.  Irregular
    timestamps snap to the nearest slot; a row is counted as a bad snap when
    it sits half an interval from two slots or lands on an occupied slot.
    """
    path = Path(path)
    t, K, ta, tto = _read_columns(path, schema)

    _, first = np.unique(t, return_index=True)
    if first.size < t.size:
        log.info("%s: dropped %d duplicate rows", path, t.size - first.size)
    keep = np.sort(first)
    order = keep[np.argsort(t[keep], kind="stable")]
    t, K, ta, tto = (a[order] for a in (t, K, ta, tto))
    if t.size < 2:
        raise SchemaError(f"{path}: need at least two distinct timestamps")

    interval = schema.interval if schema.interval is not None else float(np.median(np.diff(t)))
    if not interval > 0:
        raise SchemaError(f"{path}: sampling interval must be > 0")

    pos = (t - t[0]) / interval
    slot = np.rint(pos).astype(np.int64)
    off = np.abs(pos - slot)
    ambiguous = np.abs(off - 0.5) < 1e-9
    n_slots = int(slot[-1]) + 1
    taken = np.full(n_slots, -1, dtype=np.int64)
    collided = np.zeros(t.size, dtype=bool)
    for i, s in enumerate(slot):
        if taken[s] >= 0:
            collided[i] = True
        else:
            taken[s] = i
    bad = ambiguous | collided
    if np.count_nonzero(bad) > schema.max_bad_fraction * t.size:
        raise ResampleError(
            f"{path}: {np.count_nonzero(bad)} of {t.size} rows cannot be snapped to "
            f"the {interval} s grid"
        )
    if np.any(off > 1e-9):
        log.warning("%s: %d timestamps snapped to the %g s grid", path, np.count_nonzero(off > 1e-9), interval)

    out = []
    for col in (K, ta, tto):
        reg = np.full(n_slots, np.nan)
        have = taken >= 0
        reg[have] = col[taken[have]]
        out.append(impute_mean(reg))
    grid_t = t[0] + interval * np.arange(n_slots)
    return TimeSeriesProfile(grid_t, np.maximum(out[0], 0.0), out[1], out[2])


@dataclass(frozen=True)
class SynthShape:
    """Generative parameters of the synthetic solar-plant profile.

    Load follows a half-sine between sunrise and sunset, scaled by a random
    daily peak and perturbed by Gaussian noise, then clipped at zero.  The
    top-oil rise over ambient is a first-order lag of the loss ratio.
    """

    sunrise_h: float = 6.0
    sunset_h: float = 18.0
    peak_low: float = 0.75
    peak_high: float = 1.1
    load_noise: float = 0.02
    ambient_mean: float = 28.0
    ambient_amp: float = 7.0
    ambient_peak_h: float = 15.0
    rise_rated: float = 45.0
    tau_oil_min: float = 266.8
    loss_ratio: float = 9800.0 / 842.0


def rise_target(K, rise_rated, loss_ratio):
    """Steady top-oil rise over ambient for load ``K`` (broadcasts)."""
    K = np.asarray(K, dtype=np.float64)
    return rise_rated * (K * K * loss_ratio + 1.0) / (loss_ratio + 1.0)


def _lag_rise(target: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """First-order lag along the last axis, exact for piecewise-constant input.

    ``target`` has shape (..., n); ``alpha = 1 - exp(-dt/tau)`` broadcasts
    against ``target[..., 0]``.  Starts in equilibrium with ``target[..., 0]``.
    """
    target = np.asarray(target, dtype=np.float64)
    out = np.empty_like(target)
    out[..., 0] = target[..., 0]
    for n in range(1, target.shape[-1]):
        prev = out[..., n - 1]
        out[..., n] = prev + alpha * (target[..., n - 1] - prev)
    return out


def synth_profile(
    days: float = 4,
    interval: float = 60.0,
    seed: int = 0,
    shape: SynthShape = SynthShape(),
) -> TimeSeriesProfile:
    """Synthetic profile of ``days`` days starting at midnight.

    There are ``days * 86400 / interval + 1`` samples, so both ends of the
    window are included.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    if not interval > 0:
        raise ValueError("interval must be > 0")
    n = int(round(days * 86400.0 / interval)) + 1
    rng = np.random.default_rng(seed)
    t = interval * np.arange(n)
    hour = (t / 3600.0) % 24.0
    day = (t // 86400.0).astype(np.int64)

    n_days = int(day[-1]) + 1
    peaks = rng.uniform(shape.peak_low, shape.peak_high, size=n_days)
    width = shape.sunset_h - shape.sunrise_h
    phase = (hour - shape.sunrise_h) / width
    daylight = (phase > 0) & (phase < 1)
    K = np.where(daylight, peaks[day] * np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)
    K = np.clip(K + shape.load_noise * rng.standard_normal(n), 0.0, None)

    theta_A = shape.ambient_mean + shape.ambient_amp * np.cos(
        2 * np.pi * (hour - shape.ambient_peak_h) / 24.0
    )
    target = rise_target(K, shape.rise_rated, shape.loss_ratio)
    alpha = 1.0 - math.exp(-interval / (60.0 * shape.tau_oil_min))
    theta_TO = theta_A + _lag_rise(target, alpha)
    return TimeSeriesProfile(t, K, theta_A, theta_TO)
