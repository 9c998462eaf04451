"""Hot-spot temperature and insulation ageing following the IEC 60076-7
loading guide (difference-equation form).

All temperatures here are degrees Celsius and all times are minutes.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .fem_oracle import GridSpec, write_grid_csv
from .pinn import ConfigError
from .predictive import RunningMoments
from .thermal_model import TimeSeriesProfile


@dataclass(frozen=True)
class IecParams:
    """Thermal constants of the 1100 kVA unit.

    ``y`` (winding exponent) is not a nameplate value; 1.3 is the ONAN
    figure of the loading guide.  Results that depend on it are sensitive to
    this choice.
    """

    delta_theta_HR: float = 15.1
    k21: float = 2.32
    k22: float = 2.05
    tau_w: float = 9.75
    tau_TO: float = 266.8
    y: float = 1.3

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"IecParams.{k} must be finite and > 0, got {v!r}")

    @property
    def max_dt(self) -> float:
        """Largest admissible Euler step in minutes."""
        return min(self.tau_w, self.tau_TO) / 2.0


def hst_initial(iec: IecParams, theta_TO_0: float, K_0: float) -> float:
    """Steady-state hot-spot temperature for load ``K_0``."""
    Ky = float(K_0) ** iec.y
    return theta_TO_0 + iec.k21 * iec.delta_theta_HR * Ky - (iec.k21 - 1.0) * iec.delta_theta_HR * Ky


def hst_rise_series(iec: IecParams, K_series, dt: float, initial: Optional[tuple] = None) -> np.ndarray:
    """Forward-Euler march of the two hot-spot rise components.

    ``initial`` is ``(rise1, rise2)``; by default both start in steady state
    with the first load sample.  Returns rise1 - rise2 per sample.
    """
    dt = float(dt)
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    if dt > iec.max_dt:
        raise ConfigError(
            f"time step {dt} min exceeds half the smaller time constant ({iec.max_dt} min)"
        )
    K = np.asarray(K_series, dtype=np.float64)
    if K.ndim != 1 or K.size == 0:
        raise ValueError("K_series must be a non-empty 1-D array")
    if np.any(K < 0):
        raise ValueError("load factor must be >= 0")
    Ky = K ** iec.y
    b1 = iec.k21 * iec.delta_theta_HR
    b2 = (iec.k21 - 1.0) * iec.delta_theta_HR
    u1 = dt / (iec.k22 * iec.tau_w)
    u2 = iec.k22 * dt / iec.tau_TO
    h1 = np.empty_like(Ky)
    h2 = np.empty_like(Ky)
    if initial is None:
        h1[0], h2[0] = b1 * Ky[0], b2 * Ky[0]
    else:
        h1[0], h2[0] = initial
    for n in range(1, Ky.size):
        h1[n] = h1[n - 1] + u1 * (b1 * Ky[n] - h1[n - 1])
        h2[n] = h2[n - 1] + u2 * (b2 * Ky[n] - h2[n - 1])
    return h1 - h2


def hst_rise_at(iec: IecParams, profile: TimeSeriesProfile, t_seconds) -> np.ndarray:
    """Hot-spot rise at arbitrary times of ``profile``.

    The march runs on the profile's sampling, sub-divided when that is
    coarser than the stability bound, and is then interpolated.
    """
    dt_min = profile.sample_interval / 60.0
    sub = max(1, math.ceil(dt_min / iec.max_dt - 1e-12))
    t_fine = np.linspace(profile.t_start, profile.t_end, sub * (len(profile) - 1) + 1)
    rise = hst_rise_series(iec, profile.load(t_fine), dt_min / sub)
    return np.interp(np.asarray(t_seconds, dtype=np.float64), t_fine, rise)


def winding_field(theta_O, delta_H) -> np.ndarray:
    """Winding temperature: oil field (nx, nt) plus the hot-spot rise (nt,)."""
    theta_O = np.asarray(theta_O, dtype=np.float64)
    delta_H = np.asarray(delta_H, dtype=np.float64)
    if theta_O.ndim != 2 or delta_H.shape != (theta_O.shape[1],):
        raise ValueError(
            f"rise series of length {delta_H.shape} does not match field time axis {theta_O.shape}"
        )
    return theta_O + delta_H[None, :]


def ageing_factor(theta_W):
    """Relative ageing rate 2^((theta - 98) / 6)."""
    return np.exp2((np.asarray(theta_W, dtype=np.float64) - 98.0) / 6.0)


def loss_of_life(V, dt: float) -> np.ndarray:
    """Cumulative equivalent minutes of life along the last axis."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    return np.cumsum(np.asarray(V, dtype=np.float64), axis=-1) * dt


def ageing_chain(theta_O_celsius, delta_H, dt: float):
    """(V, LOL) for one oil-temperature field in degrees Celsius."""
    V = ageing_factor(winding_field(theta_O_celsius, delta_H))
    return V, loss_of_life(V, dt)


@dataclass(eq=False)
class AgeingField:
    """Per-point ageing statistics on a grid.

    ``final_lol`` holds the per-sample loss of life at the last time, shape
    (S, nx).  Deterministic fields have ``n_samples == 1`` and zero std.
    """

    grid: GridSpec
    V_mean: np.ndarray
    V_std: np.ndarray
    LOL_mean: np.ndarray
    LOL_std: np.ndarray
    final_lol: np.ndarray
    n_samples: int = 1
    dt_min: float = 1.0

    @property
    def deterministic(self) -> bool:
        return self.n_samples == 1

    def summary(self) -> dict:
        """Worst-case (over position) loss of life at the final time."""
        last = self.LOL_mean[:, -1]
        i = int(np.argmax(last))
        return {
            "max_lol_min": float(last[i]),
            "max_lol_std_min": float(self.LOL_std[i, -1]),
            "max_lol_x": float(self.grid.x[i]),
            "max_V": float(self.V_mean.max()),
            "n_samples": self.n_samples,
        }

    def to_csv(self, directory) -> dict:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        items = [("V_mean", self.V_mean), ("LOL_mean", self.LOL_mean)]
        if not self.deterministic:
            items += [("V_std", self.V_std), ("LOL_std", self.LOL_std)]
        paths = {}
        for name, arr in items:
            p = directory / f"{name}.csv"
            write_grid_csv(p, self.grid, arr)
            paths[name] = p
        return paths


def deterministic_ageing(grid: GridSpec, theta_O_celsius, delta_H, dt: float) -> AgeingField:
    V, L = ageing_chain(theta_O_celsius, delta_H, dt)
    z = np.zeros_like(V)
    return AgeingField(grid, V, z, L, z.copy(), L[:, -1][None, :].copy(), 1, dt)


def probabilistic_ageing(grid: GridSpec, fields_celsius: Iterable[np.ndarray], delta_H, dt: float) -> AgeingField:
    """Apply the chain to every sample field, then summarise per point."""
    mv, ml = RunningMoments(), RunningMoments()
    finals = []
    for f in fields_celsius:
        V, L = ageing_chain(f, delta_H, dt)
        mv.add(V)
        ml.add(L)
        finals.append(L[:, -1].copy())
    if mv.n == 0:
        raise ValueError("no sample fields")
    return AgeingField(grid, mv.mean, mv.std, ml.mean, ml.std, np.array(finals), mv.n, dt)


def lol_error(model: AgeingField, reference: AgeingField) -> dict:
    """Worst-case loss-of-life error against a reference chain.

    The worst case is the largest absolute error over the whole (x, t)
    field, quoted in minutes and as a percentage of the largest reference
    loss of life.  ``max_pointwise_rel_error`` is the largest ratio at the
    final time, which is dominated by points with almost no ageing.
    """
    m, r = model.LOL_mean, reference.LOL_mean
    if m.shape != r.shape:
        raise ValueError(f"grid mismatch: {m.shape} vs {r.shape}")
    abs_err = np.abs(m - r)
    i, n = np.unravel_index(int(np.argmax(abs_err)), abs_err.shape)
    worst = float(abs_err[i, n])
    scale = float(r.max())
    rel = worst / scale if scale > 0 else (0.0 if worst == 0 else math.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        final = np.where(r[:, -1] > 0, abs_err[:, -1] / r[:, -1], 0.0)
    return {
        "worst_rel_error": float(rel),
        "worst_rel_error_pct": float(100.0 * rel),
        "worst_abs_error_min": worst,
        "reference_max_lol_min": scale,
        "x_at_worst": float(model.grid.x[i]),
        "t_index_at_worst": int(n),
        "model_lol_at_worst": float(m[i, n]),
        "reference_lol_at_worst": float(r[i, n]),
        "max_pointwise_rel_error": float(final.max()),
    }
