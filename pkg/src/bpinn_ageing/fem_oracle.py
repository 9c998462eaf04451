"""Crank-Nicolson reference solver for the nondimensional diffusion problem.

Second-order central differences in space, trapezoidal rule in time with the
reaction term treated implicitly and the source sampled at the half step.
Each step is one tridiagonal solve.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .thermal_model import (
    DiffusionProblem,
    Normalization,
    ThermalParams,
    TimeSeriesProfile,
    manufactured_problem,
    transformer_problem,
)


class DivergenceError(FloatingPointError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite values at time step {step}")


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, errors):
        self.errors = list(errors)
        super().__init__(f"{message}; per-grid errors: {self.errors}")


@dataclass(frozen=True)
class GridSpec:
    """Regular (nx x nt) lattice on the unit square."""

    nx: int = 81
    nt: int = 5761

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.nt) != self.nt:
            raise ValueError("grid sizes must be integers")
        if self.nx < 3:
            raise ValueError(f"nx must be >= 3, got {self.nx}")
        if self.nt < 2:
            raise ValueError(f"nt must be >= 2, got {self.nt}")

    @property
    def dx(self) -> float:
        return 1.0 / (self.nx - 1)

    @property
    def dt(self) -> float:
        return 1.0 / (self.nt - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nt)

    @property
    def size(self) -> int:
        return self.nx * self.nt

    def mesh(self):
        """Flattened (x, t) coordinates in row-major (x, t) order."""
        X, T = np.meshgrid(self.x, self.t, indexing="ij")
        return X.ravel(), T.ravel()

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``"81x5761"``."""
        try:
            nx, nt = (int(p) for p in text.lower().split("x"))
        except ValueError as exc:
            raise ValueError(f"grid must look like NXxNT, got {text!r}") from exc
        return cls(nx, nt)

    def __str__(self):
        return f"{self.nx}x{self.nt}"


@dataclass(eq=False)
class TemperatureField:
    """Values on a :class:`GridSpec`, shape (nx, nt).

    ``units`` is ``"normalized"`` or ``"celsius"``.  When ``norm`` is set the
    field can be converted between the two.
    """

    grid: GridSpec
    values: np.ndarray
    units: str = "normalized"
    norm: Optional[Normalization] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.nx, self.grid.nt):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid}"
            )
        if self.units not in ("normalized", "celsius"):
            raise ValueError(f"unknown units {self.units!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("temperature field contains non-finite values")

    def to_celsius(self) -> "TemperatureField":
        if self.units == "celsius":
            return self
        if self.norm is None:
            raise ValueError("no normalization attached to the field")
        return TemperatureField(self.grid, self.norm.theta_phys(self.values), "celsius", self.norm)

    def to_normalized(self) -> "TemperatureField":
        if self.units == "normalized":
            return self
        if self.norm is None:
            raise ValueError("no normalization attached to the field")
        return TemperatureField(self.grid, self.norm.theta_norm(self.values), "normalized", self.norm)

    def to_csv(self, path) -> None:
        write_grid_csv(path, self.grid, self.values)

    @classmethod
    def from_csv(cls, path, units: str = "normalized", norm=None) -> "TemperatureField":
        grid, values = read_grid_csv(path)
        return cls(grid, values, units, norm)


def write_grid_csv(path, grid: GridSpec, values: np.ndarray) -> None:
    """Header row of times, first column of positions, 17 significant digits."""
    values = np.asarray(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x"] + [repr(float(t)) for t in grid.t])
        for i, x in enumerate(grid.x):
            w.writerow([repr(float(x))] + [repr(float(v)) for v in values[i]])


def read_grid_csv(path):
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: grid CSV needs a header and at least one row")
    t = np.array([float(v) for v in rows[0][1:]])
    body = rows[1:]
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric cell") from exc
    grid = GridSpec(len(body), t.size)
    if not (np.allclose(data[:, 0], grid.x) and np.allclose(t, grid.t)):
        raise ValueError(f"{path}: coordinates are not a regular unit grid")
    return grid, data[:, 1:]


def solve_problem(problem: DiffusionProblem, grid: GridSpec) -> np.ndarray:
    """March ``problem`` across ``grid``; returns an (nx, nt) array."""
    a, c = float(problem.time_coef), float(problem.reaction)
    if not (a > 0 and c >= 0):
        raise ValueError("need time coefficient > 0 and reaction >= 0")
    nx, nt = grid.nx, grid.nt
    dx2 = grid.dx ** 2
    dt = grid.dt
    t = grid.t
    x = grid.x

    u = np.empty((nx, nt))
    u[:, 0] = problem.initial(x)
    left = np.broadcast_to(problem.left(t), (nt,))
    right = np.broadcast_to(problem.right(t), (nt,))
    u[0, :] = left
    u[-1, :] = right
    # corners belong to the boundary series
    src = np.broadcast_to(problem.source(0.5 * (t[:-1] + t[1:])), (nt - 1,))

    m = nx - 2
    r = 0.5 / dx2
    diag_l = a / dt + 0.5 * c + 2 * r
    diag_r = a / dt - 0.5 * c - 2 * r
    ab = np.zeros((3, m))
    ab[0, 1:] = -r
    ab[1, :] = diag_l
    ab[2, :-1] = -r

    for n in range(nt - 1):
        un = u[:, n]
        rhs = diag_r * un[1:-1] + r * (un[:-2] + un[2:]) + src[n]
        rhs[0] += r * u[0, n + 1]
        rhs[-1] += r * u[-1, n + 1]
        nxt = solve_banded((1, 1), ab, rhs, overwrite_b=True, check_finite=False)
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError(n + 1)
        u[1:-1, n + 1] = nxt
    return u


def solve(
    params: ThermalParams,
    profile: TimeSeriesProfile,
    grid: GridSpec = GridSpec(),
    norm: Optional[Normalization] = None,
) -> TemperatureField:
    """Normalized oil-temperature field driven by ``profile``."""
    if norm is None:
        norm = Normalization.from_profile(params, profile)
    problem = transformer_problem(params, profile, norm)
    return TemperatureField(grid, solve_problem(problem, grid), "normalized", norm)


@dataclass(frozen=True)
class ConvergenceResult:
    order: float
    errors: tuple
    grids: tuple
    saturated: bool = False


def convergence_order(
    grids: Sequence[GridSpec],
    problem: Optional[DiffusionProblem] = None,
    floor: float = 1e-12,
) -> ConvergenceResult:
    """Observed spatial order from L-infinity errors against the exact solution.

    The order is the least-squares slope of log(error) against log(dx).
    """
    if problem is None:
        problem = manufactured_problem()
    if problem.exact is None:
        raise ValueError("convergence_order needs a problem with an exact solution")
    grids = list(grids)
    if len(grids) < 3:
        raise ValueError("need at least three grids")
    nxs = [g.nx for g in grids]
    if len(set(nxs)) != len(nxs) or nxs != sorted(nxs):
        raise ValueError(f"grids must be distinct and refined in order, got nx={nxs}")
    for coarse, fine in zip(nxs, nxs[1:]):
        if (fine - 1) % (coarse - 1):
            raise ValueError(f"grids are not nested: nx={coarse} -> {fine}")

    errors = []
    for g in grids:
        u = solve_problem(problem, g)
        X, T = np.meshgrid(g.x, g.t, indexing="ij")
        errors.append(float(np.max(np.abs(u - problem.exact(X, T)))))

    if all(e < floor for e in errors):
        return ConvergenceResult(float("nan"), tuple(errors), tuple(grids), saturated=True)
    if any(e2 >= e1 for e1, e2 in zip(errors, errors[1:])):
        raise ConvergenceError("error does not decrease under refinement", errors)
    dx = np.array([g.dx for g in grids])
    order = float(np.polyfit(np.log(dx), np.log(errors), 1)[0])
    return ConvergenceResult(order, tuple(errors), tuple(grids))
