"""Physical description of the 1-D oil-temperature problem.

The oil temperature obeys

    k * d2T/dx2 + q(x, t) = rho * cp * dT/dt,   0 <= x <= H,
    q = P0 + K(t)^2 * mu - h * (T - T_amb(t)),

with Dirichlet data T(0, t) = T_amb(t) and T(H, t) = T_top(t).  Solvers work
on the nondimensional form obtained with x = H*xi, t = t0 + span*tau and
T = offset + scale*u:

    a * du/dtau = d2u/dxi2 + g(tau) - c * u

where a = H^2/(alpha*span), c = H^2*h/k and
g = H^2/(k*scale) * (P0 + K^2*mu - h*(offset - T_amb)).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class OutOfDomainError(ValueError):
    """Raised when a position or time lies outside the modelled domain."""


@dataclass(frozen=True)
class ThermalParams:
    """Lumped thermal constants of the tank.

    ``k`` is an effective conductivity: molecular conduction of mineral oil
    (about 0.12 W/m.K) cannot move the losses of a distribution transformer
    over a metre of oil, so the default lumps convective mixing into ``k``.
    ``P0`` and ``mu`` are the no-load and rated load losses of the 1100 kVA
    unit.  See :meth:`mineral_oil` for the literal material constants.
    """

    k: float = 300.0
    rho: float = 870.0
    cp: float = 1900.0
    h: float = 250.0
    H: float = 1.5
    P0: float = 842.0
    mu: float = 9800.0

    def __post_init__(self):
        for name in ("k", "rho", "cp", "h", "H", "P0", "mu"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"ThermalParams.{name} must be finite and > 0, got {v!r}")

    @property
    def alpha(self) -> float:
        """Thermal diffusivity k / (rho * cp) in m^2/s."""
        return self.k / (self.rho * self.cp)

    @classmethod
    def mineral_oil(cls, **overrides) -> "ThermalParams":
        """Molecular constants of mineral oil (stiff: thin boundary layers)."""
        base = dict(k=0.12, rho=870.0, cp=1900.0, h=250.0)
        base.update(overrides)
        return cls(**base)

    def load_losses(self, K):
        """Load losses K^2 * mu in W."""
        K = np.asarray(K, dtype=np.float64)
        return K * K * self.mu


@dataclass(frozen=True, eq=False)
class TimeSeriesProfile:
    """Uniformly sampled load factor, ambient and top-oil temperatures.

    Times are seconds; temperatures are degrees Celsius.
    """

    t: np.ndarray
    K: np.ndarray
    theta_A: np.ndarray
    theta_TO: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("t", "K", "theta_A", "theta_TO"):
            a = np.array(getattr(self, name), dtype=np.float64)
            if a.ndim != 1:
                raise ValueError(f"{name} must be 1-D")
            a.setflags(write=False)
            arrays[name] = a
            object.__setattr__(self, name, a)
        n = arrays["t"].size
        if n < 2:
            raise ValueError("a profile needs at least two samples")
        if any(a.size != n for a in arrays.values()):
            raise ValueError("t, K, theta_A and theta_TO must have equal lengths")
        if not all(np.all(np.isfinite(a)) for a in arrays.values()):
            raise ValueError("profile contains non-finite values")
        dt = np.diff(arrays["t"])
        if np.any(dt <= 0):
            raise ValueError("t must be strictly increasing")
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-9 * abs(dt[0])):
            raise ValueError("t must be uniformly sampled")
        if np.any(arrays["K"] < 0):
            raise ValueError("load factor K must be >= 0")

    def __len__(self):
        return self.t.size

    def __eq__(self, other):
        if not isinstance(other, TimeSeriesProfile):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("t", "K", "theta_A", "theta_TO")
        )

    @property
    def sample_interval(self) -> float:
        return float((self.t[-1] - self.t[0]) / (self.t.size - 1))

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def _interp(self, values, t):
        t = np.asarray(t, dtype=np.float64)
        tol = 1e-9 * max(1.0, abs(self.t_end))
        if np.any(t < self.t_start - tol) or np.any(t > self.t_end + tol) or not np.all(np.isfinite(t)):
            raise OutOfDomainError(
                f"time outside profile range [{self.t_start}, {self.t_end}]"
            )
        return np.interp(t, self.t, values)

    def load(self, t):
        return self._interp(self.K, t)

    def ambient(self, t):
        return self._interp(self.theta_A, t)

    def top_oil(self, t):
        return self._interp(self.theta_TO, t)


@dataclass(frozen=True)
class Normalization:
    """Affine maps between physical and unit-interval coordinates."""

    x_scale: float
    t_offset: float
    t_scale: float
    theta_offset: float
    theta_scale: float

    def __post_init__(self):
        for name in ("x_scale", "t_scale", "theta_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @classmethod
    def from_profile(cls, params: ThermalParams, profile: TimeSeriesProfile) -> "Normalization":
        """Unit domain in x and t; temperatures mapped by the profile's global
        min/max over ambient and top-oil series."""
        lo = float(min(profile.theta_A.min(), profile.theta_TO.min()))
        hi = float(max(profile.theta_A.max(), profile.theta_TO.max()))
        scale = hi - lo if hi > lo else 1.0
        return cls(
            x_scale=params.H,
            t_offset=profile.t_start,
            t_scale=profile.duration,
            theta_offset=lo,
            theta_scale=scale,
        )

    def x_norm(self, x):
        return np.asarray(x, dtype=np.float64) / self.x_scale

    def x_phys(self, xi):
        return np.asarray(xi, dtype=np.float64) * self.x_scale

    def t_norm(self, t):
        return (np.asarray(t, dtype=np.float64) - self.t_offset) / self.t_scale

    def t_phys(self, tau):
        return np.asarray(tau, dtype=np.float64) * self.t_scale + self.t_offset

    def theta_norm(self, theta):
        return (np.asarray(theta, dtype=np.float64) - self.theta_offset) / self.theta_scale

    def theta_phys(self, u):
        return np.asarray(u, dtype=np.float64) * self.theta_scale + self.theta_offset

    def coefficients(self, params: ThermalParams) -> tuple[float, float]:
        """Nondimensional (time coefficient a, reaction coefficient c)."""
        H2 = params.H ** 2
        return H2 / (params.alpha * self.t_scale), H2 * params.h / params.k

    def to_dict(self) -> dict:
        return {
            "x_scale": self.x_scale,
            "t_offset": self.t_offset,
            "t_scale": self.t_scale,
            "theta_offset": self.theta_offset,
            "theta_scale": self.theta_scale,
        }


def heat_source(params: ThermalParams, profile: TimeSeriesProfile, theta_O, x, t):
    """Volumetric heat rate P0 + K(t)^2 mu - h (theta_O - theta_A(t)).

    ``x`` only enters through ``theta_O``; it is checked against the tank
    height so callers cannot silently evaluate outside the domain.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0) or np.any(x > params.H):
        raise OutOfDomainError(f"position outside [0, {params.H}]")
    K = profile.load(t)
    return params.P0 + params.load_losses(K) - params.h * (np.asarray(theta_O) - profile.ambient(t))


def boundary_values(profile: TimeSeriesProfile, t):
    """(bottom, top) Dirichlet temperatures: ambient and top-oil."""
    return profile.ambient(t), profile.top_oil(t)


def initial_condition(profile: TimeSeriesProfile, x, H: float):
    """Linear ramp from theta_A(t0) at x=0 to theta_TO(t0) at x=H."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0) or np.any(x > H):
        raise OutOfDomainError(f"position outside [0, {H}]")
    lo, hi = profile.theta_A[0], profile.theta_TO[0]
    return lo + (hi - lo) * (x / H)


@dataclass
class DiffusionProblem:
    """Nondimensional problem  a u_tau = u_xixi + g(tau) - c u  on the unit square.

    All callables are vectorized over numpy arrays.  ``exact`` is set for
    manufactured problems.
    """

    time_coef: float
    reaction: float
    source: Callable[[np.ndarray], np.ndarray]
    left: Callable[[np.ndarray], np.ndarray]
    right: Callable[[np.ndarray], np.ndarray]
    initial: Callable[[np.ndarray], np.ndarray]
    exact: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "problem"
    meta: dict = field(default_factory=dict)

    def residual(self, u, u_t, u_xx, t):
        """PDE residual  u_xx + g(t) - c u - a u_t  (zero for exact solutions)."""
        return u_xx + self.source(t) - self.reaction * u - self.time_coef * u_t


def transformer_problem(
    params: ThermalParams,
    profile: TimeSeriesProfile,
    norm: Optional[Normalization] = None,
) -> DiffusionProblem:
    """Nondimensional oil-temperature problem driven by a measured profile."""
    if norm is None:
        norm = Normalization.from_profile(params, profile)
    a, c = norm.coefficients(params)
    gain = params.H ** 2 / (params.k * norm.theta_scale)

    def source(tau):
        t = norm.t_phys(tau)
        K = profile.load(t)
        return gain * (params.P0 + params.load_losses(K) - params.h * (norm.theta_offset - profile.ambient(t)))

    def left(tau):
        return norm.theta_norm(profile.ambient(norm.t_phys(tau)))

    def right(tau):
        return norm.theta_norm(profile.top_oil(norm.t_phys(tau)))

    def initial(xi):
        return norm.theta_norm(initial_condition(profile, norm.x_phys(xi), params.H))

    return DiffusionProblem(
        time_coef=a,
        reaction=c,
        source=source,
        left=left,
        right=right,
        initial=initial,
        name="transformer",
        meta={"normalization": norm, "params": params, "profile": profile},
    )


def manufactured_problem(diffusivity: float = 0.1) -> DiffusionProblem:
    """Source-free problem with exact solution sin(pi x) exp(-pi^2 D t)."""
    D = float(diffusivity)
    if not D > 0:
        raise ValueError("diffusivity must be > 0")

    def exact(xi, tau):
        return np.sin(np.pi * np.asarray(xi)) * np.exp(-np.pi ** 2 * D * np.asarray(tau))

    zero = lambda tau: np.zeros_like(np.asarray(tau, dtype=np.float64))  # noqa: E731
    return DiffusionProblem(
        time_coef=1.0 / D,
        reaction=0.0,
        source=zero,
        left=zero,
        right=zero,
        initial=lambda xi: np.sin(np.pi * np.asarray(xi, dtype=np.float64)),
        exact=exact,
        name="manufactured",
        meta={"diffusivity": D},
    )
