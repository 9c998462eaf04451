"""Deterministic physics-informed network: training points, composite loss
and an Adam training loop.

The loss is

    lambda_0 * L_0 + lambda_b * L_b + lambda_r * L_r

with mean squared misfits on initial-condition and boundary points and the
mean squared PDE residual on collocation points.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .adam import Adam, AdamConfig
from .network import TanhMLP
from .thermal_model import DiffusionProblem


class ConfigError(ValueError):
    pass


class TrainingDivergence(FloatingPointError):
    """Raised when a loss term stops being finite."""

    def __init__(self, epoch: int, term: str, breakdown: Optional[dict] = None):
        self.epoch = epoch
        self.term = term
        self.breakdown = breakdown or {}
        super().__init__(f"loss term {term!r} diverged at epoch {epoch}: {self.breakdown}")


@dataclass(frozen=True)
class LossWeights:
    lambda_0: float = 1.0
    lambda_b: float = 1.0
    lambda_r: float = 1e-6

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (np.isfinite(v) and v >= 0):
                raise ConfigError(f"{k} must be finite and >= 0, got {v!r}")


@dataclass(frozen=True, eq=False)
class TrainingPoints:
    """Initial (t=0), boundary (x in {0, 1}) and interior collocation points.

    ``r_target`` is the residual target, zero unless noise was injected.
    """

    x0: np.ndarray
    t0: np.ndarray
    u0: np.ndarray
    xb: np.ndarray
    tb: np.ndarray
    ub: np.ndarray
    xr: np.ndarray
    tr: np.ndarray
    r_target: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("x0", "t0", "u0", "xb", "tb", "ub", "xr", "tr"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64).ravel())
        if self.r_target is None:
            object.__setattr__(self, "r_target", np.zeros_like(self.xr))
        else:
            object.__setattr__(self, "r_target", np.asarray(self.r_target, dtype=np.float64).ravel())
        if not (self.x0.size == self.t0.size == self.u0.size):
            raise ConfigError("initial set arrays differ in length")
        if not (self.xb.size == self.tb.size == self.ub.size):
            raise ConfigError("boundary set arrays differ in length")
        if not (self.xr.size == self.tr.size == self.r_target.size):
            raise ConfigError("collocation arrays differ in length")
        if np.any(self.t0 != 0):
            raise ConfigError("initial points must have t = 0")
        if np.any((self.xb != 0) & (self.xb != 1)):
            raise ConfigError("boundary points must have x in {0, 1}")
        if self.xr.size and (
            np.any(self.xr <= 0) or np.any(self.xr >= 1) or np.any(self.tr <= 0) or np.any(self.tr >= 1)
        ):
            raise ConfigError("collocation points must be strictly interior")

    @property
    def n0(self) -> int:
        return self.x0.size

    @property
    def nb(self) -> int:
        return self.xb.size

    @property
    def nr(self) -> int:
        return self.xr.size

    def with_noise(self, sigma_i: float, sigma_r: float, seed) -> "TrainingPoints":
        """Copy with one-shot Gaussian noise on IC/BC targets (``sigma_i``)
        and on the residual target (``sigma_r``)."""
        rng = np.random.default_rng(seed)
        return TrainingPoints(
            self.x0, self.t0, self.u0 + sigma_i * rng.standard_normal(self.n0),
            self.xb, self.tb, self.ub + sigma_i * rng.standard_normal(self.nb),
            self.xr, self.tr, self.r_target + sigma_r * rng.standard_normal(self.nr),
        )


def sample_points(problem: DiffusionProblem, counts, seed) -> TrainingPoints:
    """Uniform random points.  Boundary points alternate between x=0 and x=1."""
    n0, nb, nr = (int(c) for c in counts)
    if min(n0, nb, nr) < 0:
        raise ConfigError("point counts must be >= 0")
    if n0 + nb + nr == 0:
        raise ConfigError("at least one training point is required")
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(0.0, 1.0, n0)
    t0 = np.zeros(n0)
    tb = rng.uniform(0.0, 1.0, nb)
    xb = (np.arange(nb) % 2).astype(np.float64)
    ub = np.where(xb == 0, problem.left(tb), problem.right(tb))
    # open interval: redraw the (measure-zero) exact zeros
    xr = 1.0 - rng.uniform(0.0, 1.0, nr)
    tr = 1.0 - rng.uniform(0.0, 1.0, nr)
    xr[xr >= 1.0] = 0.5
    tr[tr >= 1.0] = 0.5
    return TrainingPoints(x0, t0, problem.initial(x0), xb, tb, ub, xr, tr)


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings.

    One epoch is one pass over the union of initial and boundary points in
    mini-batches of ``batch_size``; each step also draws ``n_colloc``
    collocation points (with replacement) for the residual term.
    """

    epochs: int = 15000
    batch_size: Optional[int] = 16
    n_colloc: int = 256
    adam: AdamConfig = field(default_factory=AdamConfig)
    log_every: int = 100

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.n_colloc < 0:
            raise ConfigError("n_colloc must be >= 0")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")


@dataclass
class Batch:
    i0: np.ndarray
    ib: np.ndarray
    ir: np.ndarray


class BatchSchedule:
    """Per-epoch mini-batches that always mix initial and boundary points."""

    def __init__(self, points: TrainingPoints, batch_size: Optional[int], n_colloc: int, rng):
        self.points = points
        self.rng = rng
        n_data = points.n0 + points.nb
        if batch_size is None or n_data == 0:
            self.steps = 1
        else:
            self.steps = max(1, math.ceil(n_data / batch_size))
        self.n_colloc = min(n_colloc, points.nr) if points.nr else 0

    def epoch(self):
        p = self.points
        s0 = np.array_split(self.rng.permutation(p.n0), self.steps)
        sb = np.array_split(self.rng.permutation(p.nb), self.steps)
        for k in range(self.steps):
            if self.n_colloc == p.nr:
                ir = np.arange(p.nr)
            elif self.n_colloc:
                ir = self.rng.integers(0, p.nr, self.n_colloc)
            else:
                ir = np.empty(0, dtype=np.int64)
            yield Batch(s0[k], sb[k], ir)


@dataclass
class Terms:
    """Sums of squared misfits over a batch and the point counts."""

    sse0: float
    sseb: float
    sser: float
    n0: int
    nb: int
    nr: int


class PhysicsModel:
    """Couples a network with a problem and a fixed set of training points."""

    def __init__(self, net: TanhMLP, problem: DiffusionProblem, points: TrainingPoints):
        self.net = net
        self.problem = problem
        self.points = points
        self.g_r = np.asarray(np.broadcast_to(problem.source(points.tr), points.tr.shape), dtype=np.float64)
        self._a = float(problem.time_coef)
        self._c = float(problem.reaction)

    def residual_at(self, theta, x, t, masks=None):
        d = self.net.input_derivatives(theta, x, t, masks)
        return self.problem.residual(d.u, d.u_t, d.u_xx, np.asarray(t))

    def _residual(self, d, g):
        return d.u_xx + g - self._c * d.u - self._a * d.u_t

    def grad(self, theta, batch: Batch, w0: float, wb: float, wr: float, masks=None):
        """Gradient of ``w0*sse0 + wb*sseb + wr*sser`` over ``batch``.

        ``masks`` is ``None`` or a callable ``n -> per-layer masks`` used for
        both evaluations.
        """
        p = self.points
        grad = np.zeros_like(theta)
        sse0 = sseb = sser = 0.0
        nd = batch.i0.size + batch.ib.size
        if nd:
            x = np.concatenate([p.x0[batch.i0], p.xb[batch.ib]])
            t = np.concatenate([p.t0[batch.i0], p.tb[batch.ib]])
            y = np.concatenate([p.u0[batch.i0], p.ub[batch.ib]])
            m = masks(nd) if masks is not None else None
            out, cache = self.net.evaluate(theta, x, t, masks=m, with_derivs=False)
            e = out.u - y
            n0 = batch.i0.size
            sse0 = float(e[:n0] @ e[:n0])
            sseb = float(e[n0:] @ e[n0:])
            cot = np.empty(nd)
            cot[:n0] = 2.0 * w0 * e[:n0]
            cot[n0:] = 2.0 * wb * e[n0:]
            grad += self.net.vjp(theta, cache, cot)
        nr = batch.ir.size
        if nr and wr != 0.0:
            m = masks(nr) if masks is not None else None
            d, cache = self.net.evaluate(theta, p.xr[batch.ir], p.tr[batch.ir], masks=m, with_derivs=True)
            e = self._residual(d, self.g_r[batch.ir]) - p.r_target[batch.ir]
            sser = float(e @ e)
            ge = 2.0 * wr * e
            grad += self.net.vjp(theta, cache, -self._c * ge, -self._a * ge, None, ge)
        elif nr:
            m = masks(nr) if masks is not None else None
            d = self.net.input_derivatives(theta, p.xr[batch.ir], p.tr[batch.ir], m)
            e = self._residual(d, self.g_r[batch.ir]) - p.r_target[batch.ir]
            sser = float(e @ e)
        return Terms(sse0, sseb, sser, batch.i0.size, batch.ib.size, nr), grad

    def full_terms(self, theta, masks=None) -> Terms:
        """Squared-misfit sums over every training point."""
        p = self.points
        batch = Batch(np.arange(p.n0), np.arange(p.nb), np.arange(p.nr))
        terms, _ = self.grad(theta, batch, 0.0, 0.0, 0.0, masks)
        return terms


@dataclass(frozen=True)
class LossBreakdown:
    L0: float
    Lb: float
    Lr: float
    total: float


def _mean(s, n):
    return s / n if n else 0.0


def loss_terms(model: PhysicsModel, theta, weights: LossWeights) -> LossBreakdown:
    """Composite loss over the full point sets."""
    t = model.full_terms(theta)
    L0, Lb, Lr = _mean(t.sse0, t.n0), _mean(t.sseb, t.nb), _mean(t.sser, t.nr)
    return LossBreakdown(L0, Lb, Lr, weights.lambda_0 * L0 + weights.lambda_b * Lb + weights.lambda_r * Lr)


@dataclass
class TrainResult:
    theta: np.ndarray
    history: list
    seed: object = None

    def history_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.history)


def seed_streams(seed, n: int = 3):
    """Independent generators for initialisation, batching and dropout."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def _check_finite(epoch, rec):
    for k in ("L0", "Lb", "Lr", "total"):
        if not np.isfinite(rec[k]):
            raise TrainingDivergence(epoch, k, rec)


def train(
    net: TanhMLP,
    problem: DiffusionProblem,
    points: TrainingPoints,
    weights: LossWeights = LossWeights(),
    config: TrainConfig = TrainConfig(),
    seed=0,
    mask_sampler: Optional[Callable] = None,
    theta0: Optional[np.ndarray] = None,
    callback: Optional[Callable] = None,
) -> TrainResult:
    """Adam on the composite loss.

    ``mask_sampler(rng, n)`` returns per-layer dropout masks for ``n`` points
    (or ``None``); it draws from its own stream so that a sampler returning
    ``None`` leaves the run identical to plain training.
    """
    rng_init, rng_batch, rng_mask = seed_streams(seed)
    theta = net.init_params(rng_init) if theta0 is None else np.array(theta0, dtype=np.float64)
    model = PhysicsModel(net, problem, points)
    sched = BatchSchedule(points, config.batch_size, config.n_colloc, rng_batch)
    opt = Adam(theta.size, config.adam)
    masks = None if mask_sampler is None else (lambda n: mask_sampler(rng_mask, n))
    history = []
    acc = np.zeros(3)
    cnt = 0
    for epoch in range(1, config.epochs + 1):
        for batch in sched.epoch():
            w0 = weights.lambda_0 / batch.i0.size if batch.i0.size else 0.0
            wb = weights.lambda_b / batch.ib.size if batch.ib.size else 0.0
            wr = weights.lambda_r / batch.ir.size if batch.ir.size else 0.0
            terms, g = model.grad(theta, batch, w0, wb, wr, masks)
            step = np.array([_mean(terms.sse0, terms.n0), _mean(terms.sseb, terms.nb), _mean(terms.sser, terms.nr)])
            if not np.all(np.isfinite(step)) or not np.all(np.isfinite(g)):
                rec = dict(zip(("L0", "Lb", "Lr"), map(float, step)))
                rec["total"] = float("nan")
                bad = next((k for k in ("L0", "Lb", "Lr") if not np.isfinite(rec[k])), "gradient")
                raise TrainingDivergence(epoch, bad, rec)
            acc += step
            cnt += 1
            opt.step(theta, g)
        if epoch % config.log_every == 0 or epoch == config.epochs:
            L0, Lb, Lr = (acc / cnt).tolist()
            rec = {
                "epoch": epoch,
                "L0": L0,
                "Lb": Lb,
                "Lr": Lr,
                "total": weights.lambda_0 * L0 + weights.lambda_b * Lb + weights.lambda_r * Lr,
            }
            _check_finite(epoch, rec)
            history.append(rec)
            if callback is not None:
                callback(rec)
            acc[:] = 0.0
            cnt = 0
    return TrainResult(theta, history, seed)
