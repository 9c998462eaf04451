"""Bayesian PINN trained by variational inference (Bayes by backprop).

The likelihood treats initial data, boundary data and PDE residuals as
independent Gaussian observations with standard deviations ``sigma_0``,
``sigma_bc`` and ``sigma_f``; each log-likelihood term is multiplied by its
loss weight.  One weight sample is drawn per optimisation step and the
mini-batch likelihood is rescaled to the full data size.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np
from scipy.special import expit

from .adam import Adam
from .bayes import (
    LOG_2PI,
    Prior,
    VariationalParams,
    log_prior,
    log_variational,
    sample_weights,
)
from .fem_oracle import GridSpec
from .network import TanhMLP
from .pinn import (
    Batch,
    BatchSchedule,
    ConfigError,
    LossWeights,
    PhysicsModel,
    TrainConfig,
    TrainingDivergence,
    TrainingPoints,
    seed_streams,
)
from .predictive import PosteriorPredictive, evaluate_grid
from .thermal_model import DiffusionProblem


@dataclass(frozen=True)
class LikelihoodNoise:
    sigma_0: float = 0.01
    sigma_bc: float = 0.01
    sigma_f: float = 0.01

    def __post_init__(self):
        for k in ("sigma_0", "sigma_bc", "sigma_f"):
            v = getattr(self, k)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{k} must be finite and > 0, got {v!r}")


def _nll(sse, n, sigma, scale=1.0):
    """Negative Gaussian log-likelihood of ``n`` residuals with sum of squares
    ``sse`` (scaled by ``scale`` to stand for a larger data set)."""
    return scale * sse / (2.0 * sigma * sigma) + n * (math.log(sigma) + 0.5 * LOG_2PI)


def likelihood_terms(model: PhysicsModel, theta, noise: LikelihoodNoise, weights: LossWeights) -> dict:
    """Weighted negative log-likelihood of each data set on all points."""
    t = model.full_terms(theta)
    return {
        "nll_0": weights.lambda_0 * _nll(t.sse0, t.n0, noise.sigma_0),
        "nll_b": weights.lambda_b * _nll(t.sseb, t.nb, noise.sigma_bc),
        "nll_r": weights.lambda_r * _nll(t.sser, t.nr, noise.sigma_f),
    }


def bpinn_log_likelihood(model: PhysicsModel, theta, noise: LikelihoodNoise, weights: LossWeights) -> float:
    """Weighted sum of the three Gaussian log-likelihoods."""
    return -sum(likelihood_terms(model, theta, noise, weights).values())


def elbo_terms(model: PhysicsModel, vp: VariationalParams, prior: Prior, noise, weights, eps) -> dict:
    """Single-sample loss on all points with a replayed ``eps``."""
    theta, _ = sample_weights(vp, eps=eps)
    out = {"log_q": log_variational(vp, theta), "neg_log_prior": -log_prior(prior, theta)}
    out.update(likelihood_terms(model, theta, noise, weights))
    out["loss"] = out["log_q"] + out["neg_log_prior"] + out["nll_0"] + out["nll_b"] + out["nll_r"]
    return out


@dataclass
class VIResult:
    vp: VariationalParams
    history: list
    prior: Prior
    seed: object = None

    def history_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.history)


_TERMS = ("log_q", "neg_log_prior", "nll_0", "nll_b", "nll_r", "loss")


def batch_elbo_gradient(
    model: PhysicsModel,
    vp: VariationalParams,
    prior: Prior,
    noise: LikelihoodNoise,
    weights: LossWeights,
    eps: np.ndarray,
    batch: Optional[Batch] = None,
    epoch: int = 0,
):
    """Single-sample loss terms and gradient w.r.t. (mu, rho) for a replayed ``eps``.

    Mini-batch sums are rescaled to the full point counts; with ``batch=None``
    every point is used and the loss equals :func:`elbo_terms`.
    """
    p = model.points
    if batch is None:
        batch = Batch(np.arange(p.n0), np.arange(p.nb), np.arange(p.nr))
    sigma = np.logaddexp(0.0, vp.rho)
    theta = vp.mu + sigma * eps
    s0 = p.n0 / batch.i0.size if batch.i0.size else 0.0
    sb = p.nb / batch.ib.size if batch.ib.size else 0.0
    sr = p.nr / batch.ir.size if batch.ir.size else 0.0
    w0 = weights.lambda_0 * s0 / (2 * noise.sigma_0 ** 2)
    wb = weights.lambda_b * sb / (2 * noise.sigma_bc ** 2)
    wr = weights.lambda_r * sr / (2 * noise.sigma_f ** 2)
    terms, g_nll = model.grad(theta, batch, w0, wb, wr)
    rec = {
        "log_q": float(np.sum(-0.5 * LOG_2PI - np.log(sigma) - 0.5 * eps * eps)),
        "neg_log_prior": -log_prior(prior, theta),
        "nll_0": weights.lambda_0 * _nll(terms.sse0, p.n0, noise.sigma_0, s0),
        "nll_b": weights.lambda_b * _nll(terms.sseb, p.nb, noise.sigma_bc, sb),
        "nll_r": weights.lambda_r * _nll(terms.sser, p.nr, noise.sigma_f, sr),
    }
    rec["loss"] = rec["log_q"] + rec["neg_log_prior"] + rec["nll_0"] + rec["nll_b"] + rec["nll_r"]
    if not math.isfinite(rec["loss"]) or not np.all(np.isfinite(g_nll)):
        bad = next((k for k in _TERMS if not math.isfinite(rec[k])), "gradient")
        raise TrainingDivergence(epoch, bad, rec)
    g_theta = g_nll - prior.grad(theta)
    g_rho = (g_theta * eps - 1.0 / sigma) * expit(vp.rho)
    return rec, g_theta, g_rho


def train_vi(
    net: TanhMLP,
    problem: DiffusionProblem,
    points: TrainingPoints,
    prior: Prior,
    noise: LikelihoodNoise = LikelihoodNoise(),
    weights: LossWeights = LossWeights(),
    config: TrainConfig = TrainConfig(),
    seed=0,
    sigma0: float = 0.05,
    vp0: Optional[VariationalParams] = None,
    callback: Optional[Callable] = None,
) -> VIResult:
    """Bayes-by-backprop on the physics-informed likelihood."""
    rng_init, rng_batch, rng_eps = seed_streams(seed)
    vp = VariationalParams.init(net.init_params(rng_init), sigma0) if vp0 is None else vp0.copy()
    model = PhysicsModel(net, problem, points)
    sched = BatchSchedule(points, config.batch_size, config.n_colloc, rng_batch)
    n = vp.size
    phi = np.concatenate([vp.mu, vp.rho])
    opt = Adam(2 * n, config.adam)
    grad = np.empty(2 * n)
    history = []
    acc = dict.fromkeys(_TERMS, 0.0)
    cnt = 0
    for epoch in range(1, config.epochs + 1):
        for batch in sched.epoch():
            eps = rng_eps.standard_normal(n)
            rec, g_mu, g_rho = batch_elbo_gradient(
                model, VariationalParams(phi[:n], phi[n:]), prior, noise, weights, eps, batch, epoch
            )
            grad[:n] = g_mu
            grad[n:] = g_rho
            opt.step(phi, grad)
            for k in _TERMS:
                acc[k] += rec[k]
            cnt += 1
        if epoch % config.log_every == 0 or epoch == config.epochs:
            out = {"epoch": epoch}
            out.update({k: acc[k] / cnt for k in _TERMS})
            history.append(out)
            if callback is not None:
                callback(out)
            acc = dict.fromkeys(_TERMS, 0.0)
            cnt = 0
    return VIResult(VariationalParams(phi[:n].copy(), phi[n:].copy()), history, prior, seed)


def sample_fields(net: TanhMLP, vp: VariationalParams, grid: GridSpec, S: int, seed) -> Iterator[np.ndarray]:
    """Yield ``S`` network fields, each with an independent weight draw."""
    rng = np.random.default_rng(seed)
    for _ in range(S):
        theta, _ = sample_weights(vp, rng)
        yield evaluate_grid(lambda x, t: net.forward(theta, x, t), grid)


def posterior_predict(
    net: TanhMLP,
    vp: VariationalParams,
    grid: GridSpec,
    S: int = 200,
    seed=0,
    keep_samples: bool = True,
) -> PosteriorPredictive:
    if S < 2:
        raise ValueError("S must be >= 2")
    fields = sample_fields(net, vp, grid, S, seed)
    if keep_samples:
        return PosteriorPredictive.from_samples(grid, np.stack(list(fields)))
    return PosteriorPredictive.from_stream(grid, fields)
