"""PINN with dropout after every hidden layer and Monte-Carlo dropout inference."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fem_oracle import GridSpec
from .network import TanhMLP
from .pinn import ConfigError, LossWeights, TrainConfig, TrainResult, TrainingPoints, train
from .predictive import PosteriorPredictive, evaluate_grid
from .thermal_model import DiffusionProblem


def check_rate(rate: float) -> float:
    rate = float(rate)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    return rate


def dropout_masks(rng: np.random.Generator, widths, n: int, rate: float):
    """Inverted-dropout masks, one (n, width) array per hidden layer.

    Kept units are scaled by 1/(1 - rate) so each mask has expectation one.
    Returns ``None`` when ``rate`` is zero.
    """
    if rate == 0.0:
        return None
    keep = 1.0 - rate
    return [(rng.random((n, w)) >= rate) / keep for w in widths]


@dataclass
class DropoutResult(TrainResult):
    rate: float = 0.0
    degenerate: bool = False


def train_dropout(
    net: TanhMLP,
    problem: DiffusionProblem,
    points: TrainingPoints,
    weights: LossWeights = LossWeights(),
    rate: float = 0.05,
    config: TrainConfig = TrainConfig(),
    seed=0,
) -> DropoutResult:
    """Train with fresh per-point masks at every step.

    The run is flagged ``degenerate`` when the logged loss never drops below
    its first record (typical for rates close to one).
    """
    rate = check_rate(rate)
    widths = net.shape.hidden
    sampler = None if rate == 0.0 else (lambda rng, n: dropout_masks(rng, widths, n, rate))
    res = train(net, problem, points, weights, config, seed, mask_sampler=sampler)
    totals = [r["total"] for r in res.history]
    degenerate = len(totals) > 1 and min(totals[1:]) >= totals[0]
    return DropoutResult(res.theta, res.history, seed, rate=rate, degenerate=degenerate)


def mc_fields(net: TanhMLP, theta, rate: float, grid: GridSpec, K: int, seed):
    """Yield ``K`` fields, each from one mask per layer shared by all points."""
    rate = check_rate(rate)
    rng = np.random.default_rng(seed)
    for _ in range(K):
        masks = dropout_masks(rng, net.shape.hidden, 1, rate)
        yield evaluate_grid(lambda x, t: net.forward(theta, x, t, masks), grid)


def mc_predict(
    net: TanhMLP,
    theta,
    rate: float,
    grid: GridSpec,
    K: int = 200,
    seed=0,
    keep_samples: bool = True,
) -> PosteriorPredictive:
    if K < 2:
        raise ValueError("K must be >= 2")
    fields = mc_fields(net, theta, rate, grid, K, seed)
    if keep_samples:
        return PosteriorPredictive.from_samples(grid, np.stack(list(fields)))
    return PosteriorPredictive.from_stream(grid, fields)


def deterministic_predict(net: TanhMLP, theta, grid: GridSpec) -> np.ndarray:
    """Dropout switched off."""
    return evaluate_grid(lambda x, t: net.forward(theta, x, t), grid)
