"""End-to-end wiring shared by the command line and the acceptance suite."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from .ageing import AgeingField, deterministic_ageing, hst_rise_at, probabilistic_ageing
from .bpinn import VIResult, sample_fields, train_vi
from .config import RunConfig
from .data_io import ProfileSchema, load_profile, synth_profile
from .dropout import DropoutResult, mc_fields, train_dropout
from .fem_oracle import GridSpec, TemperatureField, solve
from .metrics import score
from .network import TanhMLP
from .pinn import TrainResult, TrainingPoints, sample_points, train
from .predictive import PosteriorPredictive, evaluate_grid
from .thermal_model import DiffusionProblem, Normalization, TimeSeriesProfile, transformer_problem

MODELS = ("pinn", "dropout", "bpinn")


def derive_seed(seed: int, *tags: int) -> np.random.SeedSequence:
    """Independent stream for a (seed, purpose) pair."""
    return np.random.SeedSequence([int(seed), *map(int, tags)])


def make_profile(cfg: RunConfig) -> TimeSeriesProfile:
    p = cfg.profile
    if p.source == "synthetic":
        return synth_profile(p.days, p.interval, p.seed)
    schema = ProfileSchema(p.t_column, p.load_column, p.ambient_column, p.top_oil_column, p.interval)
    return load_profile(p.source, schema)


@dataclass
class Experiment:
    cfg: RunConfig
    profile: TimeSeriesProfile
    norm: Normalization
    problem: DiffusionProblem

    @classmethod
    def from_config(cls, cfg: RunConfig, profile: Optional[TimeSeriesProfile] = None) -> "Experiment":
        profile = make_profile(cfg) if profile is None else profile
        norm = Normalization.from_profile(cfg.thermal, profile)
        return cls(cfg, profile, norm, transformer_problem(cfg.thermal, profile, norm))

    def fem(self, grid: Optional[GridSpec] = None) -> TemperatureField:
        return solve(self.cfg.thermal, self.profile, grid or self.cfg.grid_spec(), self.norm)

    def points(self, seed: int) -> TrainingPoints:
        pts = sample_points(self.problem, self.cfg.point_counts(), derive_seed(seed, 1))
        n = self.cfg.noise
        if n.sigma_i > 0 or n.sigma_r > 0:
            pts = pts.with_noise(n.sigma_i, n.sigma_r, derive_seed(seed, 2))
        return pts

    def network(self, model: str) -> TanhMLP:
        hidden = self.cfg.dropout.hidden if model == "dropout" else self.cfg.training.hidden
        return TanhMLP(hidden)

    def dt_minutes(self, grid: GridSpec) -> float:
        return self.norm.t_scale * grid.dt / 60.0

    def hst_rise(self, grid: GridSpec) -> np.ndarray:
        return hst_rise_at(self.cfg.iec, self.profile, self.norm.t_phys(grid.t))


Trained = Union[TrainResult, DropoutResult, VIResult]


@dataclass
class ModelRun:
    model: str
    net: TanhMLP
    result: Trained
    seed: int
    train_seconds: float = 0.0


def train_model(exp: Experiment, model: str, seed: int, points: Optional[TrainingPoints] = None, callback=None) -> ModelRun:
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    cfg = exp.cfg
    pts = exp.points(seed) if points is None else points
    net = exp.network(model)
    tc = cfg.train_config()
    w = cfg.loss_weights()
    run_seed = derive_seed(seed, 3)
    t0 = time.perf_counter()
    if model == "pinn":
        res = train(net, exp.problem, pts, w, tc, run_seed, callback=callback)
    elif model == "dropout":
        res = train_dropout(net, exp.problem, pts, w, cfg.dropout.rate, tc, run_seed)
    else:
        res = train_vi(
            net, exp.problem, pts, cfg.prior(), cfg.likelihood_noise(), w, tc, run_seed,
            sigma0=cfg.bpinn.sigma_init, callback=callback,
        )
    return ModelRun(model, net, res, seed, time.perf_counter() - t0)


def sample_stream(run: ModelRun, grid: GridSpec, seed: int, n: Optional[int] = None) -> Iterable[np.ndarray]:
    """Normalized sample fields of a trained model (one field for ``pinn``)."""
    cfg_seed = derive_seed(seed, 4)
    if run.model == "pinn":
        theta = run.result.theta
        return iter([evaluate_grid(lambda x, t: run.net.forward(theta, x, t), grid)])
    if run.model == "dropout":
        return mc_fields(run.net, run.result.theta, run.result.rate, grid, n or 200, cfg_seed)
    return sample_fields(run.net, run.result.vp, grid, n or 200, cfg_seed)


def n_samples(cfg: RunConfig, model: str) -> int:
    return {"pinn": 1, "dropout": cfg.dropout.passes, "bpinn": cfg.bpinn.samples}[model]


def predict(exp: Experiment, run: ModelRun, grid: GridSpec, seed: int, keep_samples: bool = True) -> PosteriorPredictive:
    fields = sample_stream(run, grid, seed, n_samples(exp.cfg, run.model))
    if run.model == "pinn":
        f = next(iter(fields))
        return PosteriorPredictive(grid, f, np.zeros_like(f), 1, f[None] if keep_samples else None)
    if keep_samples:
        return PosteriorPredictive.from_samples(grid, np.stack(list(fields)))
    return PosteriorPredictive.from_stream(grid, fields)


def model_ageing(exp: Experiment, run: ModelRun, grid: GridSpec, seed: int) -> AgeingField:
    """Per-sample ageing chain of a trained model."""
    rise = exp.hst_rise(grid)
    dt = exp.dt_minutes(grid)
    fields = (exp.norm.theta_phys(f) for f in sample_stream(run, grid, seed, n_samples(exp.cfg, run.model)))
    if run.model == "pinn":
        return deterministic_ageing(grid, next(fields), rise, dt)
    return probabilistic_ageing(grid, fields, rise, dt)


def fem_ageing(exp: Experiment, field: TemperatureField) -> AgeingField:
    grid = field.grid
    return deterministic_ageing(grid, field.to_celsius().values, exp.hst_rise(grid), exp.dt_minutes(grid))


def evaluate_run(exp: Experiment, run: ModelRun, reference: TemperatureField, seed: int) -> dict:
    pred = predict(exp, run, reference.grid, seed)
    if pred.samples is None or pred.n_samples < 2:
        raise ValueError(f"{run.model} has no predictive distribution to score")
    return score(pred, reference.values)
