"""Run configuration: one YAML file with a section per component.

Unknown keys are rejected so typos do not silently fall back to defaults.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .adam import AdamConfig
from .ageing import IecParams
from .bayes import prior_from_dict
from .bpinn import LikelihoodNoise
from .fem_oracle import GridSpec
from .pinn import ConfigError, LossWeights, TrainConfig
from .thermal_model import ThermalParams


@dataclass
class ProfileSection:
    """``source`` is ``"synthetic"`` or a CSV path."""

    source: str = "synthetic"
    days: float = 4
    interval: float = 60.0
    seed: int = 0
    t_column: str = "t_s"
    load_column: str = "load_pu"
    ambient_column: str = "theta_a_c"
    top_oil_column: str = "theta_to_c"


@dataclass
class GridSection:
    nx: int = 81
    nt: int = 5761


@dataclass
class TrainingSection:
    hidden: list = field(default_factory=lambda: [50, 50])
    epochs: int = 15000
    batch_size: Optional[int] = 16
    n_colloc: int = 256
    lr: float = 0.01
    log_every: int = 100
    n0: int = 100
    nb: int = 11520
    nr: int = 10000
    lambda_0: float = 1.0
    lambda_b: float = 1.0
    lambda_r: float = 1e-6


@dataclass
class BpinnSection:
    prior: dict = field(default_factory=lambda: {"kind": "laplace", "lam": 1.0})
    sigma_0: float = 0.01
    sigma_bc: float = 0.01
    sigma_f: float = 0.01
    sigma_init: float = 0.05
    samples: int = 200


@dataclass
class DropoutSection:
    hidden: list = field(default_factory=lambda: [20, 20, 20])
    rate: float = 0.05
    passes: int = 200


@dataclass
class NoiseSection:
    """One-shot noise injected into the training targets."""

    sigma_i: float = 0.0
    sigma_r: float = 0.0


@dataclass
class SweepSection:
    axis: str = "prior"
    values: list = field(default_factory=lambda: ["gaussian", "spike_slab", "laplace"])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    model: str = "bpinn"
    workers: int = 1
    eval_nt: int = 1441


@dataclass
class BenchSection:
    repeats: int = 3
    eval_nx: int = 81
    eval_nt: int = 5760


@dataclass
class RunConfig:
    thermal: ThermalParams = field(default_factory=ThermalParams)
    profile: ProfileSection = field(default_factory=ProfileSection)
    grid: GridSection = field(default_factory=GridSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    bpinn: BpinnSection = field(default_factory=BpinnSection)
    dropout: DropoutSection = field(default_factory=DropoutSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    iec: IecParams = field(default_factory=IecParams)
    sweep: SweepSection = field(default_factory=SweepSection)
    bench: BenchSection = field(default_factory=BenchSection)

    # -- typed views ---------------------------------------------------------

    def grid_spec(self) -> GridSpec:
        return GridSpec(self.grid.nx, self.grid.nt)

    def loss_weights(self) -> LossWeights:
        t = self.training
        return LossWeights(t.lambda_0, t.lambda_b, t.lambda_r)

    def train_config(self) -> TrainConfig:
        t = self.training
        return TrainConfig(t.epochs, t.batch_size, t.n_colloc, AdamConfig(lr=t.lr), t.log_every)

    def likelihood_noise(self) -> LikelihoodNoise:
        b = self.bpinn
        return LikelihoodNoise(b.sigma_0, b.sigma_bc, b.sigma_f)

    def prior(self):
        return prior_from_dict(self.bpinn.prior)

    def point_counts(self) -> tuple:
        t = self.training
        return (t.n0, t.nb, t.nr)

    # -- (de)serialisation --------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "RunConfig":
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        kwargs = {}
        for f in dataclasses.fields(cls):
            sect = data.get(f.name)
            if sect is None:
                continue
            kwargs[f.name] = _build(f.default_factory, sect, f.name)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        return cls.from_dict(data)

    def with_overrides(self, assignments) -> "RunConfig":
        """Apply ``section.key=value`` strings (values parsed as YAML)."""
        data = copy.deepcopy(self.to_dict())
        for a in assignments:
            if "=" not in a:
                raise ConfigError(f"override {a!r} must look like section.key=value")
            key, raw = a.split("=", 1)
            parts = key.strip().split(".")
            if len(parts) != 2:
                raise ConfigError(f"override key {key!r} must be section.key")
            sect, name = parts
            if sect not in data or name not in data[sect]:
                raise ConfigError(f"unknown config key {key!r}")
            data[sect][name] = yaml.safe_load(raw)
        return RunConfig.from_dict(data)

    def validate(self) -> None:
        """Construct every typed view once so bad values fail early."""
        try:
            self.grid_spec()
            self.loss_weights()
            self.train_config()
            self.likelihood_noise()
            self.prior()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.bpinn.samples < 2 or self.dropout.passes < 2:
            raise ConfigError("posterior sample counts must be >= 2")
        if not 0 <= self.dropout.rate < 1:
            raise ConfigError("dropout.rate must lie in [0, 1)")
        if self.noise.sigma_i < 0 or self.noise.sigma_r < 0:
            raise ConfigError("injected noise levels must be >= 0")


def _build(factory, values, name):
    proto = factory()
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(proto)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    values = {k: _coerce(getattr(proto, k), v, f"{name}.{k}") for k, v in values.items()}
    try:
        return dataclasses.replace(proto, **values)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def _coerce(default, value, key):
    # YAML 1.1 reads exponent literals without a dot ("1e-3") as strings
    if isinstance(value, str) and isinstance(default, (int, float)) and not isinstance(default, bool):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    return value


def desk_scale() -> RunConfig:
    """Settings for one CPU core: one optimizer step per epoch.

    The whole IC and BC set forms a single batch, the residual weight suits
    the normalized O(1) residual, the learning rate is lowered to keep the
    full-batch steps stable, and the initial posterior scale is small.  A
    15000-epoch B-PINN run takes about a minute and a half.
    """
    return RunConfig.from_dict(
        {
            "training": {
                "epochs": 15000,
                "batch_size": 600,
                "n0": 100,
                "nb": 500,
                "nr": 10000,
                "lambda_r": 0.001,
                "lr": 0.003,
                "log_every": 500,
            },
            "bpinn": {"sigma_init": 0.001},
            "grid": {"nx": 81, "nt": 1441},
        }
    )
