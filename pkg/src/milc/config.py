"""Experiment configuration: a JSON document mirrored by nested dataclasses.

Unknown keys are rejected at every level; after parsing every field is explicit.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_series: int = 50
    n_nodes: int = 10
    length: int = 20000
    slice_ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    n_samples: int = 2000
    sample_len: int = 200
    drop_frac: float = 0.2
    density: float = 0.3
    target_radius: float = 0.9
    noise_std: float = 1.0
    shared_pool: bool = True


@dataclass
class WindowConfig:
    win_len: int = 20
    overlap: float = 0.5


@dataclass
class TrainConfig:
    seed: int = 0
    variant: str = "simulation"
    standardize: bool = True
    # pre-training
    batch_size: int = 32
    windows_per_example: int = 13
    steps_per_epoch: int = 20
    pretrain_epochs: int = 300
    pretrain_patience: int = 15
    lr_pretrain: float = 3e-4
    val_runs: int = 4
    # downstream
    regime: str = "npt"
    n_train: int = 1600
    downstream_batch_size: int = 64
    epochs: int = 300
    patience: int = 15
    lr_downstream: float = 3e-4
    lr_head: float = 3e-4
    trials: int = 10
    parallel: int = 1
    # autoencoder baseline
    ae_epochs: int = 300
    ae_patience: int = 15
    ae_batch_windows: int = 256
    lr_autoencoder: float = 3e-4


@dataclass
class ExperimentConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        elif isinstance(default, tuple):
            kwargs[name] = tuple(value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}.{name}: expected a boolean")
            kwargs[name] = value
        elif isinstance(default, (int, float)) and not isinstance(value, (int, float)):
            raise ConfigError(f"{where}.{name}: expected a number, got {value!r}")
        elif isinstance(default, int) and isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{where}.{name}: expected an integer, got {value!r}")
        else:
            kwargs[name] = type(default)(value)
    return cls(**kwargs)


def from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "config")


PROFILES = {
    "full": {},
    # desk-scale: shorter pre-training series, smaller downstream set
    "quick": {
        "synth": {"n_series": 10, "length": 2000, "n_samples": 200},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def load_config(path=None, profile: str | None = None, overrides: dict | None = None, env=None) -> ExperimentConfig:
    """Resolve a config: defaults <- profile <- file <- overrides <- MILC_SEED."""
    env = os.environ if env is None else env
    data = ExperimentConfig().to_dict()
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        data = _merge(data, PROFILES[profile])
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        from_dict(user)  # reject unknown keys before merging
        data = _merge(data, user)
    if overrides:
        data = _merge(data, overrides)
    if env.get("MILC_SEED"):
        try:
            data["train"]["seed"] = int(env["MILC_SEED"])
        except ValueError:
            raise ConfigError(f"MILC_SEED must be an integer, got {env['MILC_SEED']!r}") from None
    return from_dict(data)
