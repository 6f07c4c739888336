"""Training hyperparameters and seed plumbing."""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np

from .errors import ConfigError

U_MODES = ("uniform", "gaussian")
DARK_MODES = ("soft", "onehot")
IIC_TARGETS = ("latent", "predictor")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    pretrain_epochs: int = 150
    finetune_epochs: int = 50
    learning_rate: float = 1e-4
    tau_s: float = 0.5
    tau_t: float = 1.0
    tau_d: float = 0.1
    momentum_mu: float = 0.996
    latent_dim: int = 512
    head_dim: int = 256
    encoder_hidden: tuple[int, ...] = (512, 1024, 2048, 512)
    student_hidden: int = 512
    seed: int = 0
    u_mode: str = "uniform"
    dark_mode: str = "soft"
    # None means "same as tau_t"
    dark_temp: float | None = None
    kmeans_refresh_epochs: int = 1
    kmeans_max_iter: int = 300
    kmeans_tol: float = 1e-8
    include_self_negatives: bool = False
    iic_target: str = "latent"
    finetune_encoders: bool = False
    distill_literal_sign: bool = False
    normalize: bool = True
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        for name in ("tau_s", "tau_t", "learning_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.dark_temp is not None and not self.dark_temp > 0:
            raise ConfigError("dark_temp must be > 0")
        if not 0.0 <= self.tau_d < 1.0:
            raise ConfigError(f"tau_d must lie in [0, 1), got {self.tau_d}")
        if not 0.0 <= self.momentum_mu <= 1.0:
            raise ConfigError(f"momentum_mu must lie in [0, 1], got {self.momentum_mu}")
        if self.pretrain_epochs < 0 or self.finetune_epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.kmeans_refresh_epochs < 1:
            raise ConfigError("kmeans_refresh_epochs must be >= 1")
        if self.latent_dim < 1 or self.head_dim < 1 or self.student_hidden < 1:
            raise ConfigError("layer widths must be >= 1")
        if any(w < 1 for w in self.encoder_hidden):
            raise ConfigError("encoder_hidden widths must be >= 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.u_mode not in U_MODES:
            raise ConfigError(f"u_mode must be one of {U_MODES}")
        if self.dark_mode not in DARK_MODES:
            raise ConfigError(f"dark_mode must be one of {DARK_MODES}")
        if self.iic_target not in IIC_TARGETS:
            raise ConfigError(f"iic_target must be one of {IIC_TARGETS}")

    @property
    def effective_dark_temp(self) -> float:
        return self.tau_t if self.dark_temp is None else self.dark_temp

    def replace(self, **changes: Any) -> TrainConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["encoder_hidden"] = list(self.encoder_hidden)
        out["adam_betas"] = list(self.adam_betas)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "encoder_hidden" in data:
            data["encoder_hidden"] = tuple(int(w) for w in data["encoder_hidden"])
        if "adam_betas" in data:
            data["adam_betas"] = tuple(float(b) for b in data["adam_betas"])
        return cls(**data)


def sub_seed(seed: int, name: str, *extra: int) -> int:
    """Derive an independent 64-bit seed for a named consumer (init, shuffle, kmeans, ...)."""
    entropy = [int(seed), zlib.crc32(name.encode()), *map(int, extra)]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int, name: str, *extra: int) -> np.random.Generator:
    """PCG64 generator keyed by (seed, name, extra...)."""
    return np.random.Generator(np.random.PCG64(sub_seed(seed, name, *extra)))
