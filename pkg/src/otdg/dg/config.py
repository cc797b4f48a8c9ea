"""Training configuration with the published defaults."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, fields, replace

ALPHA_GRID = (1e-4, 5e-4)
BETA_GRID = (1e-4, 5e-4, 1e-3, 5e-3)

METHODS = ("erm", "wbae", "wbmi", "wbae_no_wb", "wbae_no_r", "wbmi_no_wb")
# variant -> (base step, overrides)
VARIANTS = {
    "erm": ("erm", {}),
    "wbae": ("wbae", {}),
    "wbmi": ("wbmi", {}),
    "wbae_no_wb": ("wbae", {"alpha": 0.0}),
    "wbae_no_r": ("wbae", {"beta": 0.0}),
    "wbmi_no_wb": ("wbmi", {"alpha": 0.0}),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    method: str = "wbae"
    alpha: float = 1e-4
    beta: float = 1e-4
    epsilon: float = 0.5
    delta: float = 0.1
    lr: float = 5e-5
    batch_size: int = 32
    epochs: int = 40
    seed: int = 0
    feature_dim: int = 8
    hidden: int = 64
    encoder_update: str = "objective"
    optimizer: str = "sgd"
    val_fraction: float = 0.8
    num_eigen: int = 6
    unroll: int = 3
    bary_eps: float = 1e-2
    sinkhorn_tol: float = 1e-6
    sinkhorn_max_iter: int = 500
    monitor_divergence: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be nonnegative")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.delta < 0:
            raise ConfigError("delta must be nonnegative")
        if self.base_method == "wbmi" and not self.delta > 0:
            raise ConfigError("wbmi needs delta > 0")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 1 or self.feature_dim < 1 or self.hidden < 1:
            raise ConfigError("batch_size, epochs, feature_dim and hidden must be >= 1")
        if self.encoder_update not in ("objective", "algorithm1"):
            raise ConfigError("encoder_update must be 'objective' or 'algorithm1'")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError("optimizer must be 'sgd' or 'adam'")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")

    @property
    def base_method(self) -> str:
        return VARIANTS[self.method][0]

    def resolved(self) -> "TrainConfig":
        """Config with the variant's overrides applied (alpha/beta zeroed)."""
        return replace(self, **VARIANTS[self.method][1])

    def grid_warnings(self) -> list[str]:
        out = []
        if self.alpha not in ALPHA_GRID and self.alpha != 0:
            out.append(f"alpha={self.alpha} is outside the search grid {ALPHA_GRID}")
        if self.beta not in BETA_GRID and self.beta != 0:
            out.append(f"beta={self.beta} is outside the search grid {BETA_GRID}")
        return out

    def warn_if_off_grid(self) -> None:
        for msg in self.grid_warnings():
            warnings.warn(msg, stacklevel=2)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)
