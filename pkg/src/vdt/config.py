"""Run configuration with the published hyperparameters as defaults."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .losses import LossWeights


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    ttt_lr: float = 2e-5
    batch_size: int = 256
    epochs: int = 20
    early_stop_patience: int = 5
    val_fraction: float = 0.1
    latent_dim: int = 128
    classifier_hidden: int = 500
    encoder_hidden: tuple[int, ...] | None = None  # None: chosen from the input dim
    beta: float = 1.5
    lambda1: float = 2.0
    lambda2: float = 0.5
    lambda3: float = 1.0
    alpha1: float = 2.0
    alpha2: float = -1.0
    theta: float = 0.9
    tau: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    ttt_passes: int = 1
    ttt_batch_size: int | None = None  # None: same as batch_size
    use_gate: bool = True
    use_cvf: bool = True
    dcc_in_ttt: bool = True
    seed: int = 0
    # data wiring, only used by the command-line driver
    source_train: str | None = None
    target_train: str | None = None
    source_test: str | None = None
    target_test: str | None = None

    def __post_init__(self):
        if self.lr <= 0 or self.ttt_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")
        if self.batch_size < 1 or self.epochs < 0 or self.ttt_passes < 0:
            raise ConfigError("batch_size >= 1, epochs >= 0 and ttt_passes >= 0 required")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.encoder_hidden is not None:
            object.__setattr__(self, "encoder_hidden", tuple(int(h) for h in self.encoder_hidden))

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.lambda3, self.beta, self.tau)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        if d["encoder_hidden"] is not None:
            d["encoder_hidden"] = list(d["encoder_hidden"])
        return d

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**raw)
        except TypeError as e:
            raise ConfigError(str(e)) from None


def load_config(path=None, **overrides) -> TrainConfig:
    """Defaults < JSON file < explicit overrides (``None`` overrides are skipped)."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        if "lambda" in raw:
            lam = raw.pop("lambda")
            if not isinstance(lam, list) or len(lam) != 3:
                raise ConfigError("'lambda' must be a list of three numbers")
            raw.update(lambda1=lam[0], lambda2=lam[1], lambda3=lam[2])
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(raw)
