"""Training configuration and its strict JSON form."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from ..errors import ConfigError
from ..observation import (ObservationConfig, RewardWeights, SCOPES,
                           observation_config_from_dict, reward_weights_from_dict)

ALGOS = ("mappo", "ippo")


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    lr: float = 0.05
    critic_lr: float | None = 0.02  # None: same as lr
    epochs: int = 4
    minibatch_size: int = 64
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    iterations: int = 50
    episodes_per_iter: int = 4
    hidden: int = 64
    seed: int = 0
    horizon_s: int | None = None  # None: the scenario demand horizon
    reward_scale: float = 1e-4  # raw rewards are vehicle-seconds per decision
    eval_interval: int = 1
    eval_seed: int = 100_000
    scope: str = "neighbor"
    algo: str = "mappo"
    reward: RewardWeights = field(default_factory=RewardWeights)
    observation: ObservationConfig = field(default_factory=ObservationConfig)

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError(f"gae_lambda must lie in [0, 1], got {self.gae_lambda}")
        if not self.clip_eps > 0:
            raise ConfigError(f"clip_eps must be > 0, got {self.clip_eps}")
        if self.epochs < 1 or self.minibatch_size < 1 or self.episodes_per_iter < 1:
            raise ConfigError("epochs, minibatch_size and episodes_per_iter must be >= 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.scope not in SCOPES:
            raise ConfigError(f"scope must be one of {SCOPES}, got {self.scope!r}")
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}, got {self.algo!r}")

    @property
    def critic_step(self) -> float:
        return self.lr if self.critic_lr is None else self.critic_lr

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = value.to_dict() if hasattr(value, "to_dict") else value
        return out

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


_SCALARS = {f.name for f in fields(TrainConfig)} - {"reward", "observation"}
_INTS = {"epochs", "minibatch_size", "iterations", "episodes_per_iter", "hidden", "seed",
         "horizon_s", "eval_interval", "eval_seed"}


def train_config_from_dict(data: dict | None, where: str = "training") -> TrainConfig:
    data = dict(data or {})
    extra = set(data) - _SCALARS - {"reward", "observation"}
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}")
    kw = {}
    for key in _SCALARS & set(data):
        value = data[key]
        try:
            if value is None or key in ("scope", "algo"):
                kw[key] = value
            elif key in _INTS:
                if isinstance(value, bool) or int(value) != value:
                    raise ValueError(f"expected an integer, got {value!r}")
                kw[key] = int(value)
            else:
                kw[key] = float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.{key}: {exc}") from None
    kw["reward"] = reward_weights_from_dict(data.get("reward"), f"{where}.reward")
    kw["observation"] = observation_config_from_dict(data.get("observation"), f"{where}.observation")
    try:
        return TrainConfig(**kw)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
