"""Episode-level turning-ratio randomization.

Each movement's ratio is scaled by ``1 + eps`` with ``eps ~ U(-delta, delta)``
and the ratios of every approach are re-normalized to sum to one. Noise is
multiplicative, so a zero ratio stays zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class RandomizationConfig:
    enabled: bool = False
    delta: float = 0.3
    noise_seed: int = 7

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"randomization.delta must lie in [0, 1], got {self.delta}")

    def to_dict(self) -> dict:
        return {"enabled": self.enabled, "delta": self.delta, "noise_seed": self.noise_seed}


def randomization_from_dict(data: dict | None, where: str = "randomization") -> RandomizationConfig:
    data = dict(data or {})
    extra = set(data) - {"enabled", "delta", "noise_seed"}
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}")
    try:
        return RandomizationConfig(
            enabled=bool(data.get("enabled", False)),
            delta=float(data.get("delta", 0.3)),
            noise_seed=int(data.get("noise_seed", 7)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def noise_rng(config: RandomizationConfig, *stream) -> np.random.Generator:
    """Dedicated noise stream, independent of the simulator's arrival stream."""
    return np.random.default_rng(np.random.SeedSequence([config.noise_seed, *stream]))


def perturb_approach(ratios: Sequence[float], delta: float, rng: np.random.Generator) -> np.ndarray:
    r = np.asarray(ratios, dtype=float)
    if r.size == 0 or not np.any(r > 0):
        raise ConfigError("cannot normalize an all-zero turning-ratio vector")
    if delta == 0:
        return r.copy()
    eps = rng.uniform(-delta, delta, size=r.size)
    scaled = r * (1.0 + eps)
    return scaled / scaled.sum()


def perturb_turning_ratios(ratios, config: RandomizationConfig, rng: np.random.Generator):
    """Perturb a list of per-approach ratio vectors (or a mapping of them).

    Approaches are processed in iteration order, one noise draw per movement.
    A disabled config returns the inputs unchanged.
    """
    delta = config.delta if config.enabled else 0.0
    if isinstance(ratios, Mapping):
        return {k: perturb_approach(v, delta, rng) for k, v in ratios.items()}
    return [perturb_approach(v, delta, rng) for v in ratios]


def perturb_network_ratios(spec, config: RandomizationConfig,
                           rng: np.random.Generator) -> dict[str, float]:
    """Per-movement episode ratios for a whole network (approaches in link order)."""
    base = spec.base_ratios()
    approaches = spec.approaches()
    out = {}
    for link_id in sorted(approaches):
        mids = approaches[link_id]
        new = perturb_approach([base[m] for m in mids], config.delta if config.enabled else 0.0, rng)
        out.update(zip(mids, (float(x) for x in new)))
    return out


def shift_ratios(spec, movement_weights: Mapping[str, float]) -> dict[str, float]:
    """Deterministically rescale ratios by per-movement factors and re-normalize.

    Used to build held-out evaluation scenarios whose turning pattern differs
    from the training one.
    """
    base = spec.base_ratios()
    out = {}
    for link_id, mids in spec.approaches().items():
        scaled = np.array([base[m] * movement_weights.get(m, 1.0) for m in mids])
        if not np.any(scaled > 0):
            raise ConfigError(f"approach {link_id}: shifted ratios are all zero")
        scaled = scaled / scaled.sum()
        out.update(zip(mids, (float(x) for x in scaled)))
    return out
