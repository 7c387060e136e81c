"""Local, neighbor and global observation vectors plus per-agent rewards.

Local block layout (padded to the network-wide maximum of each part)::

    [phase one-hot (P_max) | elapsed / g_max | queued per movement (M_max)
     | approaching per incoming link (L_max)]

Vehicle counts are divided by ``capacity_norm``. Every entry is clipped to
``[0, OBS_BOUND]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .simulator import SimState, Snapshot

OBS_BOUND = 10.0
SCOPES = ("local", "neighbor", "global")


@dataclass(frozen=True)
class ObservationConfig:
    k_max: int | None = None  # None = max neighbor count of the network
    capacity_norm: float = 40.0

    def to_dict(self) -> dict:
        return {"k_max": "auto" if self.k_max is None else self.k_max,
                "capacity_norm": self.capacity_norm}


def observation_config_from_dict(data: dict | None, where: str = "observation") -> ObservationConfig:
    data = dict(data or {})
    extra = set(data) - {"k_max", "capacity_norm"}
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}")
    k = data.get("k_max", "auto")
    if k != "auto" and (not isinstance(k, int) or k < 0):
        raise ConfigError(f"{where}.k_max: expected 'auto' or a non-negative integer")
    try:
        cap = float(data.get("capacity_norm", 40.0))
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.capacity_norm: expected a number") from None
    if cap <= 0:
        raise ConfigError(f"{where}.capacity_norm: must be > 0")
    return ObservationConfig(None if k == "auto" else k, cap)


@dataclass(frozen=True)
class RewardWeights:
    w_travel: float = 0.0
    w_wait: float = 1.0
    w_speed: float = 0.0
    w_throughput: float = 0.2

    def __post_init__(self):
        w = (self.w_travel, self.w_wait, self.w_speed, self.w_throughput)
        if not all(np.isfinite(w)):
            raise ConfigError("reward weights must be finite")
        if not any(w):
            raise ConfigError("at least one reward weight must be nonzero")

    def to_dict(self) -> dict:
        return {"w_travel": self.w_travel, "w_wait": self.w_wait,
                "w_speed": self.w_speed, "w_throughput": self.w_throughput}


@dataclass(frozen=True)
class _Weights:
    w_travel: float
    w_wait: float
    w_speed: float
    w_throughput: float


def reward_weights_from_dict(data: dict | None, where: str = "reward") -> RewardWeights:
    data = dict(data or {})
    extra = set(data) - {"w_travel", "w_wait", "w_speed", "w_throughput"}
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}")
    kw = {}
    for k, v in data.items():
        try:
            kw[k] = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.{k}: expected a number, got {v!r}") from None
    try:
        return RewardWeights(**kw)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None


class ObservationBuilder:
    """Fixed observation layout for one network."""

    def __init__(self, spec, config: ObservationConfig | None = None):
        self.spec = spec
        self.config = config or ObservationConfig()
        nodes = spec.intersections
        self.num_agents = len(nodes)
        self.p_max = max(n.num_phases for n in nodes)
        self.m_max = max(len(n.movements) for n in nodes)
        self.l_max = max(len(n.incoming_links) for n in nodes)
        self.local_dim = self.p_max + 1 + self.m_max + self.l_max
        k_net = spec.max_neighbors()
        self.k_max = k_net if self.config.k_max is None else self.config.k_max
        if self.k_max < k_net:
            raise ConfigError(f"k_max={self.k_max} is smaller than the largest "
                              f"neighborhood ({k_net})")
        self.neighbor_dim = (1 + self.k_max) * self.local_dim + self.k_max
        self.global_dim = self.num_agents * self.local_dim
        self.neighbor_index = [[spec.intersection_ids.index(j) for j in n.neighbors]
                               for n in nodes]

    def dim(self, scope: str) -> int:
        if scope == "local":
            return self.local_dim
        if scope == "neighbor":
            return self.neighbor_dim
        if scope == "global":
            return self.global_dim
        raise ConfigError(f"unknown observation scope {scope!r}")

    def local(self, state: SimState, k: int) -> np.ndarray:
        out = np.zeros(self.local_dim)
        sig = state.signals[k]
        out[sig.phase_index] = 1.0
        out[self.p_max] = sig.elapsed_in_phase / sig.program.g_max
        cap = self.config.capacity_norm
        base = self.p_max + 1
        for j, rt in enumerate(state.node_movements[k]):
            out[base + j] = len(rt.queue) / cap
        base += self.m_max
        for j, link in enumerate(state.incoming[k]):
            out[base + j] = state.approaching(link.id) / cap
        np.clip(out, 0.0, OBS_BOUND, out=out)
        return out

    def all_local(self, state: SimState) -> list[np.ndarray]:
        return [self.local(state, k) for k in range(self.num_agents)]

    def neighbor(self, state: SimState, k: int, locals_: list | None = None) -> np.ndarray:
        if locals_ is None:
            get = lambda j: self.local(state, j)  # noqa: E731
        else:
            get = locals_.__getitem__
        d = self.local_dim
        out = np.zeros(self.neighbor_dim)
        out[:d] = get(k)
        mask_at = (1 + self.k_max) * d
        for slot, j in enumerate(self.neighbor_index[k]):
            out[(1 + slot) * d:(2 + slot) * d] = get(j)
            out[mask_at + slot] = 1.0
        return out

    def global_(self, state: SimState, locals_: list | None = None) -> np.ndarray:
        locals_ = locals_ if locals_ is not None else self.all_local(state)
        return np.concatenate(locals_)

    def observe(self, state: SimState, k: int, scope: str, locals_: list | None = None) -> np.ndarray:
        if scope == "local":
            return locals_[k] if locals_ is not None else self.local(state, k)
        if scope == "neighbor":
            return self.neighbor(state, k, locals_)
        if scope == "global":
            return self.global_(state, locals_)
        raise ConfigError(f"unknown observation scope {scope!r}")


def _builder(state: SimState, config: ObservationConfig | None) -> ObservationBuilder:
    key = config or ObservationConfig()
    cached = getattr(state, "_obs_builder", None)
    if cached is None or cached.config != key:
        cached = ObservationBuilder(state.spec, key)
        state._obs_builder = cached
    return cached


def local_observation(state: SimState, node_id: str, config: ObservationConfig | None = None):
    b = _builder(state, config)
    return b.local(state, state.node_index[node_id])


def neighbor_observation(state: SimState, node_id: str, config: ObservationConfig | None = None):
    b = _builder(state, config)
    return b.neighbor(state, state.node_index[node_id])


def global_observation(state: SimState, config: ObservationConfig | None = None):
    return _builder(state, config).global_(state)


def compute_reward(prev: Snapshot, nxt: Snapshot, k: int, weights) -> float:
    """Weighted reward of intersection ``k`` over the interval ``[prev, nxt]``.

    Larger is better: accumulated travel and waiting vehicle-seconds on the
    incoming links enter negated, throughput counts vehicles released across
    the stop lines, and the speed term is the moving fraction at ``nxt``.
    ``weights`` is a RewardWeights or a plain
    ``(w_travel, w_wait, w_speed, w_throughput)`` tuple.
    """
    if not isinstance(weights, RewardWeights):
        weights = _Weights(*weights)
    d_travel = nxt.travel[k] - prev.travel[k]
    d_wait = nxt.wait[k] - prev.wait[k]
    d_exits = nxt.exits[k] - prev.exits[k]
    total = nxt.total[k]
    speed = nxt.moving[k] / total if total else 1.0
    return (weights.w_travel * -d_travel + weights.w_wait * -d_wait
            + weights.w_speed * speed + weights.w_throughput * d_exits)
