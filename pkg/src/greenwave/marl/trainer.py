"""MAPPO / IPPO training with one policy shared by all intersections.

Agents decide asynchronously at their own phase boundaries. Each agent's
decisions in one episode form a stream; a transition's reward covers the
interval up to that agent's next decision, and the last one is bootstrapped
from the critic at the horizon.

MAPPO feeds the critic an agent-specific global state: the agent's own actor
observation followed by the global observation. IPPO feeds it the actor
observation alone.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError
from ..observation import ObservationBuilder, compute_reward
from ..randomization import RandomizationConfig, noise_rng, perturb_network_ratios
from ..signals import NUM_ACTIONS, Controller, DecisionContext
from ..simulator import MetricsReport, make_state, run_episode
from .config import TrainConfig
from .mlp import MLP, init_mlp, mlp_forward
from .ppo import RolloutBuffer, Stream, Transition, gae_advantages, ppo_update, select_action


def seed_int(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("GREENWAVE_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, jobs: list) -> list:
    """Map preserving job order; uses processes when GREENWAVE_THREADS > 1."""
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


class ObservationAdapter:
    """Builds actor and critic inputs for one network and training setup."""

    def __init__(self, spec, config: TrainConfig):
        self.builder = ObservationBuilder(spec, config.observation)
        self.scope = config.scope
        self.algo = config.algo
        self.n = self.builder.num_agents

    @property
    def actor_dim(self) -> int:
        d = self.builder.dim(self.scope)
        return d + self.n if self.scope == "global" else d

    @property
    def critic_dim(self) -> int:
        if self.algo == "mappo":
            return self.actor_dim + self.builder.global_dim
        return self.actor_dim

    def _onehot(self, k: int) -> np.ndarray:
        e = np.zeros(self.n)
        e[k] = 1.0
        return e

    def actor(self, state, k: int, locals_=None) -> np.ndarray:
        obs = self.builder.observe(state, k, self.scope, locals_)
        if self.scope == "global":
            obs = np.concatenate([obs, self._onehot(k)])
        return obs

    def critic(self, state, k: int, locals_=None, actor_obs=None) -> np.ndarray:
        own = actor_obs if actor_obs is not None else self.actor(state, k, locals_)
        if self.algo == "mappo":
            return np.concatenate([own, self.builder.global_(state, locals_)])
        return own


class PolicyController(Controller):
    """Cyclic controller driven by a (shared) policy network."""

    name = "rl"

    def __init__(self, policy: MLP, adapter: ObservationAdapter, mode: str = "greedy",
                 rng: np.random.Generator | None = None):
        if policy.in_dim != adapter.actor_dim:
            raise DimensionError(f"policy expects {policy.in_dim} inputs but the scenario "
                                 f"produces {adapter.actor_dim} ({adapter.scope} scope)")
        if policy.out_dim != NUM_ACTIONS:
            raise DimensionError(f"policy has {policy.out_dim} outputs, expected {NUM_ACTIONS}")
        self.policy = policy
        self.adapter = adapter
        self.mode = mode
        self.rng = rng
        self._locals_at = None

    def _locals(self, state):
        # several agents may decide in the same second; share one snapshot
        if self._locals_at is None or self._locals_at[0] != state.clock:
            self._locals_at = (state.clock, self.adapter.builder.all_local(state))
        return self._locals_at[1]

    def decide(self, ctx: DecisionContext) -> int:
        obs = self.adapter.actor(ctx.state, ctx.node_index, self._locals(ctx.state))
        a, _ = select_action(self.policy, obs, self.rng, self.mode)
        return a


class RolloutController(PolicyController):
    """Sampling controller that records per-agent transition streams."""

    def __init__(self, policy: MLP, critic: MLP, adapter: ObservationAdapter,
                 config: TrainConfig, rng: np.random.Generator):
        super().__init__(policy, adapter, "sample", rng)
        self.critic_net = critic
        self.config = config
        self.streams = [Stream() for _ in range(adapter.n)]
        self._snap: list = [None] * adapter.n
        self.reward_total = 0.0

    def _close(self, k: int, snap) -> None:
        stream = self.streams[k]
        if stream.transitions and self._snap[k] is not None:
            r = compute_reward(self._snap[k], snap, k, self.config.reward)
            stream.transitions[-1].reward = r * self.config.reward_scale
            self.reward_total += r

    def decide(self, ctx: DecisionContext) -> int:
        state, k = ctx.state, ctx.node_index
        locals_ = self._locals(state)
        obs = self.adapter.actor(state, k, locals_)
        cin = self.adapter.critic(state, k, locals_, obs)
        a, logp = select_action(self.policy, obs, self.rng, "sample")
        value = float(mlp_forward(self.critic_net, cin)[0][0])
        snap = state.counters()
        self._close(k, snap)
        self.streams[k].transitions.append(Transition(k, obs, cin, a, logp, value, state.clock))
        self._snap[k] = snap
        return a

    def episode_end(self, state) -> None:
        snap = state.counters()
        locals_ = self.adapter.builder.all_local(state)
        for k, stream in enumerate(self.streams):
            self._close(k, snap)
            if stream.transitions:
                cin = self.adapter.critic(state, k, locals_)
                stream.bootstrap = float(mlp_forward(self.critic_net, cin)[0][0])


def episode_ratios(scenario, randomization: RandomizationConfig | None, *stream):
    if randomization is None or not randomization.enabled:
        return None
    return perturb_network_ratios(scenario.network, randomization,
                                  noise_rng(randomization, *stream))


def _collect(job):
    scenario, policy, critic, config, randomization, it, ep = job
    adapter = ObservationAdapter(scenario.network, config)
    ratios = episode_ratios(scenario, randomization, config.seed, it, ep)
    rng = np.random.default_rng(seed_int(config.seed, it, ep, 1))
    ctrl = RolloutController(policy, critic, adapter, config, rng)
    state = make_state(scenario, seed_int(config.seed, it, ep), ctrl, ratios=ratios)
    report = run_episode(state, ctrl, config.horizon_s or scenario.demand.horizon_s)
    return ctrl.streams, ctrl.reward_total, report


def _evaluate(job):
    scenario, policy, config, seed, mode = job
    adapter = ObservationAdapter(scenario.network, config)
    ctrl = PolicyController(policy, adapter, mode, np.random.default_rng(seed_int(seed, 2)))
    state = make_state(scenario, seed, ctrl)
    return run_episode(state, ctrl, config.horizon_s or scenario.demand.horizon_s)


def evaluate_policy(scenario, policy: MLP, config: TrainConfig, seeds, mode: str = "greedy",
                    ) -> list[MetricsReport]:
    """Run one episode per seed with base turning ratios (no randomization)."""
    return parallel_map(_evaluate, [(scenario, policy, config, s, mode) for s in seeds])


def init_nets(adapter: ObservationAdapter, config: TrainConfig) -> tuple[MLP, MLP]:
    init_seq, _ = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(init_seq)
    h = config.hidden
    policy = init_mlp([adapter.actor_dim, h, h, NUM_ACTIONS], rng, out_scale=0.01)
    critic = init_mlp([adapter.critic_dim, h, h, 1], rng, out_scale=1.0)
    return policy, critic


@dataclass
class TrainResult:
    policy: MLP
    critic: MLP
    config: TrainConfig
    curve: list = field(default_factory=list)  # (iteration, mean_reward, eval_awt)
    stats: list = field(default_factory=list)


def build_batch(buffer: RolloutBuffer) -> dict:
    ts = buffer.transitions()
    adv, ret = gae_advantages(buffer)
    return {
        "obs": np.array([t.obs for t in ts]),
        "critic_input": np.array([t.critic_input for t in ts]),
        "actions": np.array([t.action for t in ts], dtype=int),
        "log_probs": np.array([t.log_prob for t in ts]),
        "advantages": adv,
        "returns": ret,
    }


def train(scenario, config: TrainConfig | None = None,
          randomization: RandomizationConfig | None = None, progress=None) -> TrainResult:
    """Train a shared policy on ``scenario``; fully determined by ``config.seed``."""
    config = config or scenario.training
    if randomization is None:
        randomization = scenario.randomization
    adapter = ObservationAdapter(scenario.network, config)
    policy, critic = init_nets(adapter, config)
    _, update_seq = np.random.SeedSequence(config.seed).spawn(2)
    update_rng = np.random.default_rng(update_seq)
    result = TrainResult(policy, critic, config)

    for it in range(1, config.iterations + 1):
        jobs = [(scenario, policy, critic, config, randomization, it, ep)
                for ep in range(config.episodes_per_iter)]
        outcomes = parallel_map(_collect, jobs)
        buffer = RolloutBuffer(gamma=config.gamma, gae_lambda=config.gae_lambda)
        for streams, _, _ in outcomes:  # merged in episode order
            buffer.streams.extend(s for s in streams if s.transitions)
        mean_reward = float(np.mean([r for _, r, _ in outcomes]))
        stats = ppo_update(policy, critic, build_batch(buffer), config, update_rng)
        eval_awt = None
        if config.eval_interval and it % config.eval_interval == 0:
            rep = evaluate_policy(scenario, policy, config, [config.eval_seed])[0]
            eval_awt = rep.awt
        result.curve.append((it, mean_reward, eval_awt))
        result.stats.append(stats)
        if progress is not None:
            progress(it, mean_reward, eval_awt, stats)
    return result
