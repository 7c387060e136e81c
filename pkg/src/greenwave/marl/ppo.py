"""PPO machinery: action sampling, GAE, clipped surrogate and the update loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .mlp import MLP, mlp_backward, mlp_forward, sgd_step


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def select_action(policy: MLP, obs, rng: np.random.Generator | None = None,
                  mode: str = "sample") -> tuple[int, float]:
    logits, _ = mlp_forward(policy, obs)
    logp = log_softmax(logits)
    if mode == "greedy":
        a = int(np.argmax(logits))  # first maximum wins ties
    elif mode == "sample":
        p = np.exp(logp)
        a = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
        a = min(a, len(p) - 1)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return a, float(logp[a])


@dataclass
class Transition:
    agent: int
    obs: np.ndarray
    critic_input: np.ndarray
    action: int
    log_prob: float
    value: float
    time: int
    reward: float = 0.0
    done: bool = False


@dataclass
class Stream:
    """Time-ordered decisions of one agent in one episode."""

    transitions: list[Transition] = field(default_factory=list)
    bootstrap: float = 0.0


@dataclass
class RolloutBuffer:
    streams: list[Stream] = field(default_factory=list)
    gamma: float = 0.99
    gae_lambda: float = 0.95

    def __len__(self) -> int:
        return sum(len(s.transitions) for s in self.streams)

    def transitions(self) -> list[Transition]:
        return [t for s in self.streams for t in s.transitions]


def gae(rewards, values, dones, bootstrap: float, gamma: float, lam: float):
    """Backward GAE recursion for one stream; returns (advantages, returns)."""
    n = len(rewards)
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        next_value = bootstrap if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv, adv + np.asarray(values, dtype=float)


def normalize(adv: np.ndarray) -> np.ndarray:
    if adv.size < 2:
        return adv - adv.mean()
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def gae_advantages(buffer: RolloutBuffer, bootstrap=None, normalized: bool = True):
    """Advantages and returns for every transition in buffer order.

    ``bootstrap`` overrides the per-stream bootstrap values when given.
    """
    if len(buffer) == 0:
        raise ValueError("empty rollout buffer")
    advs, rets = [], []
    for k, s in enumerate(buffer.streams):
        if not s.transitions:
            continue
        boot = s.bootstrap if bootstrap is None else bootstrap[k]
        a, r = gae([t.reward for t in s.transitions], [t.value for t in s.transitions],
                   [t.done for t in s.transitions], boot, buffer.gamma, buffer.gae_lambda)
        advs.append(a)
        rets.append(r)
    adv = np.concatenate(advs)
    ret = np.concatenate(rets)
    return (normalize(adv) if normalized else adv), ret


def actor_loss_and_grad(policy: MLP, obs, actions, old_log_probs, advantages,
                        clip_eps: float, entropy_coef: float):
    """Clipped-surrogate loss with entropy bonus, and its parameter gradients.

    loss = -mean(min(rho*A, clip(rho, 1-eps, 1+eps)*A)) - c * mean(H)
    """
    logits, cache = mlp_forward(policy, obs)
    n = logits.shape[0]
    logp_all = log_softmax(logits)
    p = np.exp(logp_all)
    idx = np.arange(n)
    logp = logp_all[idx, actions]
    ratio = np.exp(logp - old_log_probs)
    adv = np.asarray(advantages, dtype=float)
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    surr = np.minimum(ratio * adv, clipped * adv)
    entropy = -(p * logp_all).sum(axis=1)
    loss = -surr.mean() - entropy_coef * entropy.mean()

    # the min() takes the clipped branch only when it is strictly smaller
    active = ~(((adv > 0) & (ratio > 1.0 + clip_eps)) | ((adv < 0) & (ratio < 1.0 - clip_eps)))
    d_ratio = np.where(active, adv, 0.0)
    onehot = np.zeros_like(p)
    onehot[idx, actions] = 1.0
    g_logits = -(d_ratio * ratio)[:, None] * (onehot - p)
    # dH/dz_j = -p_j (log p_j + H)
    g_logits -= entropy_coef * (-p * (logp_all + entropy[:, None]))
    g_logits /= n
    grads = mlp_backward(policy, cache, g_logits)
    stats = {
        "actor_loss": float(loss),
        "entropy": float(entropy.mean()),
        "clip_frac": float(np.mean(~active)),
        "approx_kl": float(np.mean(old_log_probs - logp)),
    }
    return float(loss), grads, stats


def critic_loss_and_grad(critic: MLP, inputs, returns):
    values, cache = mlp_forward(critic, inputs)
    values = values[:, 0]
    err = values - returns
    loss = float(np.mean(err ** 2))
    grads = mlp_backward(critic, cache, (2.0 * err / len(err))[:, None])
    return loss, grads


def vanilla_pg_grad(policy: MLP, obs, actions, advantages):
    """Gradient of -mean(A * log pi(a|o)), computed sample by sample."""
    total = [np.zeros_like(q) for q in policy.params()]
    n = len(actions)
    for o, a, adv in zip(obs, actions, advantages):
        logits, cache = mlp_forward(policy, o)
        p = softmax(logits)
        dlogp = -p
        dlogp[a] += 1.0
        for acc, g in zip(total, mlp_backward(policy, cache, -adv / n * dlogp)):
            acc += g
    return total


def ppo_update(policy: MLP, critic: MLP, batch: dict, config: TrainConfig,
               rng: np.random.Generator) -> dict:
    """Run ``epochs`` passes of shuffled minibatch updates in place.

    ``batch`` holds arrays ``obs``, ``critic_input``, ``actions``,
    ``log_probs``, ``advantages`` and ``returns``.
    """
    n = len(batch["actions"])
    size = min(config.minibatch_size, n)
    stats = {"actor_loss": [], "critic_loss": [], "entropy": [], "clip_frac": [],
             "approx_kl": []}
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, size):
            mb = order[start:start + size]
            loss, grads, st = actor_loss_and_grad(
                policy, batch["obs"][mb], batch["actions"][mb], batch["log_probs"][mb],
                batch["advantages"][mb], config.clip_eps, config.entropy_coef)
            closs, cgrads = critic_loss_and_grad(critic, batch["critic_input"][mb],
                                                 batch["returns"][mb])
            if not (np.isfinite(loss) and np.isfinite(closs)):
                raise FloatingPointError(f"non-finite loss (actor={loss}, critic={closs}) "
                                         f"at minibatch starting {start}")
            sgd_step(policy, grads, config.lr, config.max_grad_norm)
            sgd_step(critic, cgrads, config.critic_step, config.max_grad_norm)
            st["critic_loss"] = closs
            for k in stats:
                stats[k].append(st[k])
    return {k: float(np.mean(v)) for k, v in stats.items()}
