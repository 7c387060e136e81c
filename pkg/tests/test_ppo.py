import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greenwave.marl.config import TrainConfig
from greenwave.marl.mlp import MLP, init_mlp, mlp_forward
from greenwave.marl.ppo import (RolloutBuffer, Stream, Transition, actor_loss_and_grad,
                                critic_loss_and_grad, gae, gae_advantages, log_softmax, normalize,
                                ppo_update, select_action, softmax, vanilla_pg_grad)

from oracles import assert_grads_close, gae_backward, gae_forward_sum, numeric_grads


def bias_policy(logits):
    logits = np.asarray(logits, dtype=float)
    return MLP([np.zeros((1, len(logits)))], [logits.copy()])


def small_batch(seed=0, n=12, d=5, a=4):
    rng = np.random.default_rng(seed)
    policy = init_mlp([d, 6, a], rng)
    obs = rng.normal(size=(n, d))
    actions = rng.integers(0, a, size=n)
    logp = log_softmax(mlp_forward(policy, obs)[0])[np.arange(n), actions]
    # move every ratio well away from the clip boundaries 0.8 / 1.2
    old = logp + rng.choice([-0.5, 0.0, 0.5], size=n)
    adv = rng.normal(size=n)
    return policy, obs, actions, old, adv


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_softmax_normalized(logits):
    p = softmax(np.array(logits))
    assert abs(p.sum() - 1.0) <= 1e-9
    assert np.allclose(np.exp(log_softmax(np.array(logits))), p, atol=1e-15)


def test_log_prob_of_sampled_action():
    policy = bias_policy([0.3, -1.0, 2.0])
    rng = np.random.default_rng(0)
    p = softmax(np.array([0.3, -1.0, 2.0]))
    for _ in range(20):
        a, logp = select_action(policy, [0.0], rng, "sample")
        assert abs(logp - math.log(p[a])) <= 1e-9


def test_greedy_ties_take_first_index():
    assert select_action(bias_policy(np.zeros(9)), [0.0], None, "greedy")[0] == 0


def test_saturated_logit():
    policy = bias_policy([0, 0, 1e6, 0])
    rng = np.random.default_rng(0)
    assert {select_action(policy, [0.0], rng)[0] for _ in range(1000)} == {2}


def test_sampling_frequency_one_to_two():
    policy = bias_policy([0.0, math.log(2.0)])
    rng = np.random.default_rng(123)
    n = 100_000
    ones = sum(select_action(policy, [0.0], rng)[0] for _ in range(n))
    # Binomial(n, 2/3): mean n*2/3, sd sqrt(n*2/9)
    assert abs(ones - n * 2 / 3) <= 3 * math.sqrt(n * 2 / 9)


def test_unknown_mode():
    with pytest.raises(ValueError):
        select_action(bias_policy([0, 0]), [0.0], None, "argmax")


def test_gae_gamma_zero_and_lambda_zero():
    r = np.array([1.0, -2.0, 0.5])
    v = np.array([0.2, 0.4, -0.1])
    adv, _ = gae(r, v, [False] * 3, 0.7, gamma=0.0, lam=0.95)
    assert adv.tolist() == (r - v).tolist()
    adv, _ = gae(r, v, [False] * 3, 0.7, gamma=0.9, lam=0.0)
    delta = r + 0.9 * np.append(v[1:], 0.7) - v
    assert adv.tolist() == delta.tolist()


def test_gae_three_step_example():
    r, v = [1.0, 0.0, 1.0], [0.5, 0.5, 0.5]
    adv, ret = gae(r, v, [False] * 3, 0.0, 0.9, 0.95)
    assert adv.tolist() == gae_backward(r, v, 0.0, 0.9, 0.95)
    assert adv == pytest.approx(gae_forward_sum(r, v, 0.0, 0.9, 0.95), abs=1e-12)
    assert ret.tolist() == (adv + 0.5).tolist()


def test_gae_random_100_step_sequences():
    rng = np.random.default_rng(7)
    for _ in range(20):
        r, v = rng.normal(size=100).tolist(), rng.normal(size=100).tolist()
        boot = float(rng.normal())
        gamma, lam = float(rng.uniform(0.8, 1.0)), float(rng.uniform(0.0, 1.0))
        adv, _ = gae(r, v, [False] * 100, boot, gamma, lam)
        assert adv.tolist() == gae_backward(r, v, boot, gamma, lam)


def test_gae_terminal_cuts_bootstrap():
    adv, _ = gae([1.0, 1.0], [0.0, 0.0], [False, True], 100.0, 0.9, 1.0)
    assert adv.tolist() == [1.0 + 0.9 * 1.0, 1.0]


def stream(rewards, values, boot, agent=0):
    s = Stream(bootstrap=boot)
    for t, (r, v) in enumerate(zip(rewards, values)):
        s.transitions.append(Transition(agent, np.zeros(1), np.zeros(1), 0, 0.0, v, t, reward=r))
    return s


def test_streams_are_independent_and_override_bootstrap():
    rng = np.random.default_rng(1)
    r1, v1, r2, v2 = (rng.normal(size=k).tolist() for k in (5, 5, 3, 3))
    buf = RolloutBuffer([stream(r1, v1, 0.3), stream(r2, v2, -1.0, 1)], 0.95, 0.9)
    adv, _ = gae_advantages(buf, normalized=False)
    assert adv.tolist() == gae_backward(r1, v1, 0.3, 0.95, 0.9) + gae_backward(r2, v2, -1.0, 0.95, 0.9)
    adv, _ = gae_advantages(buf, bootstrap=[0.0, 0.0], normalized=False)
    assert adv.tolist() == gae_backward(r1, v1, 0.0, 0.95, 0.9) + gae_backward(r2, v2, 0.0, 0.95, 0.9)
    with pytest.raises(ValueError):
        gae_advantages(RolloutBuffer())


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50).filter(lambda x: np.std(x) > 1e-3))
def test_normalized_advantages(values):
    a = normalize(np.array(values))
    assert abs(a.mean()) <= 1e-9
    assert abs(a.std() - 1.0) <= 1e-6


def test_ratio_one_loss():
    policy, obs, actions, _, adv = small_batch()
    logp_all = log_softmax(mlp_forward(policy, obs)[0])
    old = logp_all[np.arange(len(actions)), actions]
    loss, _, stats = actor_loss_and_grad(policy, obs, actions, old, adv, 0.2, 0.01)
    entropy = -(np.exp(logp_all) * logp_all).sum(axis=1).mean()
    assert loss == pytest.approx(-adv.mean() - 0.01 * entropy, abs=1e-12)
    assert stats["clip_frac"] == 0.0


def test_clipped_sample_has_zero_gradient():
    policy = bias_policy([0.2, -0.4, 0.1])
    logp = log_softmax(np.array([0.2, -0.4, 0.1]))[1]
    old = np.array([logp - math.log(1 + 2 * 0.2)])  # ratio = 1 + 2*eps
    _, grads, stats = actor_loss_and_grad(policy, np.zeros((1, 1)), np.array([1]), old,
                                          np.array([1.5]), 0.2, 0.0)
    assert stats["clip_frac"] == 1.0
    assert all(not g.any() for g in grads)


def test_single_transition_scalar_oracle():
    logits = [0.4, -0.3, 1.1]
    policy = bias_policy(logits)
    a, adv, eps, c = 2, -0.7, 0.2, 0.05
    old = math.log(0.3)
    z = sum(math.exp(x) for x in logits)
    p = [math.exp(x) / z for x in logits]
    ratio = p[a] / 0.3
    surr = min(ratio * adv, min(max(ratio, 1 - eps), 1 + eps) * adv)
    entropy = -sum(q * math.log(q) for q in p)
    expected = -surr - c * entropy
    loss, _, _ = actor_loss_and_grad(policy, np.zeros((1, 1)), np.array([a]), np.array([old]),
                                     np.array([adv]), eps, c)
    assert abs(loss - expected) <= 1e-10


def test_actor_gradient_finite_differences():
    policy, obs, actions, old, adv = small_batch(2)

    def loss():
        return actor_loss_and_grad(policy, obs, actions, old, adv, 0.2, 0.05)[0]

    _, grads, stats = actor_loss_and_grad(policy, obs, actions, old, adv, 0.2, 0.05)
    assert 0 < stats["clip_frac"] < 1  # both branches exercised
    assert_grads_close(grads, numeric_grads(policy, loss))


def test_critic_gradient_finite_differences():
    rng = np.random.default_rng(3)
    critic = init_mlp([5, 6, 1], rng)
    x, ret = rng.normal(size=(10, 5)), rng.normal(size=10)
    _, grads = critic_loss_and_grad(critic, x, ret)
    assert_grads_close(grads, numeric_grads(critic, lambda: critic_loss_and_grad(critic, x, ret)[0]))


def test_infinite_clip_equals_vanilla_policy_gradient():
    policy, obs, actions, _, adv = small_batch(4)
    fresh = log_softmax(mlp_forward(policy, obs)[0])[np.arange(len(actions)), actions]
    _, grads, _ = actor_loss_and_grad(policy, obs, actions, fresh, adv, math.inf, 0.0)
    for g, v in zip(grads, vanilla_pg_grad(policy, obs, actions, adv)):
        assert np.max(np.abs(g - v)) <= 1e-8


def test_single_epoch_update_is_vanilla_step():
    policy, obs, actions, _, adv = small_batch(5)
    n = len(actions)
    fresh = log_softmax(mlp_forward(policy, obs)[0])[np.arange(n), actions]
    critic = init_mlp([obs.shape[1], 4, 1], np.random.default_rng(0))
    cfg = TrainConfig(clip_eps=math.inf, entropy_coef=0.0, epochs=1, minibatch_size=n,
                      max_grad_norm=math.inf, lr=0.1)
    expected = [p - 0.1 * g for p, g in zip(policy.params(), vanilla_pg_grad(policy, obs, actions, adv))]
    batch = {"obs": obs, "critic_input": obs, "actions": actions, "log_probs": fresh,
             "advantages": adv, "returns": np.zeros(n)}
    ppo_update(policy, critic, batch, cfg, np.random.default_rng(0))
    for p, e in zip(policy.params(), expected):
        assert np.max(np.abs(p - e)) <= 1e-8


def test_update_rejects_non_finite_loss():
    policy, obs, actions, old, adv = small_batch(6)
    critic = init_mlp([obs.shape[1], 4, 1], np.random.default_rng(0))
    adv[0] = np.nan
    batch = {"obs": obs, "critic_input": obs, "actions": actions, "log_probs": old,
             "advantages": adv, "returns": np.zeros(len(adv))}
    with pytest.raises(FloatingPointError):
        ppo_update(policy, critic, batch, TrainConfig(), np.random.default_rng(0))
