"""
Training a shared signal policy
===============================

A short MAPPO run on a two-intersection corridor. Every intersection uses
the same policy network; the critic additionally sees the whole network.
Fifty iterations take a minute or two on one core. Early on the reward can
get worse before it improves, so judge the run by the end of the curve.
The untrained policy (sampling actions) is the yardstick here; the
well-tuned fixed-time plan of this corridor is a harder one.
"""
import numpy as np

from greenwave.marl.config import TrainConfig
from greenwave.marl.trainer import ObservationAdapter, evaluate_policy, init_nets, train
from greenwave.scenario import corridor_scenario
from greenwave.signals import fixed_time_controller
from greenwave.simulator import make_state, run_episode

scenario = corridor_scenario(2)
config = TrainConfig(iterations=50, episodes_per_iter=4, eval_interval=10, seed=0)
adapter = ObservationAdapter(scenario.network, config)
print("actor inputs", adapter.actor_dim, "critic inputs", adapter.critic_dim)


def show(it, mean_reward, eval_awt, stats):
    line = f"iter {it:3d}  reward {mean_reward:11.1f}  entropy {stats['entropy']:.2f}"
    if eval_awt is not None:
        line += f"  eval AWT {eval_awt:.2f}"
    print(line)


result = train(scenario, config, progress=show)

seeds = range(500, 505)
untrained, _ = init_nets(adapter, config)
before = evaluate_policy(scenario, untrained, config, seeds, mode="sample")
after = evaluate_policy(scenario, result.policy, config, seeds)
fixed = []
for s in seeds:
    ctrl = fixed_time_controller()
    fixed.append(run_episode(make_state(scenario, s, ctrl), ctrl))

for label, reports in [("untrained", before), ("trained", after), ("fixed-time", fixed)]:
    print(f"{label:10s} AWT {np.mean([r.awt for r in reports]):.2f}")
