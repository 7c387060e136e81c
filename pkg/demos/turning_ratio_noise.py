"""
Perturbing turning ratios
=========================

Each movement's ratio is scaled by (1 + eps) with eps ~ U(-delta, delta),
then every approach is re-normalized. The noise has its own random stream,
so the arrival process of a seeded episode is unchanged.
"""
import numpy as np

from greenwave.randomization import RandomizationConfig, noise_rng, perturb_network_ratios
from greenwave.scenario import corridor_scenario, heldout_scenario

net = corridor_scenario(1).network
base = net.base_ratios()

for delta in (0.1, 0.3, 0.5):
    cfg = RandomizationConfig(True, delta)
    draws = [perturb_network_ratios(net, cfg, noise_rng(cfg, episode)) for episode in range(2000)]
    spread = {m: np.ptp([d[m] for d in draws]) for m in base}
    widest = max(spread, key=spread.get)
    print(f"delta={delta}: widest range {widest} {spread[widest]:.3f} (base {base[widest]:.2f})")

# One approach, a few draws: still sums to one.
cfg = RandomizationConfig(True, 0.3)
approach = net.approaches()[sorted(net.approaches())[0]]
for episode in range(3):
    ratios = perturb_network_ratios(net, cfg, noise_rng(cfg, episode))
    values = [round(ratios[m], 3) for m in approach]
    print(approach, values, "sum", round(sum(ratios[m] for m in approach), 12))

# A fixed held-out pattern: more left turns, fewer throughs.
shifted = heldout_scenario(corridor_scenario(1)).network.base_ratios()
for m in approach:
    print(f"{m}: {base[m]:.3f} -> {shifted[m]:.3f}")
