"""Scenario files and synthetic corridor / grid fixtures.

A scenario file is one JSON document with exactly the top-level keys
``network``, ``demand``, ``signals``, ``randomization`` and ``training``
(plus an optional ``name``). Parsing is strict: unknown keys are errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .marl.config import TrainConfig, train_config_from_dict
from .network import (LinkSpec, MovementSpec, NetworkSpec, PhaseSpec, build_network,
                      network_from_dict, network_to_dict, validate_network)
from .randomization import RandomizationConfig, randomization_from_dict, shift_ratios
from .signals import SignalConfig, signal_config_from_dict
from .simulator import DemandSpec, Flow, check_demand, demand_from_dict

TOP_KEYS = {"network", "demand", "signals", "randomization", "training"}

# clockwise compass order; a vehicle arriving from side d heads to opposite(d)
SIDES = ("N", "E", "S", "W")
OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}
STEP = {"N": (-1, 0), "S": (1, 0), "E": (0, 1), "W": (0, -1)}

ARTERIAL_RATIOS = {"T": 0.6, "L": 0.2, "R": 0.2}
SIDE_RATIOS = {"T": 0.5, "L": 0.3, "R": 0.2}
FIXTURE_GREENS = (47.0, 15.0, 25.0)


@dataclass(frozen=True)
class Scenario:
    network: NetworkSpec
    demand: DemandSpec
    signals: SignalConfig = field(default_factory=SignalConfig)
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    name: str = "scenario"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "network": network_to_dict(self.network),
            "demand": self.demand.to_dict(),
            "signals": self.signals.to_dict(),
            "randomization": self.randomization.to_dict(),
            "training": self.training.to_dict(),
        }

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def with_ratios(self, ratios: dict[str, float], name: str | None = None) -> "Scenario":
        """Copy of this scenario whose base turning ratios are replaced."""
        data = network_to_dict(self.network)
        for node in data["intersections"]:
            for mv in node["movements"]:
                if mv["id"] in ratios:
                    mv["turning_ratio"] = ratios[mv["id"]]
        return replace(self, network=network_from_dict(data), name=name or self.name)


def scenario_from_dict(data: dict, name: str = "scenario") -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario: expected a JSON object")
    extra = set(data) - TOP_KEYS - {"name"}
    if extra:
        raise ConfigError(f"scenario: unknown top-level key(s) {sorted(extra)}")
    for key in ("network", "demand"):
        if key not in data:
            raise ConfigError(f"scenario: missing top-level key {key!r}")
    network = network_from_dict(data["network"])
    report = validate_network(network)
    if not report:
        raise ConfigError("network: " + "; ".join(report.violations))
    demand = demand_from_dict(data["demand"])
    check_demand(network, demand)
    return Scenario(
        network=network,
        demand=demand,
        signals=signal_config_from_dict(data.get("signals")),
        randomization=randomization_from_dict(data.get("randomization")),
        training=train_config_from_dict(data.get("training")),
        name=str(data.get("name", name)),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return scenario_from_dict(data, name=path.stem)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


# --- fixtures ---------------------------------------------------------------

def _node_id(r: int, c: int) -> str:
    return f"I{r}{c}"


def grid_network(rows: int, cols: int, *, spacing: float = 300.0, boundary_length: float = 300.0,
                 speed: float = 15.0, detection_range: float = 150.0,
                 arterial_ratios: dict | None = None, side_ratios: dict | None = None,
                 saturation_flow: float = 0.5, through_lanes: int = 2,
                 lengths: dict | None = None) -> NetworkSpec:
    """Grid of four-leg intersections; E-W streets are the arterials.

    Every approach has left (L), through (T) and right (R) movements. Phases:
    0 = E-W through+right, 1 = E-W protected left, 2 = N-S all movements.
    ``lengths`` may override individual link lengths by link id.
    """
    if not (1 <= rows <= 9 and 1 <= cols <= 9):
        raise ConfigError("grid dimensions must lie in 1..9")
    arterial_ratios = arterial_ratios or ARTERIAL_RATIOS
    side_ratios = side_ratios or SIDE_RATIOS
    lengths = lengths or {}
    links: dict[str, LinkSpec] = {}

    def inside(r, c):
        return 0 <= r < rows and 0 <= c < cols

    def add_link(lid, length, src, dst, lanes):
        length = lengths.get(lid, length)
        links[lid] = LinkSpec(lid, length, speed, lanes, min(detection_range, length), src, dst)

    def in_link(r, c, side):
        dr, dc = STEP[side]
        nid = _node_id(r, c)
        if inside(r + dr, c + dc):
            return f"{_node_id(r + dr, c + dc)}>{nid}"
        return f"src_{nid}_{side}"

    def out_link(r, c, side):
        dr, dc = STEP[side]
        nid = _node_id(r, c)
        if inside(r + dr, c + dc):
            return f"{nid}>{_node_id(r + dr, c + dc)}"
        return f"{nid}_exit_{side}"

    nodes = []
    for r in range(rows):
        for c in range(cols):
            nid = _node_id(r, c)
            for side in SIDES:
                lanes = through_lanes + 1 if side in "EW" else 2
                dr, dc = STEP[side]
                if inside(r + dr, c + dc):
                    add_link(f"{nid}>{_node_id(r + dr, c + dc)}", spacing, nid,
                             _node_id(r + dr, c + dc), lanes)
                else:
                    add_link(f"src_{nid}_{side}", boundary_length, None, nid, lanes)
                    add_link(f"{nid}_exit_{side}", boundary_length, nid, None, lanes)
            movements = []
            for side in SIDES:
                heading = OPPOSITE[side]
                k = SIDES.index(heading)
                turns = {"T": heading, "L": SIDES[(k - 1) % 4], "R": SIDES[(k + 1) % 4]}
                ratios = arterial_ratios if side in "EW" else side_ratios
                for turn in ("L", "T", "R"):
                    movements.append({
                        "id": f"{nid}:{side}{turn}",
                        "from_link": in_link(r, c, side),
                        "to_link": out_link(r, c, turns[turn]),
                        "lanes": through_lanes if (turn == "T" and side in "EW") else 1,
                        "turning_ratio": ratios[turn],
                        "saturation_flow": saturation_flow,
                    })
            m = lambda code: f"{nid}:{code}"  # noqa: E731
            ew = [m(s + t) for s in "WE" for t in "LTR"]
            ns = [m(s + t) for s in "NS" for t in "LTR"]
            conflicts = [(a, b) for a in ew for b in ns]
            conflicts += [(m("WL"), m("ET")), (m("EL"), m("WT"))]
            phases = [
                [m("WT"), m("WR"), m("ET"), m("ER")],
                [m("WL"), m("EL")],
                ns,
            ]
            nodes.append(dict(
                id=nid,
                movements=tuple(MovementSpec(**mv) for mv in movements),
                phases=tuple(PhaseSpec(tuple(p)) for p in phases),
                conflicts=tuple(conflicts),
            ))
    return build_network(nodes, list(links.values()))


def corridor_network(n: int, **kwargs) -> NetworkSpec:
    return grid_network(1, n, **kwargs)


def boundary_demand(spec: NetworkSpec, arterial_vph: float, side_vph: float,
                    horizon_s: int = 3600) -> DemandSpec:
    flows = []
    for lid in spec.source_links:
        side = lid.rsplit("_", 1)[-1]
        flows.append(Flow(lid, arterial_vph if side in "EW" else side_vph))
    return DemandSpec(tuple(flows), horizon_s)


def corridor_scenario(n: int = 3, arterial_vph: float = 1200.0, side_vph: float = 400.0,
                      horizon_s: int = 3600, greens=FIXTURE_GREENS,
                      training: TrainConfig | None = None, name: str | None = None,
                      **net_kwargs) -> Scenario:
    """Synthetic arterial corridor; with the defaults and ``n=3`` the total
    entering demand is 2*1200 + 6*400 = 4800 veh/h."""
    net = corridor_network(n, **net_kwargs)
    return Scenario(
        network=net,
        demand=boundary_demand(net, arterial_vph, side_vph, horizon_s),
        signals=SignalConfig(initial_green_s=tuple(greens)),
        training=training or TrainConfig(),
        name=name or f"corridor{n}",
    )


def grid_scenario(rows: int, cols: int, arterial_vph: float = 900.0, side_vph: float = 400.0,
                  horizon_s: int = 3600, greens=FIXTURE_GREENS, name: str | None = None,
                  **net_kwargs) -> Scenario:
    net = grid_network(rows, cols, **net_kwargs)
    return Scenario(
        network=net,
        demand=boundary_demand(net, arterial_vph, side_vph, horizon_s),
        signals=SignalConfig(initial_green_s=tuple(greens)),
        name=name or f"grid{rows}x{cols}",
    )


def stepped_profile(demand: DemandSpec, levels: list[tuple[float, float]],
                    links: list[str] | None = None) -> DemandSpec:
    """Replace the volume of ``links`` (default: all flows) by a step profile
    ``[(start_s, vph), ...]``."""
    flows = []
    for f in demand.flows:
        if links is None or f.source_link in links:
            flows.append(Flow(f.source_link, levels[0][1], tuple(levels)))
        else:
            flows.append(f)
    return DemandSpec(tuple(flows), demand.horizon_s)


STEPPED_LEVELS = ((0, 400.0), (1200, 1200.0), (2400, 400.0))


def stepped_scenario(n: int = 2, levels=STEPPED_LEVELS, greens=(20.0, 8.0, 12.0),
                     through_lanes: int = 1, horizon_s: int = 3600) -> Scenario:
    """Corridor whose arterial inflow follows a step profile (off-peak, peak,
    off-peak). One through lane makes the peak need visibly longer greens."""
    base = corridor_scenario(n, horizon_s=horizon_s, greens=greens, through_lanes=through_lanes)
    arterial = [l for l in base.network.source_links if l.endswith(("_E", "_W"))]
    demand = stepped_profile(base.demand, [(int(t), float(v)) for t, v in levels], arterial)
    return base.with_(demand=demand, name=f"stepped{n}")


def heldout_scenario(scenario: Scenario, shift: float = 0.25) -> Scenario:
    """Left-turn ratios scaled up by ``1 + shift`` and through ratios down by
    ``1 - shift`` (then re-normalized per approach)."""
    weights = {}
    for node in scenario.network.intersections:
        for m in node.movements:
            turn = m.id.rsplit(":", 1)[-1][-1:]
            weights[m.id] = {"L": 1.0 + shift, "T": 1.0 - shift}.get(turn, 1.0)
    return scenario.with_ratios(shift_ratios(scenario.network, weights),
                                name=f"{scenario.name}-shifted")


def random_scenario(rng: np.random.Generator, horizon_s: int = 600) -> Scenario:
    """Random small corridor or grid with random geometry, ratios and demand."""
    if rng.random() < 0.5:
        rows, cols = 1, int(rng.integers(1, 5))
    else:
        rows, cols = int(rng.integers(2, 4)), int(rng.integers(2, 4))

    def ratios():
        r = rng.dirichlet(np.ones(3))
        return {"L": float(r[0]), "T": float(r[1]), "R": float(1.0 - r[0] - r[1])}

    net = grid_network(rows, cols, spacing=float(rng.uniform(100, 500)),
                       boundary_length=float(rng.uniform(50, 400)),
                       speed=float(rng.uniform(8, 20)), arterial_ratios=ratios(),
                       side_ratios=ratios(), saturation_flow=float(rng.uniform(0.3, 0.6)))
    flows = tuple(Flow(lid, float(rng.uniform(0, 1500))) for lid in net.source_links)
    greens = tuple(float(g) for g in rng.integers(5, 60, size=3))
    return Scenario(net, DemandSpec(flows, horizon_s),
                    SignalConfig(initial_green_s=greens,
                                 yellow_s=float(rng.integers(0, 4)),
                                 all_red_s=float(rng.integers(0, 3))),
                    name=f"random{rows}x{cols}")
