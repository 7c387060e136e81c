"""Static road-network topology: links, movements, phases and adjacency.

A network is loaded once per scenario and never mutated afterwards, so the
same ``NetworkSpec`` can be shared by any number of simulator instances.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError

RATIO_TOL = 1e-9
DEFAULT_DETECTION_RANGE = 150.0


@dataclass(frozen=True)
class LinkSpec:
    id: str
    length: float
    free_flow_speed: float
    lane_count: int = 1
    detection_range: float = DEFAULT_DETECTION_RANGE
    # upstream / downstream intersection ids; None marks a network boundary
    from_node: str | None = None
    to_node: str | None = None

    @property
    def free_flow_time(self) -> float:
        return self.length / self.free_flow_speed

    @property
    def is_source(self) -> bool:
        return self.from_node is None

    @property
    def is_exit(self) -> bool:
        return self.to_node is None


@dataclass(frozen=True)
class MovementSpec:
    id: str
    from_link: str
    to_link: str
    lanes: int = 1
    turning_ratio: float = 1.0
    saturation_flow: float = 0.5  # veh/s/lane


@dataclass(frozen=True)
class PhaseSpec:
    movements: tuple[str, ...]


@dataclass(frozen=True)
class IntersectionSpec:
    id: str
    movements: tuple[MovementSpec, ...]
    phases: tuple[PhaseSpec, ...]
    conflicts: tuple[tuple[str, str], ...] = ()
    incoming_links: tuple[str, ...] = ()
    outgoing_links: tuple[str, ...] = ()
    neighbors: tuple[str, ...] = ()

    @property
    def num_phases(self) -> int:
        return len(self.phases)

    def movement(self, movement_id: str) -> MovementSpec:
        for m in self.movements:
            if m.id == movement_id:
                return m
        raise KeyError(movement_id)


@dataclass(frozen=True)
class NetworkSpec:
    intersections: tuple[IntersectionSpec, ...]
    links: tuple[LinkSpec, ...]
    _link_index: dict = field(default_factory=dict, repr=False, compare=False)
    _node_index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._link_index.update({l.id: l for l in self.links})
        self._node_index.update({n.id: n for n in self.intersections})

    @property
    def source_links(self) -> tuple[str, ...]:
        return tuple(l.id for l in self.links if l.is_source)

    @property
    def intersection_ids(self) -> list[str]:
        return sorted(self._node_index)

    def link(self, link_id: str) -> LinkSpec:
        return self._link_index[link_id]

    def intersection(self, node_id: str) -> IntersectionSpec:
        try:
            return self._node_index[node_id]
        except KeyError:
            raise KeyError(f"unknown intersection {node_id!r}") from None

    def has_link(self, link_id: str) -> bool:
        return link_id in self._link_index

    def movements(self):
        for node in self.intersections:
            yield from node.movements

    def base_ratios(self) -> dict[str, float]:
        return {m.id: m.turning_ratio for m in self.movements()}

    def approaches(self) -> dict[str, list[str]]:
        """Map each incoming link to the ids of the movements leaving it."""
        out: dict[str, list[str]] = {}
        for m in self.movements():
            out.setdefault(m.from_link, []).append(m.id)
        return out

    def max_neighbors(self) -> int:
        return max((len(n.neighbors) for n in self.intersections), default=0)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        # truthy when the network is well-formed
        return not self.violations

    def __iter__(self):
        return iter(self.violations)

    def __len__(self) -> int:
        return len(self.violations)


def neighbors_of(spec: NetworkSpec, node_id: str) -> list[str]:
    """Intersections joined to ``node_id`` by a single link, ascending by id."""
    spec.intersection(node_id)  # raises on unknown id
    found = set()
    for l in spec.links:
        if l.from_node is None or l.to_node is None:
            continue
        if l.from_node == node_id and l.to_node != node_id:
            found.add(l.to_node)
        elif l.to_node == node_id and l.from_node != node_id:
            found.add(l.from_node)
    return sorted(found)


def validate_network(spec: NetworkSpec) -> ValidationReport:
    report = ValidationReport()
    bad = report.violations
    link_ids = set()
    for l in spec.links:
        if l.id in link_ids:
            bad.append(f"link {l.id}: duplicate id")
        link_ids.add(l.id)
        if not l.length > 0:
            bad.append(f"link {l.id}: length must be > 0")
        if not l.free_flow_speed > 0:
            bad.append(f"link {l.id}: free_flow_speed must be > 0")
        if l.lane_count < 1:
            bad.append(f"link {l.id}: lane_count must be >= 1")
        if not (0 < l.detection_range <= l.length):
            bad.append(f"link {l.id}: detection_range must lie in (0, length]")
        for end in (l.from_node, l.to_node):
            if end is not None and end not in spec._node_index:
                bad.append(f"link {l.id}: unknown intersection {end!r}")

    node_ids = [n.id for n in spec.intersections]
    if len(set(node_ids)) != len(node_ids):
        bad.append("duplicate intersection ids")

    for node in spec.intersections:
        mids = [m.id for m in node.movements]
        if not node.phases:
            bad.append(f"intersection {node.id}: no phases")
        in_phase = set()
        for p, phase in enumerate(node.phases):
            for mid in phase.movements:
                if mid not in mids:
                    bad.append(f"intersection {node.id} phase {p}: unknown movement {mid!r}")
                in_phase.add(mid)
        for mid in mids:
            if mid not in in_phase:
                bad.append(f"movement {mid}: not served by any phase")
        conflicts = {frozenset(c) for c in node.conflicts}
        for p, phase in enumerate(node.phases):
            ms = phase.movements
            for a in range(len(ms)):
                for b in range(a + 1, len(ms)):
                    if frozenset((ms[a], ms[b])) in conflicts:
                        bad.append(f"intersection {node.id} phase {p}: "
                                   f"conflicting movements {ms[a]} and {ms[b]}")
        for m in node.movements:
            for end in (m.from_link, m.to_link):
                if end not in link_ids:
                    bad.append(f"movement {m.id}: unknown link {end!r}")
            if m.from_link in link_ids and spec.link(m.from_link).to_node != node.id:
                bad.append(f"movement {m.id}: link {m.from_link} does not enter {node.id}")
            if m.to_link in link_ids and spec.link(m.to_link).from_node != node.id:
                bad.append(f"movement {m.id}: link {m.to_link} does not leave {node.id}")
            if not m.saturation_flow > 0:
                bad.append(f"movement {m.id}: saturation_flow must be > 0")
            if m.lanes < 1:
                bad.append(f"movement {m.id}: lanes must be >= 1")
            if not 0.0 <= m.turning_ratio <= 1.0:
                bad.append(f"movement {m.id}: turning ratio {m.turning_ratio} outside [0, 1]")

    for link_id, mids in spec.approaches().items():
        total = sum(spec_movement(spec, mid).turning_ratio for mid in mids)
        if abs(total - 1.0) > RATIO_TOL:
            bad.append(f"approach {link_id}: turning ratios sum {total:.6g} != 1")

    for l in spec.links:
        if l.to_node is not None and l.id not in spec.approaches():
            bad.append(f"link {l.id}: enters {l.to_node} but has no movements")

    if spec.intersections and not _connected(spec):
        bad.append("network: intersection graph is not connected")
    return report


def spec_movement(spec: NetworkSpec, movement_id: str) -> MovementSpec:
    for m in spec.movements():
        if m.id == movement_id:
            return m
    raise KeyError(movement_id)


def _connected(spec: NetworkSpec) -> bool:
    ids = [n.id for n in spec.intersections]
    adj = {i: set() for i in ids}
    for l in spec.links:
        if l.from_node in adj and l.to_node in adj:
            adj[l.from_node].add(l.to_node)
            adj[l.to_node].add(l.from_node)
    seen = {ids[0]}
    todo = deque([ids[0]])
    while todo:
        for nxt in adj[todo.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return len(seen) == len(ids)


# --- JSON (de)serialization -------------------------------------------------

_LINK_KEYS = {"id", "length", "free_flow_speed", "lane_count", "detection_range", "from", "to"}
_MOVE_KEYS = {"id", "from_link", "to_link", "lanes", "turning_ratio", "saturation_flow"}
_NODE_KEYS = {"id", "movements", "phases", "conflicts"}


def _strict(obj: Any, allowed: set, where: str, required: set = frozenset()) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}")
    missing = set(required) - set(obj)
    if missing:
        raise ConfigError(f"{where}: missing key(s) {sorted(missing)}")


def network_from_dict(data: dict, where: str = "network") -> NetworkSpec:
    """Build a ``NetworkSpec`` from its JSON form; derived fields are filled in."""
    _strict(data, {"intersections", "links"}, where, {"intersections", "links"})
    links = []
    for k, raw in enumerate(data["links"]):
        path = f"{where}.links[{k}]"
        _strict(raw, _LINK_KEYS, path, {"id", "length", "free_flow_speed"})
        try:
            length = float(raw["length"])
            links.append(LinkSpec(
                id=str(raw["id"]),
                length=length,
                free_flow_speed=float(raw["free_flow_speed"]),
                lane_count=int(raw.get("lane_count", 1)),
                detection_range=float(raw.get("detection_range",
                                              min(DEFAULT_DETECTION_RANGE, length))),
                from_node=raw.get("from"),
                to_node=raw.get("to"),
            ))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None

    nodes = []
    for k, raw in enumerate(data["intersections"]):
        path = f"{where}.intersections[{k}]"
        _strict(raw, _NODE_KEYS, path, {"id", "movements", "phases"})
        movements = []
        for j, mv in enumerate(raw["movements"]):
            mpath = f"{path}.movements[{j}]"
            _strict(mv, _MOVE_KEYS, mpath, {"id", "from_link", "to_link"})
            try:
                movements.append(MovementSpec(
                    id=str(mv["id"]),
                    from_link=str(mv["from_link"]),
                    to_link=str(mv["to_link"]),
                    lanes=int(mv.get("lanes", 1)),
                    turning_ratio=float(mv.get("turning_ratio", 1.0)),
                    saturation_flow=float(mv.get("saturation_flow", 0.5)),
                ))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{mpath}: {exc}") from None
        phases = []
        for j, ph in enumerate(raw["phases"]):
            if isinstance(ph, dict):
                _strict(ph, {"movements"}, f"{path}.phases[{j}]", {"movements"})
                ph = ph["movements"]
            phases.append(PhaseSpec(tuple(str(x) for x in ph)))
        conflicts = tuple(tuple(str(x) for x in pair) for pair in raw.get("conflicts", []))
        nodes.append(dict(id=str(raw["id"]), movements=tuple(movements),
                          phases=tuple(phases), conflicts=conflicts))
    return build_network(nodes, links)


def build_network(nodes: list[dict], links: list[LinkSpec]) -> NetworkSpec:
    """Assemble a network, deriving incoming/outgoing links and neighbor sets."""
    bare = NetworkSpec(
        intersections=tuple(IntersectionSpec(**n) for n in nodes),
        links=tuple(links),
    )
    full = []
    for n in nodes:
        nid = n["id"]
        full.append(IntersectionSpec(
            **n,
            incoming_links=tuple(l.id for l in links if l.to_node == nid),
            outgoing_links=tuple(l.id for l in links if l.from_node == nid),
            neighbors=tuple(neighbors_of(bare, nid)),
        ))
    full.sort(key=lambda node: node.id)
    return NetworkSpec(intersections=tuple(full), links=tuple(links))


def network_to_dict(spec: NetworkSpec) -> dict:
    links = []
    for l in spec.links:
        links.append({
            "id": l.id, "length": l.length, "free_flow_speed": l.free_flow_speed,
            "lane_count": l.lane_count, "detection_range": l.detection_range,
            "from": l.from_node, "to": l.to_node,
        })
    nodes = []
    for n in spec.intersections:
        nodes.append({
            "id": n.id,
            "movements": [{
                "id": m.id, "from_link": m.from_link, "to_link": m.to_link,
                "lanes": m.lanes, "turning_ratio": m.turning_ratio,
                "saturation_flow": m.saturation_flow,
            } for m in n.movements],
            "phases": [list(p.movements) for p in n.phases],
            "conflicts": [list(c) for c in n.conflicts],
        })
    return {"intersections": nodes, "links": links}
