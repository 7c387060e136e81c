"""Deterministic point-queue traffic simulator with a 1 s time step.

Vehicles cross a link at free-flow speed, then wait in a vertical queue at
the stop line of the movement they were assigned on arrival. A movement under
green discharges ``saturation_flow * lanes`` vehicles per second; the
fractional part is carried between steps. Downstream capacity is unbounded.

Every step performs, in order: arrivals, link traversal, queue discharge,
signal bookkeeping, metric accumulation.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, ProtocolError, SimulationError
from .network import NetworkSpec
from .signals import (ActionSet, Controller, DecisionContext, SignalConfig, SignalProgram,
                      clip)

GREEN, YELLOW, ALL_RED = "green", "yellow", "all_red"
DT = 1


# --- demand -----------------------------------------------------------------

@dataclass(frozen=True)
class Flow:
    source_link: str
    volume_vph: float
    # optional piecewise-constant profile: ((start_s, vph), ...) sorted by start
    profile: tuple = ()

    def rate_at(self, t: float) -> float:
        vph = self.volume_vph
        for start, value in self.profile:
            if t >= start:
                vph = value
            else:
                break
        return vph / 3600.0


@dataclass(frozen=True)
class DemandSpec:
    flows: tuple[Flow, ...]
    horizon_s: int = 3600

    def scaled(self, factor: float) -> "DemandSpec":
        return DemandSpec(tuple(Flow(f.source_link, f.volume_vph * factor,
                                     tuple((s, v * factor) for s, v in f.profile))
                                for f in self.flows), self.horizon_s)

    def to_dict(self) -> dict:
        flows = []
        for f in self.flows:
            row = {"source_link": f.source_link, "volume_vph": f.volume_vph}
            if f.profile:
                row["profile"] = [{"start_s": s, "volume_vph": v} for s, v in f.profile]
            flows.append(row)
        return {"flows": flows, "horizon_s": self.horizon_s}


def demand_from_dict(data: dict, where: str = "demand") -> DemandSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(data) - {"flows", "horizon_s"}
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}")
    flows = []
    for k, raw in enumerate(data.get("flows", [])):
        path = f"{where}.flows[{k}]"
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected an object")
        extra = set(raw) - {"source_link", "volume_vph", "profile"}
        if extra:
            raise ConfigError(f"{path}: unknown key(s) {sorted(extra)}")
        if "source_link" not in raw:
            raise ConfigError(f"{path}: missing key 'source_link'")
        profile = []
        for j, step in enumerate(raw.get("profile", [])):
            if set(step) != {"start_s", "volume_vph"}:
                raise ConfigError(f"{path}.profile[{j}]: expected keys start_s, volume_vph")
            profile.append((float(step["start_s"]), float(step["volume_vph"])))
        profile.sort()
        flows.append(Flow(str(raw["source_link"]), float(raw.get("volume_vph", 0.0)),
                          tuple(profile)))
    horizon = data.get("horizon_s", 3600)
    if int(horizon) != horizon or horizon <= 0:
        raise ConfigError(f"{where}.horizon_s: expected a positive integer, got {horizon!r}")
    return DemandSpec(tuple(flows), int(horizon))


def check_demand(spec: NetworkSpec, demand: DemandSpec) -> None:
    sources = set(spec.source_links)
    for k, f in enumerate(demand.flows):
        if f.source_link not in sources:
            raise ConfigError(f"demand.flows[{k}]: {f.source_link!r} is not a source link")
        for vph in (f.volume_vph, *(v for _, v in f.profile)):
            if vph < 0:
                raise ConfigError(f"demand.flows[{k}]: negative volume {vph}")
            if vph / 3600.0 >= 1.0 / DT:
                raise ConfigError(f"demand.flows[{k}]: {vph} vph exceeds one vehicle per step")


# --- runtime objects ----------------------------------------------------------

class Vehicle:
    __slots__ = ("id", "entry_time", "link", "stop_time", "movement", "queued_since",
                 "cumulative_wait", "exit_time", "free_flow_time")

    def __init__(self, vid: int, entry_time: int):
        self.id = vid
        self.entry_time = entry_time
        self.link: str | None = None
        self.stop_time = 0
        self.movement: str | None = None
        self.queued_since = 0
        self.cumulative_wait = 0
        self.exit_time: int | None = None
        self.free_flow_time = 0.0

    def wait_at(self, clock: int) -> int:
        if self.movement is not None:
            return self.cumulative_wait + (clock - self.queued_since)
        return self.cumulative_wait


class _Movement:
    __slots__ = ("id", "node", "from_link", "to_link", "rate", "queue", "acc", "arrivals",
                 "exit")

    def __init__(self, spec, node: int, exits: bool):
        self.id = spec.id
        self.node = node
        self.from_link = spec.from_link
        self.to_link = spec.to_link
        self.rate = spec.saturation_flow * spec.lanes * DT
        self.queue: deque[Vehicle] = deque()
        self.acc = 0.0
        self.arrivals = 0
        self.exit = exits


class _Link:
    __slots__ = ("id", "steps", "free_flow_time", "speed", "detection_range", "traffic",
                 "movements", "cum_ratios", "node", "on_link")

    def __init__(self, spec):
        self.id = spec.id
        self.steps = max(1, math.ceil(spec.length / spec.free_flow_speed / DT - 1e-9))
        self.free_flow_time = spec.free_flow_time
        self.speed = spec.free_flow_speed
        self.detection_range = spec.detection_range
        self.traffic: deque[Vehicle] = deque()
        self.movements: list[_Movement] = []
        self.cum_ratios: list[float] = []
        self.node = -1  # index of downstream intersection, -1 for exits
        self.on_link = 0  # traversing + queued vehicles


@dataclass
class SignalRuntime:
    node_id: str
    program: SignalProgram
    greens: list = field(default_factory=list)
    phase_index: int = 0
    interval: str = GREEN
    elapsed_in_interval: int = 0
    elapsed_in_phase: int = 0
    pending: bool = False
    acyclic: bool = False
    next_phase: int | None = None
    slot_elapsed: int = 0
    # (phase, green_start, green_served, phase_arrivals_at_start) per service
    history: list = field(default_factory=list)

    @property
    def num_phases(self) -> int:
        return self.program.num_phases

    @property
    def current_green(self) -> float:
        return self.greens[self.phase_index]


@dataclass
class MetricsAccumulator:
    completed: int = 0
    injected: int = 0
    sum_travel_time: float = 0.0
    sum_wait_time: float = 0.0
    sum_delay: float = 0.0
    queue_series: list = field(default_factory=list)


@dataclass(frozen=True)
class MetricsReport:
    att: float | None
    awt: float | None
    ad: float | None
    vc: float
    completed: int
    injected: int
    horizon_s: int

    def as_row(self) -> dict:
        return {"ATT": self.att, "AWT": self.awt, "AD": self.ad, "VC": self.vc}


@dataclass
class StepReport:
    clock: int
    arrivals: int
    released: int
    exited: int
    decisions: list  # node indices waiting for a controller decision


class SimState:
    """Mutable world state. One instance per episode, owned by a single caller."""

    def __init__(self, spec: NetworkSpec, demand: DemandSpec, seed: int,
                 signals: SignalConfig | None = None, ratios: dict | None = None,
                 acyclic: bool = False, log_events: bool = False):
        check_demand(spec, demand)
        self.spec = spec
        self.demand = demand
        self.seed = seed
        self.signal_config = signals or SignalConfig()
        self.action_set: ActionSet = self.signal_config.action_set
        self.clock = 0
        arrival_seq, turn_seq = np.random.SeedSequence(seed).spawn(2)
        self.rng_arrival = np.random.default_rng(arrival_seq)
        self.rng_turn = np.random.default_rng(turn_seq)
        self.metrics = MetricsAccumulator()
        self.vehicles: dict[int, Vehicle] = {}
        self.exited = 0
        self.events: list | None = [] if log_events else None
        self.node_ids = [n.id for n in spec.intersections]
        self.node_index = {nid: k for k, nid in enumerate(self.node_ids)}

        self.ratios = dict(spec.base_ratios())
        if ratios:
            self.ratios.update(ratios)

        self.links: dict[str, _Link] = {l.id: _Link(l) for l in spec.links}
        self.movements: dict[str, _Movement] = {}
        self.node_movements: list[list[_Movement]] = []
        self.phase_movements: list[list[list[_Movement]]] = []
        for k, node in enumerate(spec.intersections):
            mv = []
            for m in node.movements:
                rt = _Movement(m, k, spec.link(m.to_link).is_exit)
                self.movements[m.id] = rt
                mv.append(rt)
                self.links[m.from_link].movements.append(rt)
            self.node_movements.append(mv)
            self.phase_movements.append([[self.movements[mid] for mid in ph.movements]
                                         for ph in node.phases])
            for lid in node.incoming_links:
                self.links[lid].node = k
        for link in self.links.values():
            total = 0.0
            for rt in link.movements:
                total += self.ratios[rt.id]
                link.cum_ratios.append(total)
            if link.movements and abs(total - 1.0) > 1e-6:
                raise ConfigError(f"approach {link.id}: turning ratios sum {total} != 1")
        self.incoming: list[list[_Link]] = [[self.links[l] for l in node.incoming_links]
                                            for node in spec.intersections]
        self.sources = [(self.links[f.source_link], f) for f in demand.flows]

        self._green: list[list[_Movement]] = [[] for _ in spec.intersections]
        self.signals: list[SignalRuntime] = []
        for node in spec.intersections:
            program = self.signal_config.program_for(node.num_phases)
            sig = SignalRuntime(node.id, program, list(program.greens), acyclic=acyclic)
            self.signals.append(sig)
            self._start_green(k=len(self.signals) - 1, phase=0)

        n = len(self.node_ids)
        # cumulative per-intersection counters used by rewards
        self.cum_wait = [0] * n      # queued vehicle-seconds on incoming links
        self.cum_travel = [0] * n    # vehicle-seconds present on incoming links
        self.cum_exits = [0] * n     # vehicles released across the stop lines

    # --- small queries ---------------------------------------------------

    def queue_len(self, movement_id: str) -> int:
        return len(self.movements[movement_id].queue)

    def queue_lengths(self, node_id: str) -> dict[str, int]:
        k = self.node_index[node_id]
        return {rt.id: len(rt.queue) for rt in self.node_movements[k]}

    def in_transit(self) -> int:
        return sum(len(l.traffic) for l in self.links.values())

    def queued(self) -> int:
        return sum(len(m.queue) for m in self.movements.values())

    def in_network(self) -> int:
        return self.in_transit() + self.queued()

    def approaching(self, link_id: str) -> int:
        """Traversing vehicles within the link's detection range of the stop line."""
        link = self.links[link_id]
        horizon = link.detection_range / link.speed
        n = 0
        # traffic is ordered by stop_time, so the nearest vehicles come first
        for v in link.traffic:
            if v.stop_time - self.clock <= horizon:
                n += 1
            else:
                break
        return n

    def spawn(self, link_id: str) -> Vehicle:
        """Inject one vehicle at the upstream end of ``link_id`` now.

        Counts as an injection like a demand arrival; handy for scripted
        experiments and tests.
        """
        vid = self.metrics.injected
        self.metrics.injected += 1
        v = Vehicle(vid, self.clock)
        self.vehicles[vid] = v
        self._enter_link(v, self.links[link_id], self.clock)
        if self.events is not None:
            self._log("enter", vid, link_id)
        return v

    def counters(self) -> "Snapshot":
        moving, total = [], []
        for links in self.incoming:
            t = sum(l.on_link for l in links)
            m = sum(len(l.traffic) for l in links)
            moving.append(m)
            total.append(t)
        return Snapshot(self.clock, tuple(self.cum_wait), tuple(self.cum_travel),
                        tuple(self.cum_exits), tuple(moving), tuple(total))

    def _log(self, event: str, vid: int, where: str) -> None:
        self.events.append((self.clock, event, vid, where))

    # --- signal helpers ----------------------------------------------------

    def _start_green(self, k: int, phase: int) -> None:
        sig = self.signals[k]
        sig.phase_index = phase
        sig.interval = GREEN
        sig.elapsed_in_interval = 0
        sig.elapsed_in_phase = 0
        sig.slot_elapsed = 0
        sig.next_phase = None
        arrivals = sum(m.arrivals for m in self.phase_movements[k][phase])
        sig.history.append([phase, self.clock, 0, arrivals])
        self._refresh_green(k)

    def _refresh_green(self, k: int) -> None:
        sig = self.signals[k]
        self._green[k] = self.phase_movements[k][sig.phase_index] if sig.interval == GREEN else []

    def _end_green(self, k: int) -> None:
        sig = self.signals[k]
        sig.history[-1][2] = sig.elapsed_in_interval
        sig.interval = YELLOW
        sig.elapsed_in_interval = 0
        self._green[k] = []

    def resolve_cyclic(self, k: int, delta: float) -> None:
        """Apply a green adjustment to the upcoming phase and start it."""
        sig = self.signals[k]
        nxt = (sig.phase_index + 1) % sig.num_phases
        prog = sig.program
        sig.greens[nxt] = clip(sig.greens[nxt] + delta, prog.g_min, prog.g_max)
        sig.pending = False
        self._start_green(k, nxt)

    def resolve_acyclic(self, k: int, phase: int) -> None:
        sig = self.signals[k]
        sig.pending = False
        if phase == sig.phase_index:
            sig.slot_elapsed = 0
            return
        sig.next_phase = phase
        self._end_green(k)
        self._advance_clearance(k)

    def _advance_clearance(self, k: int) -> None:
        """Skip zero-length clearance intervals."""
        sig = self.signals[k]
        prog = sig.program
        if sig.interval == YELLOW and sig.elapsed_in_interval >= prog.yellow:
            sig.interval = ALL_RED
            sig.elapsed_in_interval = 0
        if sig.interval == ALL_RED and sig.elapsed_in_interval >= prog.all_red:
            if sig.acyclic:
                self._start_green(k, sig.next_phase)
            else:
                sig.pending = True

    def _resolve_defaults(self) -> None:
        for k, sig in enumerate(self.signals):
            if sig.pending:
                if sig.acyclic:
                    self.resolve_acyclic(k, sig.phase_index)
                else:
                    self.resolve_cyclic(k, 0.0)

    # --- the transition function ------------------------------------------

    def step(self) -> StepReport:
        self._resolve_defaults()
        clock = self.clock
        log = self.events is not None
        metrics = self.metrics

        # (1) arrivals
        arrivals = 0
        if self.sources:
            draws = self.rng_arrival.random(len(self.sources))
            for (link, flow), u in zip(self.sources, draws):
                if u < flow.rate_at(clock):
                    vid = metrics.injected
                    metrics.injected += 1
                    v = Vehicle(vid, clock)
                    self.vehicles[vid] = v
                    self._enter_link(v, link, clock)
                    arrivals += 1
                    if log:
                        self._log("enter", vid, link.id)

        # (2) traversal: vehicles reaching the stop line pick their movement
        for link in self.links.values():
            traffic = link.traffic
            while traffic and traffic[0].stop_time <= clock:
                v = traffic.popleft()
                moves = link.movements
                if len(moves) == 1:
                    rt = moves[0]
                else:
                    u = self.rng_turn.random()
                    rt = moves[-1]
                    for cand, edge in zip(moves, link.cum_ratios):
                        if u < edge:
                            rt = cand
                            break
                v.movement = rt.id
                v.queued_since = clock
                rt.queue.append(v)
                rt.arrivals += 1
                if log:
                    self._log("queue", v.id, rt.id)

        # (3) discharge under green
        released = exited = 0
        for k, greens in enumerate(self._green):
            for rt in greens:
                q = rt.queue
                if not q:
                    rt.acc = 0.0
                    continue
                rt.acc += rt.rate
                n = min(int(rt.acc), len(q))
                rt.acc -= n
                for _ in range(n):
                    v = q.popleft()
                    v.cumulative_wait += clock - v.queued_since
                    v.movement = None
                    self.links[rt.from_link].on_link -= 1
                    if log:
                        self._log("release", v.id, rt.id)
                    if rt.exit:
                        self._exit(v, clock)
                        exited += 1
                        if log:
                            self._log("exit", v.id, rt.to_link)
                    else:
                        self._enter_link(v, self.links[rt.to_link], clock)
                        if log:
                            self._log("enter", v.id, rt.to_link)
                released += n
                self.cum_exits[k] += n
                if not q:
                    rt.acc = 0.0

        # (4) signal bookkeeping
        decisions = []
        for k, sig in enumerate(self.signals):
            sig.elapsed_in_interval += 1
            sig.elapsed_in_phase += 1
            prog = sig.program
            if sig.interval == GREEN:
                if sig.acyclic:
                    sig.slot_elapsed += 1
                    if sig.slot_elapsed >= prog.g_min:
                        sig.history[-1][2] = sig.elapsed_in_interval
                        sig.pending = True
                        decisions.append(k)
                elif sig.elapsed_in_interval >= sig.greens[sig.phase_index]:
                    self._end_green(k)
                    self._advance_clearance(k)
                    if sig.pending:
                        decisions.append(k)
            elif sig.interval == YELLOW:
                if sig.elapsed_in_interval >= prog.yellow:
                    sig.interval = ALL_RED
                    sig.elapsed_in_interval = 0
                    self._advance_clearance(k)
                    if sig.pending:
                        decisions.append(k)
            elif sig.elapsed_in_interval >= prog.all_red:
                self._advance_clearance(k)
                if sig.pending:
                    decisions.append(k)

        # (5) metrics: queued vehicles gain DT of waiting
        total_q = 0
        for k, moves in enumerate(self.node_movements):
            nq = 0
            for rt in moves:
                nq += len(rt.queue)
            self.cum_wait[k] += nq
            total_q += nq
            self.cum_travel[k] += sum(l.on_link for l in self.incoming[k])
        metrics.queue_series.append(total_q)

        self.clock = clock + DT
        return StepReport(clock, arrivals, released, exited, decisions)

    def _enter_link(self, v: Vehicle, link: _Link, clock: int) -> None:
        if link.traffic and link.traffic[-1].stop_time > clock + link.steps:
            raise SimulationError(f"FIFO violated on link {link.id}")
        v.link = link.id
        v.stop_time = clock + link.steps
        v.free_flow_time += link.free_flow_time
        link.traffic.append(v)
        link.on_link += 1

    def _exit(self, v: Vehicle, clock: int) -> None:
        v.exit_time = clock
        v.link = None
        self.exited += 1
        m = self.metrics
        travel = clock - v.entry_time
        m.completed += 1
        m.sum_travel_time += travel
        m.sum_wait_time += v.cumulative_wait
        m.sum_delay += travel - v.free_flow_time


@dataclass(frozen=True)
class Snapshot:
    """Cumulative per-intersection counters at one instant."""

    clock: int
    wait: tuple
    travel: tuple
    exits: tuple
    moving: tuple
    total: tuple


def reset(spec: NetworkSpec, demand: DemandSpec, seed: int, **kwargs) -> SimState:
    return SimState(spec, demand, seed, **kwargs)


def step(state: SimState) -> StepReport:
    return state.step()


def metrics_report(acc: MetricsAccumulator, horizon: int) -> MetricsReport:
    if horizon <= 0:
        raise ConfigError("horizon must be > 0")
    vc = acc.completed * 3600.0 / horizon
    if acc.completed == 0:
        return MetricsReport(None, None, None, 0.0, 0, acc.injected, horizon)
    n = acc.completed
    return MetricsReport(acc.sum_travel_time / n, acc.sum_wait_time / n, acc.sum_delay / n,
                         vc, n, acc.injected, horizon)


def run_episode(state: SimState, controller: Controller, horizon: int | None = None,
                on_step: Callable[[SimState, StepReport], None] | None = None) -> MetricsReport:
    """Advance ``state`` to ``horizon`` seconds, consulting ``controller`` at
    every decision point. The state is left at the horizon afterwards."""
    horizon = state.demand.horizon_s if horizon is None else horizon
    if horizon <= 0:
        raise ConfigError("horizon must be > 0")
    for sig in state.signals:
        if sig.acyclic != (not controller.cyclic):
            raise ProtocolError(f"{controller.name}: simulator built with acyclic={sig.acyclic}")
    while state.clock < horizon:
        report = state.step()
        if on_step is not None:
            on_step(state, report)
        for k in report.decisions:
            sig = state.signals[k]
            upcoming = None if sig.acyclic else (sig.phase_index + 1) % sig.num_phases
            ctx = DecisionContext(state.node_ids[k], k, sig.phase_index, upcoming, state)
            action = controller.decide(ctx)
            limit = controller.num_actions(state, k)
            if not (isinstance(action, (int, np.integer)) and 0 <= action < limit):
                raise ProtocolError(f"{controller.name} returned action {action!r} at "
                                    f"{ctx.intersection}; expected an index in [0, {limit})")
            if sig.acyclic:
                state.resolve_acyclic(k, int(action))
            else:
                state.resolve_cyclic(k, state.action_set[int(action)])
    controller.episode_end(state)
    return metrics_report(state.metrics, horizon)


def make_state(scenario, seed: int, controller: Controller | None = None,
               ratios: dict | None = None, log_events: bool = False) -> SimState:
    """Build a fresh state for ``scenario`` matching the controller's mode."""
    acyclic = controller is not None and not controller.cyclic
    return SimState(scenario.network, scenario.demand, seed, signals=scenario.signals,
                    ratios=ratios, acyclic=acyclic, log_events=log_events)
