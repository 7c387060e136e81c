"""Cyclic signal programs, duration-adjustment action sets and baseline controllers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Sequence

from .errors import ConfigError

if TYPE_CHECKING:
    from .network import NetworkSpec
    from .simulator import SimState

NUM_ACTIONS = 9


@dataclass(frozen=True)
class SignalProgram:
    greens: tuple[float, ...]
    yellow: float = 3.0
    all_red: float = 2.0
    g_min: float = 5.0
    g_max: float = 90.0

    def __post_init__(self):
        if not 0 < self.g_min <= self.g_max:
            raise ConfigError(f"need 0 < g_min <= g_max, got [{self.g_min}, {self.g_max}]")
        if self.yellow < 0 or self.all_red < 0:
            raise ConfigError("yellow and all_red must be >= 0")
        for g in self.greens:
            if not self.g_min <= g <= self.g_max:
                raise ConfigError(f"green {g} outside [{self.g_min}, {self.g_max}]")

    @property
    def num_phases(self) -> int:
        return len(self.greens)


@dataclass(frozen=True)
class ActionSet:
    """Nine signed green-time adjustments; index -> seconds is fixed."""

    values: tuple[float, ...]
    kind: str = "exponential"
    param: tuple = ()

    def __post_init__(self):
        v = self.values
        if len(v) != NUM_ACTIONS:
            raise ConfigError(f"action set needs {NUM_ACTIONS} entries, got {len(v)}")
        if any(a != -b for a, b in zip(v, reversed(v))) or 0 not in v:
            raise ConfigError(f"action set must be symmetric around 0: {v}")

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, index: int) -> float:
        return self.values[index]

    @property
    def zero_index(self) -> int:
        return NUM_ACTIONS // 2

    def as_set(self) -> set:
        return set(self.values)

    def to_dict(self) -> dict:
        if self.kind == "exponential":
            return {"kind": "exponential", "lambda": self.param[0]}
        return {"kind": "linear", "steps": list(self.param)}


def exponential_action_set(lam: int) -> ActionSet:
    """Adjustments ``{0, ±lam**0, ±lam**1, ±lam**2, ±lam**3}`` in ascending order.

    Duplicates are kept (``lam=1``) so the index space is always nine wide.
    """
    if isinstance(lam, bool) or int(lam) != lam or lam < 1:
        raise ConfigError(f"lambda must be an integer >= 1, got {lam!r}")
    lam = int(lam)
    mags = [lam ** k for k in range(4)]
    values = [-m for m in reversed(mags)] + [0] + mags
    return ActionSet(tuple(float(x) for x in values), "exponential", (lam,))


def linear_action_set(steps: Sequence[float]) -> ActionSet:
    steps = list(steps)
    if len(steps) != 4:
        raise ConfigError(f"linear action set needs 4 step magnitudes, got {len(steps)}")
    if any(s <= 0 for s in steps) or any(a >= b for a, b in zip(steps, steps[1:])):
        raise ConfigError(f"linear steps must be positive and ascending: {steps}")
    values = [-s for s in reversed(steps)] + [0] + steps
    return ActionSet(tuple(float(x) for x in values), "linear", tuple(steps))


def action_set_from_dict(data: dict, where: str = "signals.action_set") -> ActionSet:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    kind = data.get("kind")
    if kind == "exponential":
        if set(data) - {"kind", "lambda"}:
            raise ConfigError(f"{where}: unknown key(s) {sorted(set(data) - {'kind', 'lambda'})}")
        return exponential_action_set(data.get("lambda", 2))
    if kind == "linear":
        if set(data) - {"kind", "steps"}:
            raise ConfigError(f"{where}: unknown key(s) {sorted(set(data) - {'kind', 'steps'})}")
        return linear_action_set(data.get("steps", [2, 4, 6, 8]))
    raise ConfigError(f"{where}.kind: expected 'exponential' or 'linear', got {kind!r}")


def clip(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def apply_duration_adjustment(program: SignalProgram, phase: int, delta: float) -> SignalProgram:
    greens = list(program.greens)
    greens[phase] = clip(greens[phase] + delta, program.g_min, program.g_max)
    return replace(program, greens=tuple(greens))


@dataclass(frozen=True)
class SignalConfig:
    """Signal timing knobs shared by every intersection of a scenario."""

    yellow_s: float = 3.0
    all_red_s: float = 2.0
    g_min_s: float = 5.0
    g_max_s: float = 90.0
    # one value for all phases, or one list per phase index
    initial_green_s: float | tuple = 30.0
    action_set: ActionSet = field(default_factory=lambda: exponential_action_set(2))

    def program_for(self, num_phases: int) -> SignalProgram:
        g0 = self.initial_green_s
        if isinstance(g0, (int, float)):
            greens = (float(g0),) * num_phases
        else:
            greens = tuple(float(g0[p % len(g0)]) for p in range(num_phases))
        return SignalProgram(greens, self.yellow_s, self.all_red_s, self.g_min_s, self.g_max_s)

    def to_dict(self) -> dict:
        g0 = self.initial_green_s
        return {
            "yellow_s": self.yellow_s, "all_red_s": self.all_red_s,
            "g_min_s": self.g_min_s, "g_max_s": self.g_max_s,
            "initial_green_s": g0 if isinstance(g0, (int, float)) else list(g0),
            "action_set": self.action_set.to_dict(),
        }


def signal_config_from_dict(data: dict | None, where: str = "signals") -> SignalConfig:
    data = dict(data or {})
    allowed = {"yellow_s", "all_red_s", "g_min_s", "g_max_s", "initial_green_s", "action_set"}
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}")
    kw = {k: float(data[k]) for k in ("yellow_s", "all_red_s", "g_min_s", "g_max_s") if k in data}
    if "initial_green_s" in data:
        g0 = data["initial_green_s"]
        kw["initial_green_s"] = float(g0) if isinstance(g0, (int, float)) else tuple(float(x) for x in g0)
    if "action_set" in data:
        kw["action_set"] = action_set_from_dict(data["action_set"], f"{where}.action_set")
    cfg = SignalConfig(**kw)
    try:
        cfg.program_for(1)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return cfg


# --- controllers ------------------------------------------------------------

@dataclass
class DecisionContext:
    """What a controller sees when an intersection reaches a decision point.

    For cyclic controllers ``upcoming_phase`` is the phase whose green is about
    to be set; acyclic controllers get ``upcoming_phase=None`` and pick it.
    """

    intersection: str
    node_index: int
    ending_phase: int
    upcoming_phase: int | None
    state: "SimState"

    def queue_snapshot(self) -> dict[str, int]:
        return self.state.queue_lengths(self.intersection)


class Controller:
    """Base decision protocol.

    Cyclic controllers return an index into the episode's action set; acyclic
    ones return the phase to serve next.
    """

    cyclic = True
    name = "controller"

    def num_actions(self, state: "SimState", node_index: int) -> int:
        if self.cyclic:
            return len(state.action_set)
        return state.signals[node_index].num_phases

    def decide(self, ctx: DecisionContext) -> int:
        raise NotImplementedError

    def episode_end(self, state: "SimState") -> None:
        """Hook called once after the horizon is reached."""


class FixedTimeController(Controller):
    name = "fixtime"

    def __init__(self, action_set: ActionSet | None = None):
        self.action_set = action_set or exponential_action_set(2)

    def decide(self, ctx: DecisionContext) -> int:
        return ctx.state.action_set.zero_index


def fixed_time_controller(program: SignalProgram | None = None) -> FixedTimeController:
    # the program is carried by the simulator; adjustment 0 leaves it untouched
    return FixedTimeController()


class MaxPressureController(Controller):
    """Serve the phase with the largest upstream-minus-downstream queue pressure.

    Acyclic: decisions are taken every ``g_min`` seconds of green, and keeping
    the current phase extends its green without a clearance interval.
    """

    cyclic = False
    name = "maxpressure"

    def __init__(self, spec: "NetworkSpec"):
        self.spec = spec
        approaches = spec.approaches()
        self._phase_terms: dict[str, list[list[tuple[str, list[str]]]]] = {}
        for node in spec.intersections:
            terms = []
            for phase in node.phases:
                row = []
                for mid in phase.movements:
                    mv = node.movement(mid)
                    row.append((mid, approaches.get(mv.to_link, [])))
                terms.append(row)
            self._phase_terms[node.id] = terms

    def pressures(self, state: "SimState", node_id: str) -> list[float]:
        q = state.queue_len
        out = []
        for row in self._phase_terms[node_id]:
            total = 0.0
            for mid, downstream in row:
                down = sum(q(d) for d in downstream) / len(downstream) if downstream else 0.0
                total += q(mid) - down
            out.append(total)
        return out

    def decide(self, ctx: DecisionContext) -> int:
        pressures = self.pressures(ctx.state, ctx.intersection)
        best = 0
        for p, value in enumerate(pressures):
            if value > pressures[best]:
                best = p
        return best


def max_pressure_controller(spec: "NetworkSpec") -> MaxPressureController:
    return MaxPressureController(spec)
