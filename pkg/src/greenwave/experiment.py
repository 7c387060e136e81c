"""Experiment plans: train, evaluate, compare and trace runs that write CSVs.

Every command is first resolved into an :class:`ExperimentPlan` holding
everything the run depends on (the full scenario documents, the resolved
training config, checkpoint hashes). The plan is written next to the outputs
as ``lock.json``; ``run_plan(load_lock(path))`` repeats the run and produces
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .errors import ConfigError, JoinError
from .marl.checkpoint import load_checkpoint, save_checkpoint
from .marl.config import train_config_from_dict
from .marl.trainer import ObservationAdapter, PolicyController, parallel_map, train
from .randomization import randomization_from_dict
from .scenario import Scenario, scenario_from_dict
from .signals import FixedTimeController, MaxPressureController
from .simulator import make_state, run_episode

LOCK_FORMAT = "greenwave-lock"
METRICS = ("ATT", "AWT", "AD", "VC")
EVAL_HEADER = ("controller", "demand", "seed") + METRICS
CURVE_HEADER = ("iteration", "mean_reward", "eval_awt")
TRACE_HEADER = ("cycle", "green_s", "vehicle_count")
COMPARE_HEADER = ("demand", "run", "controller") + METRICS + tuple("d" + m for m in METRICS) + ("best",)
BASELINES = ("fixtime", "maxpressure")
DEFAULT_REPLICATIONS = 15
COMMANDS = ("train", "eval", "compare", "trace")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def fmt2(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if abs(x) < 0.005:
        x = 0.0  # no "-0.00"
    return f"{x:.2f}"


def fmt_full(x) -> str:
    return "" if x is None else repr(float(x))


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass(frozen=True)
class ControllerRef:
    name: str
    kind: str  # fixtime | maxpressure | checkpoint
    path: str | None = None
    sha256: str | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "path": self.path, "sha256": self.sha256}


def parse_controller(text: str) -> ControllerRef:
    """``fixtime``, ``maxpressure``, ``ckpt.json`` or ``name=ckpt.json``."""
    if text in BASELINES:
        return ControllerRef(text, text)
    name, _, path = text.rpartition("=")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"controller {text!r}: no such checkpoint file")
    return ControllerRef(name or p.stem, "checkpoint", str(p.resolve()), sha256_file(p))


@dataclass(frozen=True)
class ExperimentPlan:
    command: str
    out: str
    scenario: dict
    scenario_path: str | None = None
    seed: int = 0
    replications: int = DEFAULT_REPLICATIONS
    controllers: tuple = ()  # ControllerRef
    demands: tuple = ()  # (name, scenario document)
    training: dict | None = None
    randomization: dict | None = None
    trace: dict | None = None  # {"intersection": id, "phase": index}
    inputs: tuple = ()  # (label, path, sha256) of eval CSVs to compare
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"plan: unknown command {self.command!r}")
        if self.replications < 1:
            raise ConfigError(f"plan: replications must be >= 1, got {self.replications}")
        for c in self.controllers:
            if c.path is not None and not Path(c.path).is_file():
                raise ConfigError(f"plan: checkpoint {c.path} does not exist")
        for _, path, _ in self.inputs:
            if not Path(path).is_file():
                raise ConfigError(f"plan: input {path} does not exist")

    def to_dict(self) -> dict:
        return {
            "format": LOCK_FORMAT,
            "version": 1,
            "command": self.command,
            "out": self.out,
            "scenario_path": self.scenario_path,
            "seed": self.seed,
            "replications": self.replications,
            "controllers": [c.to_dict() for c in self.controllers],
            "demands": [{"name": n, "scenario": d} for n, d in self.demands],
            "training": self.training,
            "randomization": self.randomization,
            "trace": self.trace,
            "inputs": [{"label": l, "path": p, "sha256": h} for l, p, h in self.inputs],
            "scenario": self.scenario,
            "extra": self.extra,
        }


def plan_from_dict(doc: dict, out: str | None = None) -> ExperimentPlan:
    if doc.get("format") != LOCK_FORMAT or doc.get("version") != 1:
        raise ConfigError("lockfile: not a version-1 greenwave lock")
    controllers = tuple(ControllerRef(**c) for c in doc["controllers"])
    for c in controllers:
        if c.path is not None and Path(c.path).is_file() and sha256_file(c.path) != c.sha256:
            raise ConfigError(f"lockfile: checkpoint {c.path} changed since the lock was written")
    inputs = tuple((i["label"], i["path"], i["sha256"]) for i in doc["inputs"])
    for _, path, digest in inputs:
        if Path(path).is_file() and sha256_file(path) != digest:
            raise ConfigError(f"lockfile: input {path} changed since the lock was written")
    return ExperimentPlan(
        command=doc["command"],
        out=out or doc["out"],
        scenario=doc["scenario"],
        scenario_path=doc.get("scenario_path"),
        seed=int(doc["seed"]),
        replications=int(doc["replications"]),
        controllers=controllers,
        demands=tuple((d["name"], d["scenario"]) for d in doc["demands"]),
        training=doc.get("training"),
        randomization=doc.get("randomization"),
        trace=doc.get("trace"),
        inputs=inputs,
        extra=doc.get("extra") or {},
    )


def load_lock(path, out: str | None = None) -> ExperimentPlan:
    return plan_from_dict(json.loads(Path(path).read_text()), out)


def write_lock(plan: ExperimentPlan) -> Path:
    path = Path(plan.out) / "lock.json"
    path.write_text(json.dumps(plan.to_dict(), indent=1, sort_keys=True) + "\n")
    return path


# --- controllers -------------------------------------------------------------

def build_controller(ref: ControllerRef, scenario: Scenario):
    if ref.kind == "fixtime":
        return FixedTimeController()
    if ref.kind == "maxpressure":
        return MaxPressureController(scenario.network)
    policy, _, meta = load_checkpoint(ref.path)
    config = train_config_from_dict(meta.get("training"), f"{ref.path}:meta.training")
    return PolicyController(policy, ObservationAdapter(scenario.network, config), "greedy")


def evaluation_seeds(seed: int, replications: int) -> list[int]:
    return [seed + r for r in range(replications)]


def _eval_job(job):
    ref, scenario_doc, seed = job
    scenario = scenario_from_dict(scenario_doc)
    ctrl = build_controller(ref, scenario)
    # randomization is never applied at evaluation time
    return run_episode(make_state(scenario, seed, ctrl), ctrl)


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


# --- commands ----------------------------------------------------------------

def run_train(plan: ExperimentPlan) -> list[Path]:
    scenario = scenario_from_dict(plan.scenario)
    config = train_config_from_dict(plan.training)
    randomization = randomization_from_dict(plan.randomization)
    result = train(scenario, config, randomization)
    out = Path(plan.out)
    meta = {"scenario": scenario.name, "training": config.to_dict(),
            "randomization": randomization.to_dict()}
    ckpt = out / "checkpoint.json"
    save_checkpoint(ckpt, result.policy, result.critic, meta)
    curve = out / "curve.csv"
    write_csv(curve, CURVE_HEADER,
              [(it, fmt_full(r), fmt_full(a)) for it, r, a in result.curve])
    return [ckpt, curve]


def run_eval(plan: ExperimentPlan) -> tuple[list[Path], list[str]]:
    """Returns written files and the names of failed runs."""
    seeds = evaluation_seeds(plan.seed, plan.replications)
    rows, failures = [], []
    for ref in plan.controllers:
        for dname, doc in plan.demands:
            try:
                reports = parallel_map(_eval_job, [(ref, doc, s) for s in seeds])
            except Exception as exc:  # one bad run must not hide the others
                failures.append(f"{ref.name}/{dname}: {type(exc).__name__}: {exc}")
                continue
            for s, rep in zip(seeds, reports):
                rows.append((ref.name, dname, s, *(fmt2(v) for v in rep.as_row().values())))
            means = [_mean([rep.as_row()[m] for rep in reports]) for m in METRICS]
            rows.append((ref.name, dname, "mean", *(fmt2(v) for v in means)))
    path = Path(plan.out) / "eval.csv"
    write_csv(path, EVAL_HEADER, rows)
    return [path], failures


def _seed_table(path) -> dict:
    """(controller, demand) -> {seed: {metric: float|None}} from an eval CSV."""
    table: dict = {}
    for row in read_csv(path):
        if row["seed"] == "mean":
            continue
        vals = {m: (float(row[m]) if row[m] != "" else None) for m in METRICS}
        table.setdefault((row["controller"], row["demand"]), {})[int(row["seed"])] = vals
    return table


def compare_tables(inputs: list[tuple[str, str]]) -> list[dict]:
    """Join eval CSVs by (controller, demand); deltas are paired by seed
    against the first row of each demand."""
    if len(inputs) < 2:
        raise JoinError("compare needs at least two eval outputs")
    tables = [(label, _seed_table(path)) for label, path in inputs]
    demand_sets = [sorted({d for _, d in t}) for _, t in tables]
    for (label, _), ds in zip(tables[1:], demand_sets[1:]):
        if ds != demand_sets[0]:
            raise JoinError(f"{label}: demands {ds} do not match {tables[0][0]}: {demand_sets[0]}")
    demands = []
    for _, t in tables:
        for _, d in t:
            if d not in demands:
                demands.append(d)

    out = []
    for d in demands:
        group = [(label, c, per_seed) for label, t in tables for (c, dd), per_seed in t.items()
                 if dd == d]
        ref_seeds = sorted(group[0][2])
        for label, c, per_seed in group:
            if sorted(per_seed) != ref_seeds:
                raise JoinError(f"{label}/{c}/{d}: seeds differ from {group[0][0]}/{group[0][1]}")
        ref = group[0][2]
        rows = []
        for label, c, per_seed in group:
            row = {"demand": d, "run": label, "controller": c}
            for m in METRICS:
                row[m] = _mean([per_seed[s][m] for s in ref_seeds])
                diffs = [per_seed[s][m] - ref[s][m] for s in ref_seeds
                         if per_seed[s][m] is not None and ref[s][m] is not None]
                row["d" + m] = float(np.mean(diffs)) if diffs else None
            rows.append(row)
        for m in METRICS:
            vals = [round(r[m], 2) for r in rows if r[m] is not None]
            if not vals:
                continue
            best = max(vals) if m == "VC" else min(vals)
            for r in rows:
                if r[m] is not None and round(r[m], 2) == best:
                    r.setdefault("best", []).append(m)
        out.extend(rows)
    return out


def format_compare_text(rows: list[dict]) -> str:
    header = ["demand", "run", "controller", *METRICS, *("d" + m for m in METRICS)]
    cells = [header]
    for r in rows:
        best = r.get("best", [])
        line = [r["demand"], r["run"], r["controller"]]
        line += [fmt2(r[m]) + ("*" if m in best else "") for m in METRICS]
        line += [fmt2(r["d" + m]) for m in METRICS]
        cells.append(line)
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i < 3 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in cells]
    return "\n".join(line.rstrip() for line in lines) + "\n"


def run_compare(plan: ExperimentPlan) -> list[Path]:
    rows = compare_tables([(label, path) for label, path, _ in plan.inputs])
    out = Path(plan.out)
    csv_path, txt_path = out / "compare.csv", out / "compare.txt"
    write_csv(csv_path, COMPARE_HEADER,
              [(r["demand"], r["run"], r["controller"], *(fmt2(r[m]) for m in METRICS),
                *(fmt2(r["d" + m]) for m in METRICS), ";".join(r.get("best", [])))
               for r in rows])
    txt_path.write_text(format_compare_text(rows))
    return [csv_path, txt_path]


def phase_trace(state, node_id: str, phase: int) -> list[tuple[int, int, int]]:
    """``(cycle, green_s, vehicle_count)`` for every completed service of
    ``phase``; the count is the arrivals to the phase's movement queues
    between the start of that green and the start of the next one."""
    try:
        k = state.node_ids.index(node_id)
    except ValueError:
        raise LookupError(f"unknown intersection {node_id!r}") from None
    sig = state.signals[k]
    if not 0 <= phase < sig.num_phases:
        raise LookupError(f"{node_id}: no phase {phase} (has {sig.num_phases})")
    served = [h for h in sig.history if h[0] == phase]
    return [(i, int(h[2]), int(served[i + 1][3] - h[3])) for i, h in enumerate(served[:-1])]


def rank_correlation(x, y) -> float:
    """Spearman's rho; 0 when either series is constant (or too short)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) < 2 or np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0
    return float(spearmanr(x, y).statistic)


def run_trace(plan: ExperimentPlan) -> tuple[list[Path], float]:
    scenario = scenario_from_dict(plan.scenario)
    node_id, phase = plan.trace["intersection"], int(plan.trace["phase"])
    if node_id not in scenario.network.intersection_ids:
        raise LookupError(f"unknown intersection {node_id!r}")
    ctrl = build_controller(plan.controllers[0], scenario)
    state = make_state(scenario, plan.seed, ctrl)
    if not 0 <= phase < state.signals[state.node_ids.index(node_id)].num_phases:
        raise LookupError(f"{node_id}: no phase {phase}")
    run_episode(state, ctrl)
    rows = phase_trace(state, node_id, phase)
    path = Path(plan.out) / "trace.csv"
    write_csv(path, TRACE_HEADER, rows)
    return [path], rank_correlation([r[1] for r in rows], [r[2] for r in rows])


def run_plan(plan: ExperimentPlan) -> dict:
    """Execute ``plan``; returns ``{"files": [...], "failures": [...], ...}``."""
    Path(plan.out).mkdir(parents=True, exist_ok=True)
    if plan.command == "train":
        return {"files": run_train(plan), "failures": []}
    if plan.command == "eval":
        files, failures = run_eval(plan)
        return {"files": files, "failures": failures}
    if plan.command == "compare":
        return {"files": run_compare(plan), "failures": []}
    files, rho = run_trace(plan)
    return {"files": files, "failures": [], "spearman": rho}
