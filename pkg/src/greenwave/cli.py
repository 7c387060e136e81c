"""Command line entry point: ``greenwave {train,eval,compare,trace,validate,replay}``.

Exit status is 0 when every requested run completed, 1 when a run failed or
a network lint fired, and 2 for unusable input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiment as ex
from .errors import ConfigError, DimensionError, JoinError
from .network import network_from_dict, validate_network
from .scenario import load_scenario, scenario_from_dict
from .simulator import check_demand, demand_from_dict


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    p.add_argument("--out", default="runs", help="output directory (default: runs)")
    p.add_argument("--replications", type=int, default=None,
                   help=f"evaluation replications (default {ex.DEFAULT_REPLICATIONS})")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="greenwave", parents=[common],
                                     description="Traffic signal control experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train a policy, write checkpoint + curve")
    t.add_argument("--scope", choices=("local", "neighbor", "global"))
    t.add_argument("--algo", choices=("mappo", "ippo"))
    t.add_argument("--iterations", type=int)
    t.add_argument("--episodes-per-iter", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--randomize", choices=("on", "off"),
                   help="override the scenario's turning-ratio randomization switch")
    t.add_argument("--delta", type=float, help="randomization half-width")

    e = sub.add_parser("eval", parents=[common], help="evaluate controllers, write metrics CSV")
    e.add_argument("controllers", nargs="+",
                   help="fixtime, maxpressure, CHECKPOINT or NAME=CHECKPOINT")
    e.add_argument("--demand", action="append", default=[], metavar="NAME=FILE",
                   help="extra evaluation case: a demand or scenario JSON (repeatable)")

    c = sub.add_parser("compare", parents=[common], help="join eval CSVs into one table")
    c.add_argument("inputs", nargs="+", help="eval CSV files (LABEL=FILE to rename)")

    r = sub.add_parser("trace", parents=[common], help="per-cycle green vs demand CSV")
    r.add_argument("controller", help="fixtime, maxpressure or a checkpoint")
    r.add_argument("--intersection", required=True)
    r.add_argument("--phase", type=int, default=0)

    v = sub.add_parser("validate", parents=[common], help="lint a scenario's network and demand")
    v.add_argument("file", nargs="?", help="scenario JSON (or use --scenario)")

    p = sub.add_parser("replay", parents=[common], help="rerun a lockfile")
    p.add_argument("lock", help="lock.json written by a previous run")
    return parser


def _load(args):
    if not args.scenario:
        raise ConfigError("--scenario is required")
    path = Path(args.scenario)
    if not path.is_file():
        raise ConfigError(f"{path}: no such file")
    try:
        return load_scenario(path), str(path.resolve())
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _demand_case(text: str, base_doc: dict) -> tuple[str, dict]:
    name, sep, file = text.partition("=")
    if not sep:
        raise ConfigError(f"--demand {text!r}: expected NAME=FILE")
    try:
        doc = json.loads(Path(file).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"--demand {name}: {exc}") from None
    if "network" not in doc:  # bare demand document on the base network
        doc = {**base_doc, "demand": doc, "name": name}
    try:
        scenario = scenario_from_dict(doc, name)
    except ConfigError as exc:
        raise ConfigError(f"{file}: {exc}") from None
    return name, scenario.to_dict()


def make_plan(args) -> ex.ExperimentPlan:
    seed = 0 if args.seed is None else args.seed
    reps = ex.DEFAULT_REPLICATIONS if args.replications is None else args.replications
    if args.command == "compare":
        inputs, seen = [], set()
        for text in args.inputs:
            label, _, path = text.rpartition("=")
            label = label or Path(path).parent.name or Path(path).stem
            while label in seen:
                label += "'"
            seen.add(label)
            if not Path(path).is_file():
                raise ConfigError(f"{path}: no such file")
            inputs.append((label, str(Path(path).resolve()), ex.sha256_file(path)))
        return ex.ExperimentPlan("compare", args.out, {}, seed=seed, inputs=tuple(inputs))

    scenario, spath = _load(args)
    doc = scenario.to_dict()
    if args.command == "train":
        overrides = {k: v for k, v in {
            "scope": args.scope, "algo": args.algo, "iterations": args.iterations,
            "episodes_per_iter": args.episodes_per_iter, "lr": args.lr, "seed": args.seed,
        }.items() if v is not None}
        config = scenario.training.with_(**overrides)
        rz = scenario.randomization
        if args.randomize is not None:
            rz = type(rz)(args.randomize == "on", rz.delta, rz.noise_seed)
        if args.delta is not None:
            rz = type(rz)(rz.enabled, args.delta, rz.noise_seed)
        return ex.ExperimentPlan("train", args.out, doc, spath, seed=config.seed,
                                 training=config.to_dict(), randomization=rz.to_dict())
    if args.command == "eval":
        demands = [(scenario.name, doc)] + [_demand_case(d, doc) for d in args.demand]
        names = [n for n, _ in demands]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate demand names {names}")
        controllers = tuple(ex.parse_controller(c) for c in args.controllers)
        if len({c.name for c in controllers}) != len(controllers):
            raise ConfigError("controller names must be distinct (use NAME=CHECKPOINT)")
        return ex.ExperimentPlan("eval", args.out, doc, spath, seed=seed, replications=reps,
                                 controllers=controllers, demands=tuple(demands))
    # trace
    return ex.ExperimentPlan("trace", args.out, doc, spath, seed=seed,
                             controllers=(ex.parse_controller(args.controller),),
                             trace={"intersection": args.intersection, "phase": args.phase})


def cmd_validate(args) -> int:
    path = Path(args.file or args.scenario or "")
    if not path.is_file():
        raise ConfigError(f"{path}: no such file")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    network = network_from_dict(data.get("network", data))
    problems = list(validate_network(network))
    if "demand" in data and not problems:
        try:
            check_demand(network, demand_from_dict(data["demand"]))
        except ConfigError as exc:
            problems.append(str(exc))
    for msg in problems:
        print(f"{path}: {msg}")
    if not problems:
        print(f"{path}: ok ({len(network.intersections)} intersections, {len(network.links)} links)")
    return 1 if problems else 0


def execute(plan: ex.ExperimentPlan, write_lock: bool = True) -> int:
    Path(plan.out).mkdir(parents=True, exist_ok=True)
    if write_lock:
        ex.write_lock(plan)
    result = ex.run_plan(plan)
    for f in result["files"]:
        print(f"wrote {f}")
    if "spearman" in result:
        print(f"spearman(green_s, vehicle_count) = {result['spearman']:.3f}")
    for msg in result["failures"]:
        print(f"run failed: {msg}", file=sys.stderr)
    return 1 if result["failures"] else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "replay":
            plan = ex.load_lock(args.lock, out=args.out if args.out != "runs" else None)
            return execute(plan, write_lock=plan.out != ex.load_lock(args.lock).out)
        return execute(make_plan(args))
    except (ConfigError, DimensionError, JoinError, LookupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
