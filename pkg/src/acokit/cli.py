"""Command-line entry point.

Subcommands: ``space check``, ``aco certify``, ``aco census``,
``routing check``, ``routing solve``, ``logic solve``, ``run sync|async``.
Exit codes: 0 success or certified, 1 refuted or failed checks, 2
malformed input or size limits.

All randomness flows from the ``--seed`` flag (schedule ``i`` of a
campaign uses ``seed + i``); repeated invocations with the same
configuration produce byte-identical stdout and files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass

from . import aco, iteration, logic, routing, ultrametric
from .errors import (
    MalformedBoxError,
    MalformedSpaceError,
    PreconditionError,
    PreferenceCycleError,
    ScheduleRejectedError,
    SizeLimitError,
)
from .util import format_value, jsonable

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_BAD_INPUT = 2

log = logging.getLogger("acokit")


@dataclass(frozen=True)
class RunConfig:
    """Everything a dispatch needs; built from parsed flags."""

    command: tuple[str, ...]
    instance: str | None = None
    mode: str = "sync"
    seed: int = 0
    horizon: int = 200
    staleness: int = 5
    window: int = 8
    activation_prob: float = 0.5
    granularity: str = routing.PER_NODE
    schedules: int = 100
    max_steps: int | None = None
    force: bool = False
    trace: str | None = None
    json_out: str | None = None
    schedule_file: str | None = None


def emit_trace(path, trajectory, activations=None, distances=None,
               value_format=format_value):
    """Write a run as CSV: one row per (tick, processor) plus a summary row.

    Columns: t, processor, activated, value, dist_to_fixpoint.  The
    distance column carries the state's distance label when given and is
    empty otherwise; it is recorded, never asserted monotone.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "processor", "activated", "value",
                         "dist_to_fixpoint"])
        states = trajectory.states if trajectory is not None else ()
        for t, state in enumerate(states):
            if t == 0:
                active = frozenset()
            elif activations is not None:
                active = activations[t - 1]
            else:
                active = frozenset(range(len(state)))
            dist = "" if distances is None else str(distances[t])
            for i, value in enumerate(state):
                writer.writerow(
                    [t, i, "yes" if i in active else "no",
                     value_format(value), dist])
        if trajectory is None:
            writer.writerow(["summary", "", "", "converged_at=none;status=empty", ""])
        else:
            conv = ("none" if trajectory.converged_at is None
                    else str(trajectory.converged_at))
            writer.writerow(
                ["summary", "", "",
                 f"converged_at={conv};status={trajectory.status}", ""])


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_space_check(config: RunConfig) -> int:
    space = ultrametric.load_space(config.instance)
    axioms = ultrametric.check_axioms(space)
    isosceles = ultrametric.check_isosceles(space)
    complete = ultrametric.check_spherical_completeness(space)
    print(f"file: {config.instance}")
    print(f"elements: {len(space.elements)}")
    print(f"scale: {' < '.join(str(v) for v in space.scale.values)}")
    print(f"axioms: {'ok' if axioms.ok else 'FAIL'}")
    for violation in axioms.violations[:10]:
        witness = " ".join(str(w) for w in violation.witness)
        print(f"  {violation.axiom} violated at: {witness}")
    print(f"isosceles: {'ok' if isosceles.ok else 'FAIL'}")
    print(f"spherically complete: {'ok' if complete.ok else 'FAIL'}")
    ok = axioms.ok and isosceles.ok and complete.ok
    print(f"result: {'PASS' if ok else 'FAIL'}")
    if config.json_out:
        _write_json(config.json_out, {
            "file": config.instance,
            "elements": len(space.elements),
            "axioms_ok": axioms.ok,
            "isosceles_ok": isosceles.ok,
            "spherically_complete": complete.ok,
            "violations": [
                {"axiom": v.axiom, "witness": jsonable(v.witness)}
                for v in axioms.violations[:50]],
        })
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_aco_certify(config: RunConfig) -> int:
    op, _ = iteration.load_operator(config.instance)
    cert = aco.certify_aco(op, schedules=config.schedules,
                           horizon=config.horizon,
                           staleness=config.staleness,
                           window=config.window,
                           seed=config.seed)
    print(f"file: {config.instance}")
    print(f"verdict: {cert.verdict}")
    if cert.certified:
        seq = cert.box_sequence
        print(f"fixed point: {format_value(seq.fixed_point)}")
        print(f"boxes: {len(seq.boxes)}")
        for r, box in enumerate(seq.boxes):
            rendered = " x ".join(
                "{" + ",".join(format_value(v) for v in comp) + "}"
                for comp in box)
            print(f"  box {r}: {rendered}")
        s = cert.sampling
        print(f"sampling: runs={s['runs']} converged={s['converged']} "
              f"max_tick={s['max_converged_tick']}")
    else:
        print(f"reason: {cert.refutation['reason']}")
        fps = cert.refutation["fixed_points"]
        rendered = ",".join(format_value(m) for m in fps) if fps else "none"
        print(f"fixed points: {rendered}")
    if config.json_out:
        _write_json(config.json_out, cert.to_json_dict())
    return EXIT_OK if cert.certified else EXIT_FAIL


def _cmd_aco_census(config: RunConfig) -> int:
    census = aco.equivalence_census()
    print(f"operators: {census.total}")
    print(f"verdicts agree on {census.agreements}/{census.total} operators")
    print(f"certified: {census.aco_count}")
    print(f"result: {'PASS' if census.ok else 'FAIL'}")
    if config.json_out:
        _write_json(config.json_out, {
            "operators": census.total,
            "agreements": census.agreements,
            "certified": census.aco_count,
            "mismatches": jsonable(census.mismatches),
        })
    return EXIT_OK if census.ok else EXIT_FAIL


def _cmd_routing_check(config: RunConfig) -> int:
    try:
        instance = routing.load_instance(config.instance)
    except PreferenceCycleError as exc:
        print(f"file: {config.instance}")
        print("preference: REJECTED (strict preference cycle)")
        print("cycle: " + " -> ".join(routing.format_path(p) for p in exc.cycle))
        return EXIT_FAIL
    report = routing.check_strictly_inflationary(instance)
    print(f"file: {config.instance}")
    print(f"paths: {len(instance.paths)}")
    print(f"strictly inflationary: {'yes' if report.ok else 'NO'}")
    if not report.ok:
        arc, p = report.witness
        print(f"witness: arc ({arc[0]} {arc[1]}), path {routing.format_path(p)}")
    return EXIT_OK if report.ok else EXIT_FAIL


def _routing_distances(instance, trajectory, fixed_point):
    if fixed_point is None:
        return None
    out = []
    for comps in trajectory.states:
        state = routing.components_to_state(comps)
        out.append(routing.state_distance(instance, state, fixed_point))
    return out


def _routing_value(value) -> str:
    if isinstance(value, frozenset):
        return routing.format_state(value)
    return format_value(value)


def _cmd_routing_solve(config: RunConfig) -> int:
    try:
        instance = routing.load_instance(config.instance)
    except PreferenceCycleError as exc:
        print("preference: REJECTED (strict preference cycle)")
        print("cycle: " + " -> ".join(routing.format_path(p) for p in exc.cycle))
        return EXIT_FAIL
    result = routing.solve(
        instance, config.mode,
        granularity=config.granularity,
        max_steps=config.max_steps,
        schedules=config.schedules,
        seed=config.seed,
        horizon=config.horizon,
        staleness=config.staleness,
        window=config.window,
        activation_prob=config.activation_prob,
        force=config.force)
    print(f"file: {config.instance}")
    print(f"mode: {config.mode}")
    print(f"granularity: {config.granularity}")
    print(f"status: {result.status}")
    payload = {
        "file": config.instance,
        "mode": config.mode,
        "granularity": config.granularity,
        "status": result.status,
    }
    if result.status == "converged":
        print(f"fixed point: {routing.format_state(result.fixed_point)}")
        print(f"stable: {'yes' if result.stable else 'NO'}")
        payload["fixed_point"] = jsonable(result.fixed_point)
        payload["stable"] = result.stable
    if result.status == "cycle":
        print(f"cycle length: {len(result.cycle)}")
        for state in result.cycle:
            print(f"  state: {routing.format_state(state)}")
        payload["cycle"] = jsonable(result.cycle)
    if config.mode == "sync" and result.trajectory is not None:
        conv = result.trajectory.converged_at
        print(f"converged_at: {'none' if conv is None else conv}")
        payload["converged_at"] = conv
        if config.trace:
            emit_trace(config.trace, result.trajectory,
                       distances=_routing_distances(
                           instance, result.trajectory, result.fixed_point),
                       value_format=_routing_value)
    if config.mode == "async":
        converged = sum(1 for r in result.runs if r.status == "converged")
        print(f"schedules: {config.schedules}")
        print(f"converged: {converged}/{len(result.runs)}")
        if result.runs:
            ticks = [r.converged_at for r in result.runs
                     if r.converged_at is not None]
            if ticks:
                print(f"max convergence tick: {max(ticks)}")
                payload["max_convergence_tick"] = max(ticks)
        payload["runs"] = [
            {"seed": r.seed, "status": r.status,
             "converged_at": r.converged_at,
             "final": jsonable(r.final)} for r in result.runs]
        if config.trace:
            op = routing.decompose(instance, config.granularity)
            schedule = iteration.sample_schedule(
                op.processors, config.horizon, config.seed,
                activation_prob=config.activation_prob,
                max_staleness=config.staleness,
                fairness_window=config.window)
            start = routing.state_to_components(
                instance, config.granularity, frozenset())
            traj = iteration.run_async(op, start, schedule)
            emit_trace(config.trace, traj, activations=schedule.activations,
                       distances=_routing_distances(
                           instance, traj, result.fixed_point),
                       value_format=_routing_value)
    if config.json_out:
        _write_json(config.json_out, payload)
    return EXIT_OK if result.status == "converged" else EXIT_FAIL


def _cmd_logic_solve(config: RunConfig) -> int:
    program = logic.load_program(config.instance)
    strat_result = logic.find_stratification(program)
    print(f"file: {config.instance}")
    print(f"atoms: {len(program.atoms)}")
    if not strat_result.ok:
        print("stratification: REJECTED")
        print("negative cycle: " + " -> ".join(strat_result.witness))
        return EXIT_FAIL
    strat = strat_result.stratification
    print("strata: " + " ".join(
        f"{a}={lvl}" for a, lvl in strat.levels))
    result = logic.compute_perfect_model(program)
    payload = {
        "file": config.instance,
        "atoms": list(program.atoms),
        "strata": {a: lvl for a, lvl in strat.levels},
        "status": result.status,
    }
    if result.status != "converged":
        print(f"status: {result.status}")
        if config.json_out:
            _write_json(config.json_out, payload)
        return EXIT_FAIL
    print(f"model: {_fmt_interp(result.model)}")
    print(f"steps: {result.steps}")
    print("trajectory: " + " -> ".join(
        _fmt_interp(i) for i in result.trajectory))
    payload["model"] = jsonable(result.model)
    payload["steps"] = result.steps
    ok = True
    if config.mode == "async":
        op = logic.decompose_program(program)
        start = tuple(False for _ in program.atoms)
        target = logic.interp_to_tuple(program, result.model)
        converged = 0
        max_tick = 0
        for s in range(config.schedules):
            schedule = iteration.sample_schedule(
                op.processors, config.horizon, config.seed + s,
                activation_prob=config.activation_prob,
                max_staleness=config.staleness,
                fairness_window=config.window)
            traj = iteration.run_async(op, start, schedule)
            if traj.status == "converged" and traj.final == target:
                converged += 1
                max_tick = max(max_tick, traj.converged_at)
        print(f"schedules: {config.schedules}")
        print(f"converged to model: {converged}/{config.schedules}")
        if converged:
            print(f"max convergence tick: {max_tick}")
        payload["async_converged"] = converged
        payload["async_schedules"] = config.schedules
        ok = converged == config.schedules
    if config.trace:
        traj_states = tuple(
            logic.interp_to_tuple(program, i) for i in result.trajectory)
        sync_traj = iteration.Trajectory(
            traj_states,
            result.steps - 1 if result.status == "converged" else None,
            result.status)
        distances = [
            str(logic.interpretation_distance(strat, i, result.model))
            for i in result.trajectory]
        emit_trace(config.trace, sync_traj, distances=distances)
    if config.json_out:
        _write_json(config.json_out, payload)
    return EXIT_OK if ok else EXIT_FAIL


def _fmt_interp(interp) -> str:
    return "{" + ",".join(sorted(interp)) + "}"


def _cmd_run(config: RunConfig) -> int:
    op, start = iteration.load_operator(config.instance)
    if start is None:
        start = tuple(dom[0] for dom in op.domains)
    print(f"file: {config.instance}")
    print(f"processors: {op.processors}")
    print(f"mode: {config.mode}")
    if config.mode == "sync":
        steps = config.max_steps if config.max_steps is not None \
            else op.size() + 1
        traj = iteration.run_sync(op, start, steps)
        activations = None
    else:
        if config.schedule_file:
            schedule = iteration.load_schedule(config.schedule_file)
        else:
            schedule = iteration.sample_schedule(
                op.processors, config.horizon, config.seed,
                activation_prob=config.activation_prob,
                max_staleness=config.staleness,
                fairness_window=config.window)
        traj = iteration.run_async(op, start, schedule)
        activations = schedule.activations
    print(f"status: {traj.status}")
    conv = traj.converged_at
    print(f"converged_at: {'none' if conv is None else conv}")
    print(f"final: {format_value(traj.final)}")
    if traj.status == "cycle":
        print(f"cycle: start={traj.cycle_start} length={traj.cycle_length}")
    if config.trace:
        emit_trace(config.trace, traj, activations=activations)
    return EXIT_OK if traj.status == "converged" else EXIT_FAIL


def dispatch(config: RunConfig) -> int:
    """Route a configuration to its command, mapping errors to exit codes."""
    handlers = {
        ("space", "check"): _cmd_space_check,
        ("aco", "certify"): _cmd_aco_certify,
        ("aco", "census"): _cmd_aco_census,
        ("routing", "check"): _cmd_routing_check,
        ("routing", "solve"): _cmd_routing_solve,
        ("logic", "solve"): _cmd_logic_solve,
        ("run", "sync"): _cmd_run,
        ("run", "async"): _cmd_run,
    }
    handler = handlers.get(config.command)
    if handler is None:
        print(f"unknown command: {' '.join(config.command)}", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        return handler(config)
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (MalformedSpaceError, MalformedBoxError, SizeLimitError,
            ScheduleRejectedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


def _add_campaign_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--schedules", type=int, default=100,
                        help="number of sampled schedules in a campaign")
    parser.add_argument("--horizon", type=int, default=200)
    parser.add_argument("--max-staleness", type=int, default=5, dest="staleness")
    parser.add_argument("--fairness-window", type=int, default=8, dest="window")
    parser.add_argument("--activation-prob", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acokit",
        description="Certify and simulate asynchronously contracting operators")
    sub = parser.add_subparsers(dest="group", required=True)

    space = sub.add_parser("space", help="ultrametric space files")
    space_sub = space.add_subparsers(dest="action", required=True)
    p = space_sub.add_parser("check", help="verify the axioms of a space file")
    p.add_argument("instance")
    p.add_argument("--json", dest="json_out")

    aco_p = sub.add_parser("aco", help="operator certification")
    aco_sub = aco_p.add_subparsers(dest="action", required=True)
    p = aco_sub.add_parser("certify", help="certify an operator file")
    p.add_argument("instance")
    p.add_argument("--json", dest="json_out")
    _add_campaign_flags(p)
    p = aco_sub.add_parser("census",
                           help="cross-check both searches on all 2x2 operators")
    p.add_argument("--json", dest="json_out")

    routing_p = sub.add_parser("routing", help="path selection instances")
    routing_sub = routing_p.add_subparsers(dest="action", required=True)
    p = routing_sub.add_parser("check", help="validate an instance file")
    p.add_argument("instance")
    p = routing_sub.add_parser("solve", help="run an instance to stability")
    p.add_argument("instance")
    p.add_argument("--mode", choices=("sync", "async"), default="sync")
    p.add_argument("--granularity", choices=routing.GRANULARITIES,
                   default=routing.PER_NODE)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--force", action="store_true",
                   help="run even when the instance is not strictly inflationary")
    p.add_argument("--trace", help="write a CSV trace here")
    p.add_argument("--json", dest="json_out")
    _add_campaign_flags(p)

    logic_p = sub.add_parser("logic", help="stratified logic programs")
    logic_sub = logic_p.add_subparsers(dest="action", required=True)
    p = logic_sub.add_parser("solve", help="compute the perfect model")
    p.add_argument("instance")
    p.add_argument("--mode", choices=("sync", "async"), default="sync")
    p.add_argument("--trace", help="write a CSV trace here")
    p.add_argument("--json", dest="json_out")
    _add_campaign_flags(p)

    run_p = sub.add_parser("run", help="iterate an operator file")
    run_sub = run_p.add_subparsers(dest="action", required=True)
    for mode in ("sync", "async"):
        p = run_sub.add_parser(mode)
        p.add_argument("instance")
        p.add_argument("--max-steps", type=int, default=None)
        p.add_argument("--schedule", dest="schedule_file",
                       help="schedule file instead of sampling")
        p.add_argument("--trace", help="write a CSV trace here")
        _add_campaign_flags(p)

    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    command = (args.group, args.action)
    mode = getattr(args, "mode", args.action if args.group == "run" else "sync")
    return RunConfig(
        command=command,
        instance=getattr(args, "instance", None),
        mode=mode,
        seed=getattr(args, "seed", 0),
        horizon=getattr(args, "horizon", 200),
        staleness=getattr(args, "staleness", 5),
        window=getattr(args, "window", 8),
        activation_prob=getattr(args, "activation_prob", 0.5),
        granularity=getattr(args, "granularity", routing.PER_NODE),
        schedules=getattr(args, "schedules", 100),
        max_steps=getattr(args, "max_steps", None),
        force=getattr(args, "force", False),
        trace=getattr(args, "trace", None),
        json_out=getattr(args, "json_out", None),
        schedule_file=getattr(args, "schedule_file", None),
    )


def main(argv=None) -> int:
    level = os.environ.get("ACOKIT_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    return dispatch(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
