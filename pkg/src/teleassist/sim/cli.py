"""Command-line entry points: run, benchmark, validate."""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from .engine import Engine
from .logio import write_log
from .metrics import RunMetrics
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_TASK_FAILURE = 1
EXIT_SPEC_ERROR = 2


def _scenario_with_trace(path: str, trace_override: str | None):
    spec = load_scenario(path)
    if trace_override is not None:
        from dataclasses import replace

        spec = replace(
            spec,
            operator=type(spec.operator)(source="trace", trace_file=trace_override),
            source_dir=Path.cwd(),
        )
    return spec


def cmd_run(args) -> int:
    try:
        spec = _scenario_with_trace(args.scenario, args.trace)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SPEC_ERROR

    bridge_port = args.bridge
    if bridge_port is None and os.environ.get("TELEASSIST_BRIDGE_PORT"):
        bridge_port = int(os.environ["TELEASSIST_BRIDGE_PORT"])

    if bridge_port is not None or spec.operator.source == "bridge":
        return _run_live(spec, args, bridge_port or 0)

    try:
        engine = Engine(spec, assist=not args.no_assist, seed=args.seed)
    except (ScenarioError, ValueError, OSError) as exc:
        # covers scenario defects plus unreadable/invalid trace files
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SPEC_ERROR
    metrics, records = engine.run()
    _report(spec.name, metrics)
    if args.log:
        write_log(args.log, records)
        print(f"log written to {args.log}")
    if spec.task_required and not metrics.completed:
        return EXIT_TASK_FAILURE
    return EXIT_OK


def _run_live(spec, args, port: int) -> int:
    # a live session always drives the robot through the bridge mailbox
    from ..bridge.server import BridgeServer
    from .logio import header_record

    seed = spec.seed if args.seed is None else args.seed
    server = BridgeServer(scene=header_record(spec, not args.no_assist, seed), port=port)
    try:
        engine = Engine(spec, assist=not args.no_assist, seed=seed,
                        operator_source=server.source)
    except ScenarioError as exc:
        server.close()
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SPEC_ERROR
    print(f"bridge listening on port {server.port}; ticking at {spec.tick_rate} Hz")
    delta = spec.delta
    next_tick = time.monotonic()
    try:
        while not engine.done:
            t = engine.tick * delta
            if t > spec.max_duration:
                break
            cmd = server.source.command_for_tick(engine.tick, t, engine.observation())
            record = engine.step(cmd)
            server.publish(record)
            next_tick += delta
            lag = next_tick - time.monotonic()
            if lag > 0:
                time.sleep(lag)
    except KeyboardInterrupt:
        print("interrupted")
    finally:
        server.close()
    engine._finalize_metrics()
    _report(spec.name, engine.metrics)
    if args.log:
        write_log(args.log, engine.records)
    if spec.task_required and not engine.metrics.completed:
        return EXIT_TASK_FAILURE
    return EXIT_OK


def _report(name: str, m: RunMetrics):
    status = "completed" if m.completed else "ran to end"
    extra = f" at t={m.completion_time:.1f}s" if m.completed else f" (t={m.duration:.1f}s)"
    print(f"[{name}] {status}{extra}")
    if all(np.isfinite(m.terminal_goal_error)):
        print(
            f"  terminal goal error L/R: {m.terminal_goal_error[0]:.4f} / "
            f"{m.terminal_goal_error[1]:.4f} m"
        )
    print(f"  tracking rms L/R: {m.tracking_rms()[0]:.4f} / {m.tracking_rms()[1]:.4f} m")
    if np.isfinite(m.min_clearance):
        print(f"  min clearance: {m.min_clearance:.4f} m")
    print(f"  collisions: {m.collision_count}  solver failures: {m.solver_failures}")


def cmd_benchmark(args) -> int:
    suite = sorted(Path(args.suite_dir).glob("*.yaml"))
    if not suite:
        print(f"no scenarios found in {args.suite_dir}", file=sys.stderr)
        return EXIT_SPEC_ERROR
    rows = []
    all_completed = True
    for path in suite:
        try:
            spec = load_scenario(path)
        except ScenarioError as exc:
            print(f"scenario error: {exc}", file=sys.stderr)
            return EXIT_SPEC_ERROR
        results = {}
        for label, assist in (("assisted", True), ("unassisted", False)):
            metrics, _ = Engine(spec, assist=assist).run()
            results[label] = metrics
            all_completed &= metrics.completed
        rows.append((spec.name, spec.seed, results["assisted"], results["unassisted"]))

    print(f"{'scenario':<24}{'seed':>5}{'assisted':>10}{'unassisted':>12}{'ratio':>8}"
          f"{'col(A)':>8}{'col(U)':>8}")
    ratios = []
    for name, seed, a, u in rows:
        ta = a.completion_time if a.completed else float("nan")
        tu = u.completion_time if u.completed else float("nan")
        ratio = ta / tu if a.completed and u.completed else float("nan")
        ratios.append(ratio)
        print(f"{name:<24}{seed:>5}{ta:>10.2f}{tu:>12.2f}{ratio:>8.2f}"
              f"{a.collision_count:>8}{u.collision_count:>8}")
    mean_a = np.nanmean([r[2].completion_time if r[2].completed else np.nan for r in rows])
    mean_u = np.nanmean([r[3].completion_time if r[3].completed else np.nan for r in rows])
    print(f"\nmean completion: assisted {mean_a:.2f}s  unassisted {mean_u:.2f}s  "
          f"ratio {mean_a / mean_u:.3f}")
    return EXIT_OK if all_completed else EXIT_TASK_FAILURE


def cmd_validate(args) -> int:
    try:
        spec = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_SPEC_ERROR
    if spec.operator.source == "trace":
        from .traces import read_trace

        try:
            records = read_trace(spec.trace_path())
        except (OSError, ValueError) as exc:
            print(f"invalid: operator.trace_file: {exc}", file=sys.stderr)
            return EXIT_SPEC_ERROR
        print(f"ok: {spec.name} ({len(records)} trace records)")
    else:
        print(f"ok: {spec.name} (operator source: {spec.operator.source})")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="teleassist",
                                     description="shared-control teleoperation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--trace", default=None, help="override the operator trace file")
    p_run.add_argument("--no-assist", action="store_true", help="disable goal attraction")
    p_run.add_argument("--log", default=None, help="write the run log here")
    p_run.add_argument("--bridge", type=int, default=None,
                       help="serve a live operator session on this port")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("benchmark", help="run a suite assisted vs unassisted")
    p_bench.add_argument("suite_dir")
    p_bench.set_defaults(func=cmd_benchmark)

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("scenario")
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
