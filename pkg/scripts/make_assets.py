#!/usr/bin/env python3
"""Regenerate the committed scenario traces and the benchmark suite files."""

import sys
from pathlib import Path

import numpy as np
import yaml

from teleassist.sim.traces import (
    OperatorCommand,
    TraceRecord,
    synth_dual_arm_trace,
    synth_reach_trace,
    write_trace,
)
from teleassist.worldmodel import rot_x, rot_y, rot_z

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"

R_FRONT = rot_y(np.pi / 2)
R_SIDE_L = rot_x(-np.pi / 2)
R_SIDE_R = R_SIDE_L @ rot_z(np.pi)


def single_arm_trace():
    return synth_reach_trace(
        start_left=[0.35, 0.25, 0.30],
        start_right=[0.35, -0.25, 0.30],
        goal=[0.79, 0.10, 0.25],
        rot_left=R_FRONT,
        rot_right=R_FRONT,
        tick_rate=10.0,
        seed=42,
        short_stop=0.05,
        jitter_sigma=0.005,
        reach_duration=3.0,
        hold_duration=3.0,
    )


def dual_arm_trace():
    return synth_dual_arm_trace(
        start_left=[0.40, 0.28, 0.32],
        start_right=[0.40, -0.28, 0.32],
        goal_left=[0.70, 0.20, 0.25],
        goal_right=[0.70, -0.20, 0.25],
        rot_left=R_SIDE_L,
        rot_right=R_SIDE_R,
        tick_rate=10.0,
        seed=5,
        short_stop=0.05,
        jitter_sigma=0.004,
        reach_duration=3.0,
        settle_duration=1.5,
        grip_time=3.3,
        pull_vector=(-0.25, 0.0, 0.0),
        pull_duration=3.0,
        lift_vector=(0.0, 0.0, 0.12),
        lift_duration=1.5,
    )


def drive_ring_trace():
    """Drive straight at the ring until gating stops the base, then sweep
    all directions inside it."""
    records = []
    hold_l = np.array([0.35, 0.25, 0.30])
    hold_r = np.array([0.35, -0.25, 0.30])
    for k in range(80):
        t = k * 0.1
        if t < 3.0:
            pads = (1.0, 0.0, 0.0)
        else:
            a = 2 * np.pi * (t - 3.0) / 4.0
            pads = (float(np.cos(a)), float(np.sin(a)), 0.2)
        records.append(
            TraceRecord(t, OperatorCommand(hold_l, hold_r, R_FRONT, R_FRONT, pads=pads))
        )
    return records


def benchmark_scenario(seed: int) -> dict:
    return {
        "name": f"bench_{seed:02d}",
        "tick_rate_hz": 10.0,
        "seed": seed,
        "max_duration_s": 30.0,
        "task_required": True,
        "arms": {
            "mounts": {
                "left": {"translation": [0.10, 0.18, 0.0], "yaw_deg": 45.0},
                "right": {"translation": [0.10, -0.18, 0.0], "yaw_deg": -45.0},
            },
            "selection_weights": {"current": 1.0, "posture": 0.1},
        },
        "world": {
            "planes": [{"normal": [0.0, 0.0, 1.0], "offset": -0.8, "label": "floor"}],
            "ellipsoids": [
                {"center": [0.79, 0.0, 0.25], "semi_axes": [0.04, 0.03, 0.06],
                 "label": "neighbor_item"}
            ],
            "goals": [
                {"position": [0.79, 0.10, 0.25], "rpy_deg": [0.0, 90.0, 0.0],
                 "object": "item_a", "approach_weights": [10.0, 10.0, 10.0]}
            ],
            "objects": [{"id": "item_a", "shelf_z": 0.25, "lift_height": 0.05}],
        },
        "control": {
            "q_diag": [50] * 6, "r_diag": [1] * 6, "p_diag": [10] * 6,
            "alpha_w": 60.0, "beta_w": 6.0,
            "horizon_steps": 10, "horizon_seconds": 1.0,
            "u_min": [-0.6] * 3, "u_max": [0.6] * 3,
        },
        "intent": {"process_noise": 5.0, "measurement_noise": 4.0e-4},
        "solver": {"constraint_tol": 1.0e-5},
        "start": {
            "left": {"position": [0.35, 0.25, 0.30], "rpy_deg": [0.0, 90.0, 0.0]},
            "right": {"position": [0.35, -0.25, 0.30], "rpy_deg": [0.0, 90.0, 0.0]},
        },
        "operator": {
            "source": "model",
            "model": {
                "goal_object": "item_a",
                "arm": "left",
                "short_stop": 0.05,
                "jitter_sigma": 0.02,
                "reach_duration": 2.5,
                "correction_duration": 1.2,
                "settle_duration": 0.4,
                "correction_decay": 0.45,
                "lift_duration": 1.5,
            },
        },
    }


def main():
    traces = SCENARIOS / "traces"
    traces.mkdir(parents=True, exist_ok=True)
    write_trace(traces / "single_arm.jsonl", single_arm_trace())
    write_trace(traces / "dual_arm.jsonl", dual_arm_trace())
    write_trace(traces / "drive_ring.jsonl", drive_ring_trace())
    bench = SCENARIOS / "benchmark"
    bench.mkdir(parents=True, exist_ok=True)
    for seed in range(20):
        path = bench / f"bench_{seed:02d}.yaml"
        path.write_text(yaml.safe_dump(benchmark_scenario(seed), sort_keys=False))
    print(f"assets written under {SCENARIOS}")


if __name__ == "__main__":
    sys.exit(main())
