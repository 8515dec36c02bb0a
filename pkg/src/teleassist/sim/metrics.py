"""Run metrics, accumulated online and recomputable from a run log."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RunMetrics:
    completed: bool = False
    completion_time: float | None = None
    duration: float = 0.0
    terminal_goal_error: tuple[float, float] = (math.inf, math.inf)  # per arm, nearest goal
    min_clearance: float = math.inf
    inter_effector_distances: list[float] = field(default_factory=list)
    tracking_errors: list[tuple[float, float]] = field(default_factory=list)
    collision_count: int = 0
    solver_failures: int = 0

    def to_dict(self) -> dict:
        return {
            "completed": self.completed,
            "completion_time": self.completion_time,
            "duration": self.duration,
            "terminal_goal_error": list(self.terminal_goal_error),
            "min_clearance": self.min_clearance,
            "collision_count": self.collision_count,
            "solver_failures": self.solver_failures,
            "tracking_rms": list(self.tracking_rms()),
            "inter_effector_variation": self.inter_effector_variation(),
        }

    def tracking_rms(self) -> tuple[float, float]:
        if not self.tracking_errors:
            return (0.0, 0.0)
        arr = np.asarray(self.tracking_errors)
        rms = np.sqrt(np.mean(arr**2, axis=0))
        return (float(rms[0]), float(rms[1]))

    def inter_effector_variation(self) -> float:
        if not self.inter_effector_distances:
            return 0.0
        return max(self.inter_effector_distances) - min(self.inter_effector_distances)


def metrics_from_log(records: list[dict]) -> RunMetrics:
    """Rebuild the run metrics from a log (header + tick records)."""
    header = records[0]
    assert header["type"] == "header"
    tol = header["constraint_tol"]
    goals = [np.asarray(g["position"]) for g in header["goals"]]

    m = RunMetrics()
    last = None
    for rec in records:
        if rec.get("type") != "tick":
            continue
        last = rec
        m.duration = rec["t"]
        real = np.asarray(rec["real"])
        m.inter_effector_distances.append(float(np.linalg.norm(real[3:] - real[:3])))
        m.tracking_errors.append(tuple(rec["track_err"]))
        m.min_clearance = min(m.min_clearance, rec["clear"])
        if rec["viol"] > tol:
            m.collision_count += 1
        if not rec["solver"]["converged"]:
            m.solver_failures += 1
        if rec.get("done") and not m.completed:
            m.completed = True
            m.completion_time = rec["t"]
    if last is not None and goals:
        real = np.asarray(last["real"])
        m.terminal_goal_error = (
            min(float(np.linalg.norm(real[:3] - g)) for g in goals),
            min(float(np.linalg.norm(real[3:] - g)) for g in goals),
        )
    return m
