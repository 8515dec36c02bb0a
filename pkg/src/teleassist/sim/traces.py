"""Operator command records, JSONL trace files, and scripted trace synthesis."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..worldmodel import check_rot3, vec3


@dataclass(frozen=True)
class OperatorCommand:
    """One operator command sample: commanded effector poses, grips, pads."""

    left_pos: np.ndarray
    right_pos: np.ndarray
    left_rot: np.ndarray
    right_rot: np.ndarray
    grip_left: bool = False
    grip_right: bool = False
    pads: tuple[float, float, float] = (0.0, 0.0, 0.0)  # left pad x, y; right pad x
    mode_request: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "left_pos", vec3(self.left_pos))
        object.__setattr__(self, "right_pos", vec3(self.right_pos))
        object.__setattr__(self, "left_rot", check_rot3(self.left_rot))
        object.__setattr__(self, "right_rot", check_rot3(self.right_rot))


@dataclass(frozen=True)
class TraceRecord:
    t: float
    command: OperatorCommand


def record_to_dict(rec: TraceRecord) -> dict:
    c = rec.command
    out = {
        "t": rec.t,
        "left": {"pos": c.left_pos.tolist(), "rot": c.left_rot.reshape(9).tolist()},
        "right": {"pos": c.right_pos.tolist(), "rot": c.right_rot.reshape(9).tolist()},
        "grip": [bool(c.grip_left), bool(c.grip_right)],
        "pads": list(c.pads),
    }
    if c.mode_request is not None:
        out["mode"] = c.mode_request
    return out


def record_from_dict(d: dict) -> TraceRecord:
    mode = d.get("mode")
    if mode is not None and mode not in ("independent", "top_down_front", "side"):
        raise ValueError(f"unknown grasp mode request {mode!r}")
    cmd = OperatorCommand(
        left_pos=d["left"]["pos"],
        right_pos=d["right"]["pos"],
        left_rot=np.asarray(d["left"]["rot"], dtype=float).reshape(3, 3),
        right_rot=np.asarray(d["right"]["rot"], dtype=float).reshape(3, 3),
        grip_left=bool(d["grip"][0]),
        grip_right=bool(d["grip"][1]),
        pads=tuple(d.get("pads", (0.0, 0.0, 0.0))),
        mode_request=mode,
    )
    return TraceRecord(float(d["t"]), cmd)


def write_trace(path, records: list[TraceRecord]) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(record_to_dict(rec)) + "\n")


def read_trace(path) -> list[TraceRecord]:
    records = []
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_dict(json.loads(line)))
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad trace record: {exc}") from exc
    times = [r.t for r in records]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"{path}: trace timestamps must be strictly increasing")
    return records


class TracePlayer:
    """Zero-order-hold sampling of a recorded trace."""

    def __init__(self, records: list[TraceRecord]):
        if not records:
            raise ValueError("empty trace")
        self.records = records
        self._idx = 0

    def command_at(self, t: float) -> OperatorCommand:
        while self._idx + 1 < len(self.records) and self.records[self._idx + 1].t <= t + 1e-12:
            self._idx += 1
        return self.records[self._idx].command

    def finished(self, t: float) -> bool:
        return t > self.records[-1].t + 1e-12


def min_jerk(p0: np.ndarray, p1: np.ndarray, tau: float) -> np.ndarray:
    """Minimum-jerk interpolation between p0 and p1, tau in [0, 1]."""
    tau = float(np.clip(tau, 0.0, 1.0))
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    return p0 + s * (p1 - p0)


@dataclass
class _ArmScript:
    """Piecewise schedule of (start_time, duration, p0, p1) min-jerk segments
    with holds in between; evaluated per sample time."""

    segments: list[tuple[float, float, np.ndarray, np.ndarray]] = field(default_factory=list)

    def append(self, t0: float, duration: float, p0, p1):
        self.segments.append((t0, duration, np.asarray(p0, float), np.asarray(p1, float)))

    def position(self, t: float) -> np.ndarray:
        pos = self.segments[0][2]
        for t0, dur, p0, p1 in self.segments:
            if t < t0:
                break
            pos = min_jerk(p0, p1, (t - t0) / dur) if dur > 0 else p1
        return pos


def _smoothed_jitter(rng: np.random.Generator, n: int, sigma: float, ema: float = 0.5) -> np.ndarray:
    """Tremor-like noise: white Gaussian run through a first-order filter."""
    if sigma <= 0:
        return np.zeros((n, 3))
    raw = rng.normal(scale=sigma, size=(n, 3))
    out = np.empty_like(raw)
    acc = np.zeros(3)
    for i in range(n):
        acc = ema * raw[i] + (1 - ema) * acc
        out[i] = acc
    return out


def synth_reach_trace(
    start_left,
    start_right,
    goal,
    rot_left,
    rot_right,
    tick_rate: float,
    seed: int,
    short_stop: float = 0.05,
    jitter_sigma: float = 0.005,
    reach_duration: float = 3.0,
    hold_duration: float = 3.0,
    arm: str = "left",
) -> list[TraceRecord]:
    """Noisy single-arm reach that stops short of the goal and holds there,
    modeling an operator with limited depth perception. The other arm holds
    its start pose."""
    start_left = vec3(start_left)
    start_right = vec3(start_right)
    goal = vec3(goal)
    rng = np.random.default_rng(seed)

    moving_start = start_left if arm == "left" else start_right
    direction = goal - moving_start
    stop = goal - short_stop * direction / np.linalg.norm(direction)

    dt = 1.0 / tick_rate
    total = reach_duration + hold_duration
    n = int(round(total * tick_rate)) + 1
    jitter = _smoothed_jitter(rng, n, jitter_sigma)

    script = _ArmScript()
    script.append(0.0, reach_duration, moving_start, stop)

    records = []
    for k in range(n):
        t = k * dt
        p = script.position(t) + jitter[k]
        left = p if arm == "left" else start_left
        right = p if arm == "right" else start_right
        records.append(
            TraceRecord(t, OperatorCommand(left, right, rot_left, rot_right))
        )
    return records


def synth_dual_arm_trace(
    start_left,
    start_right,
    goal_left,
    goal_right,
    rot_left,
    rot_right,
    tick_rate: float,
    seed: int,
    short_stop: float = 0.05,
    jitter_sigma: float = 0.004,
    reach_duration: float = 3.0,
    settle_duration: float = 1.0,
    pull_vector=(-0.25, 0.0, 0.0),
    pull_duration: float = 3.0,
    lift_vector=(0.0, 0.0, 0.12),
    lift_duration: float = 1.5,
    grip_time: float | None = None,
) -> list[TraceRecord]:
    """Coordinated pick: both arms reach their grasp points (stopping short),
    close the grippers, pull the item out, then lift. The right-arm command
    past the grasp mirrors the left; the coordination constraints own the
    right arm once the coupled mode activates."""
    start_left, start_right = vec3(start_left), vec3(start_right)
    goal_left, goal_right = vec3(goal_left), vec3(goal_right)
    rng = np.random.default_rng(seed)

    def stop_point(start, goal):
        d = goal - start
        return goal - short_stop * d / np.linalg.norm(d)

    stop_l, stop_r = stop_point(start_left, goal_left), stop_point(start_right, goal_right)
    if grip_time is None:
        grip_time = reach_duration + 0.2

    t_pull = reach_duration + settle_duration
    t_lift = t_pull + pull_duration
    total = t_lift + lift_duration + 1.0

    left = _ArmScript()
    left.append(0.0, reach_duration, start_left, stop_l)
    pull_end_l = stop_l + np.asarray(pull_vector, float)
    left.append(t_pull, pull_duration, stop_l, pull_end_l)
    left.append(t_lift, lift_duration, pull_end_l, pull_end_l + np.asarray(lift_vector, float))

    right = _ArmScript()
    right.append(0.0, reach_duration, start_right, stop_r)
    pull_end_r = stop_r + np.asarray(pull_vector, float)
    right.append(t_pull, pull_duration, stop_r, pull_end_r)
    right.append(t_lift, lift_duration, pull_end_r, pull_end_r + np.asarray(lift_vector, float))

    dt = 1.0 / tick_rate
    n = int(round(total * tick_rate)) + 1
    jl = _smoothed_jitter(rng, n, jitter_sigma)
    jr = _smoothed_jitter(rng, n, jitter_sigma)

    records = []
    for k in range(n):
        t = k * dt
        grip = t >= grip_time
        records.append(
            TraceRecord(
                t,
                OperatorCommand(
                    left.position(t) + jl[k],
                    right.position(t) + jr[k],
                    rot_left,
                    rot_right,
                    grip_left=grip,
                    grip_right=grip,
                ),
            )
        )
    return records
