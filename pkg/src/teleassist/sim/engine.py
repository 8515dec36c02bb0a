"""Fixed-timestep simulation engine.

Each tick: filter the operator command, propagate the reference, resolve the
coordination mode, assemble constraints, run one MPC step, realize the
waypoint through the identity inner loop (optional Gaussian noise), solve
arm IK for the realized pose, step the base, update grasp attachments, and
append one log record. Everything is driven by seeded generators, so a
(scenario, seed) pair reproduces its log byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import armkin, basekin, sharedcost
from ..alilqr import mpc_step
from ..constraints import CommandRotations, assemble
from ..intent import init_filter, kf_update, propagate_reference
from ..worldmodel import (
    INDEPENDENT,
    EndEffectorPairState,
    GoalSet,
    GraspKind,
    GraspMode,
    rot_z,
    stack,
)
from .metrics import RunMetrics
from .logio import header_record
from .operator_model import Observation, OperatorModelParams, ReactiveOperator
from .scenario import ScenarioError, ScenarioSpec
from .traces import OperatorCommand, TracePlayer, read_trace


def attach_check(gripper_closed: bool, effector_position, goal_position, radius: float = 0.02) -> bool:
    """Closing within the attach radius of a goal picks up its object."""
    if not gripper_closed:
        return False
    d = np.linalg.norm(np.asarray(effector_position, float) - np.asarray(goal_position, float))
    return d <= radius


@dataclass
class Attachment:
    arm: str            # which effector the object follows
    offset: np.ndarray  # object position relative to that effector


class _TraceSource:
    def __init__(self, player: TracePlayer):
        self.player = player

    def command_for_tick(self, tick: int, t: float, obs: Observation) -> OperatorCommand:
        return self.player.command_at(t)

    def finished(self, t: float) -> bool:
        return self.player.finished(t)


class Engine:
    """Owns the mutable world state and advances it tick by tick."""

    def __init__(self, spec: ScenarioSpec, assist: bool = True, seed: int | None = None,
                 operator_source=None):
        self.spec = spec
        self.assist = assist
        self.seed = spec.seed if seed is None else seed
        ss = np.random.SeedSequence(self.seed).spawn(2)
        self.noise_rng = np.random.default_rng(ss[0])
        self.operator_seed = int(ss[1].generate_state(1)[0])

        self.tick = 0
        self.realized = stack(spec.start_left.position, spec.start_right.position)
        self.cmd = OperatorCommand(
            spec.start_left.position, spec.start_right.position,
            spec.start_left.rotation, spec.start_right.rotation,
        )
        self.filters = [None, None]
        self.base_pose = spec.start_base.copy()
        self.mode: GraspMode = INDEPENDENT
        self.grip = [False, False]
        self.attached: dict[str, Attachment] = {}
        self.object_positions = {
            oid: self._object_anchor(oid) for oid in spec.objects
        }
        self.prev_solution = None
        self.prev_mode_kind = GraspKind.INDEPENDENT
        self.metrics = RunMetrics()
        self.records: list[dict] = [header_record(spec, assist, self.seed)]
        self.done = False

        self.joints = [
            self._solve_start_joints("left", spec.start_left),
            self._solve_start_joints("right", spec.start_right),
        ]
        self.operator_source = operator_source or self._build_source()

    # -- setup ----------------------------------------------------------------
    def _object_anchor(self, object_id: str) -> np.ndarray:
        for g in self.spec.goals:
            if g.object_id == object_id:
                return g.position.copy()
        raise ScenarioError("world.objects", f"object {object_id!r} has no goal anchor")

    def _arm_model(self, side: str):
        return self.spec.arm_left if side == "left" else self.spec.arm_right

    def _solve_start_joints(self, side: str, pose) -> np.ndarray:
        model = self._arm_model(side)
        sols = armkin.ik(model, pose.position, pose.rotation)
        if not sols:
            raise ScenarioError(f"start.{side}", "start pose is unreachable for the arm")
        return armkin.select_solution(
            sols, model.posture, model.posture,
            self.spec.selection_w_current * np.ones(6),
            self.spec.selection_w_posture * np.ones(6),
        )

    def _build_source(self):
        op = self.spec.operator
        if op.source == "trace":
            return _TraceSource(TracePlayer(read_trace(self.spec.trace_path())))
        if op.source == "model":
            m = op.model
            params = OperatorModelParams(
                goal_object=str(m["goal_object"]),
                arm=str(m.get("arm", "left")),
                short_stop=float(m.get("short_stop", 0.05)),
                jitter_sigma=float(m.get("jitter_sigma", 0.02)),
                reach_duration=float(m.get("reach_duration", 2.5)),
                correction_duration=float(m.get("correction_duration", 1.2)),
                settle_duration=float(m.get("settle_duration", 0.4)),
                correction_decay=float(m.get("correction_decay", 0.45)),
                lift_duration=float(m.get("lift_duration", 1.5)),
            )
            goal = next(g for g in self.spec.goals if g.object_id == params.goal_object)
            return ReactiveOperator(
                params, goal.position,
                self.spec.start_left.position, self.spec.start_right.position,
                self.spec.start_left.rotation, self.spec.start_right.rotation,
                seed=self.operator_seed,
            )
        raise ScenarioError("operator.source", f"engine cannot build source {op.source!r}")

    # -- per-tick pipeline ------------------------------------------------------
    def observation(self) -> Observation:
        return Observation(
            left_pos=self.realized[:3].copy(),
            right_pos=self.realized[3:].copy(),
            attached_objects=frozenset(self.attached),
        )

    def _schedule_kind(self, t: float):
        entry = None
        for e in self.spec.schedule:
            if e.time <= t + 1e-12:
                entry = e
        return entry

    def _coupling_allowed(self) -> bool:
        """The coordination selector: active only when both arms engage the
        same object, or while an object is being carried."""
        if self.attached:
            return True
        active = [g for g in self.spec.goals if g.object_id not in self.attached]
        if not active:
            return False

        def nearest_object(p):
            return min(active, key=lambda g: np.linalg.norm(g.position - p)).object_id

        return nearest_object(self.realized[:3]) == nearest_object(self.realized[3:])

    def _resolve_mode(self, t: float, cmd: OperatorCommand) -> GraspMode:
        entry = self._schedule_kind(t)
        kind = entry.kind if entry is not None else GraspKind.INDEPENDENT
        if cmd.mode_request is not None:
            kind = GraspKind(cmd.mode_request)
        if kind is GraspKind.INDEPENDENT or not self._coupling_allowed():
            return INDEPENDENT
        if self.mode.coordinated and self.mode.kind is kind:
            return self.mode  # keep the captured offset
        if entry is not None and entry.offset is not None:
            offset = entry.offset
        else:
            # capture the current relative pose in the commanded left frame
            offset = cmd.left_rot.T @ (self.realized[3:] - self.realized[:3])
        return GraspMode(kind, offset)

    def _command_rotations(self, cmd: OperatorCommand, mode: GraspMode) -> CommandRotations:
        if mode.kind is GraspKind.TOP_DOWN_FRONT:
            right = cmd.left_rot
        elif mode.kind is GraspKind.SIDE:
            right = cmd.left_rot @ rot_z(np.pi)
        else:
            right = cmd.right_rot
        return CommandRotations(cmd.left_rot, right, cmd.left_rot)

    def _update_filters(self, cmd: OperatorCommand, events: list[str]):
        delta = self.spec.delta
        for idx, (side, meas) in enumerate((("left", cmd.left_pos), ("right", cmd.right_pos))):
            try:
                if self.filters[idx] is None:
                    self.filters[idx] = init_filter(
                        meas, self.spec.intent_process_noise, self.spec.intent_measurement_noise
                    )
                else:
                    self.filters[idx] = kf_update(self.filters[idx], meas, delta)
            except ValueError:
                events.append(f"bad_measurement:{side}")

    def _solve_arm_joints(self, side: str, idx: int, position, rotation, events: list[str]):
        model = self._arm_model(side)
        sols = armkin.ik(model, position, rotation)
        if not sols:
            events.append(f"ik_failure:{side}")
            return
        self.joints[idx] = armkin.select_solution(
            sols, self.joints[idx], model.posture,
            self.spec.selection_w_current * np.ones(6),
            self.spec.selection_w_posture * np.ones(6),
        )

    def _lidar_hits(self) -> list[tuple[np.ndarray, float]]:
        spec = self.spec
        if not spec.base_obstacles:
            return []
        x, y, theta = self.base_pose
        hits = []
        for k in range(spec.ray_count):
            a = 2.0 * np.pi * k / spec.ray_count
            d_world = np.array([np.cos(theta + a), np.sin(theta + a)])
            best = math.inf
            for obs in spec.base_obstacles:
                rel = obs.center - np.array([x, y])
                b = rel @ d_world
                c = rel @ rel - obs.radius**2
                disc = b * b - c
                if disc < 0:
                    continue
                t_hit = b - np.sqrt(disc)
                if 0 < t_hit < best:
                    best = t_hit
            if best < spec.stop_range:
                hits.append((np.array([np.cos(a), np.sin(a), 0.0]), best))
        return hits

    def _step_base(self, cmd: OperatorCommand):
        spec = self.spec
        twist = basekin.map_pads((cmd.pads[0], cmd.pads[1]), cmd.pads[2], spec.pad_scale)
        twist = basekin.gate_velocity(twist, self._lidar_hits(), spec.stop_range)
        x, y, theta = self.base_pose
        delta = spec.delta
        self.base_pose = np.array([
            x + (twist.v_x * np.cos(theta) - twist.v_y * np.sin(theta)) * delta,
            y + (twist.v_x * np.sin(theta) + twist.v_y * np.cos(theta)) * delta,
            theta + twist.omega_z * delta,
        ])
        return twist

    def _update_attachments(self, cmd: OperatorCommand, mode: GraspMode, events: list[str]):
        spec = self.spec
        self.grip = [bool(cmd.grip_left), bool(cmd.grip_right)]
        effectors = {"left": self.realized[:3], "right": self.realized[3:]}

        for oid, att in list(self.attached.items()):
            holder = 0 if att.arm == "left" else 1
            if not self.grip[holder]:
                del self.attached[oid]
                events.append(f"detach:{oid}")

        for arm_idx, side in enumerate(("left", "right")):
            if not self.grip[arm_idx]:
                continue
            for g in spec.goals:
                if g.object_id in self.attached:
                    continue
                if attach_check(True, effectors[side], g.position, spec.attach_radius):
                    holder = "left" if mode.coordinated else side
                    offset = self.object_positions[g.object_id] - effectors[holder]
                    self.attached[g.object_id] = Attachment(holder, offset)
                    events.append(f"attach:{g.object_id}")
                    break

        for oid, att in self.attached.items():
            self.object_positions[oid] = effectors[att.arm] + att.offset

    def _clearance_and_violation(self) -> tuple[float, float]:
        """Metric clearance (m) and worst keep-out violation at the realized state."""
        w = self.spec.world
        clearance = math.inf
        violation = 0.0
        for sl in (slice(0, 3), slice(3, 6)):
            p = self.realized[sl]
            for i in range(len(w.planes)):
                gap = float(w.planes.normals[i] @ p - w.planes.offsets[i])
                clearance = min(clearance, gap)
                violation = max(violation, -gap)
            for e in w.ellipsoids:
                d = p - e.center
                q = float(d @ e.shape_matrix @ d)
                radial = float(np.linalg.norm(d)) * (1.0 - np.sqrt(e.margin / q)) if q > 0 else -math.inf
                clearance = min(clearance, radial)
                violation = max(violation, e.margin - q)
        return clearance, violation

    def _completion(self) -> bool:
        spec = self.spec
        if not spec.objects:
            return False
        for oid, att in self.attached.items():
            obj = spec.objects[oid]
            lifted = self.object_positions[oid][2] >= obj.shelf_z + obj.lift_height
            if not lifted:
                continue
            clear = all(
                float((self.realized[sl] - e.center) @ e.shape_matrix @ (self.realized[sl] - e.center))
                >= e.margin
                for e in spec.world.ellipsoids
                for sl in (slice(0, 3), slice(3, 6))
            )
            if clear:
                return True
        return False

    def step(self, cmd: OperatorCommand | None) -> dict:
        """Advance one tick; returns the log record."""
        spec = self.spec
        t = self.tick * spec.delta
        events: list[str] = []
        if cmd is None:
            cmd = self.cmd  # hold the previous command (stale live session)
            events.append("hold")
        self.cmd = cmd

        self._update_filters(cmd, events)
        reference = propagate_reference(self.filters[0], self.filters[1], spec.control)
        mode = self._resolve_mode(t, cmd)
        command_rot = self._command_rotations(cmd, mode)
        weights = sharedcost.arbitration(self.realized, spec.goals, spec.control)

        active_goals = (
            GoalSet(tuple(g for g in spec.goals if g.object_id not in self.attached))
            if self.assist
            else GoalSet()
        )
        constraint_set = assemble(spec.world, mode, spec.control, reference.positions, command_rot)

        warm = self.prev_solution if mode.kind is self.prev_mode_kind else None
        waypoint, solution = mpc_step(
            EndEffectorPairState.from_stacked(self.realized),
            reference,
            active_goals,
            constraint_set,
            spec.control,
            spec.solver,
            warm,
        )
        if solution.converged:
            self.prev_solution = solution
        else:
            self.prev_solution = None
            events.append("solver_failure")
        self.prev_mode_kind = mode.kind

        if spec.waypoint_noise_sigma > 0:
            waypoint = waypoint + self.noise_rng.normal(scale=spec.waypoint_noise_sigma, size=6)
        self.realized = waypoint

        self._solve_arm_joints("left", 0, self.realized[:3], command_rot.left, events)
        self._solve_arm_joints("right", 1, self.realized[3:], command_rot.right, events)
        base_twist = self._step_base(cmd)
        self._update_attachments(cmd, mode, events)
        self.mode = mode

        clearance, violation = self._clearance_and_violation()
        track_err = (
            float(np.linalg.norm(self.realized[:3] - reference.positions[1][:3])),
            float(np.linalg.norm(self.realized[3:] - reference.positions[1][3:])),
        )
        done = self._completion()

        record = {
            "type": "tick",
            "tick": self.tick,
            "t": t,
            "cmd_left": cmd.left_pos.tolist(),
            "cmd_right": cmd.right_pos.tolist(),
            "cmd_rot_left": cmd.left_rot.reshape(9).tolist(),
            "cmd_rot_right": command_rot.right.reshape(9).tolist(),
            "ref0": reference.positions[0].tolist(),
            "ref1": reference.positions[1].tolist(),
            "real": self.realized.tolist(),
            "joints_left": self.joints[0].tolist(),
            "joints_right": self.joints[1].tolist(),
            "base": self.base_pose.tolist(),
            "base_twist": base_twist.array.tolist(),
            "w": [[wl, wr] for wl, wr in weights.per_goal],
            "mode": mode.kind.value,
            "grip": list(self.grip),
            "attached": sorted(self.attached),
            "objects": {oid: p.tolist() for oid, p in sorted(self.object_positions.items())},
            "viol": violation,
            "clear": clearance,
            "track_err": list(track_err),
            "solver": {
                "iters": solution.iterations,
                "outer": solution.outer_iterations,
                "converged": bool(solution.converged),
                "cost": solution.cost,
                "viol": solution.max_violation,
            },
            "events": events,
            "done": bool(done),
        }
        self.records.append(record)
        self._accumulate(record)
        self.tick += 1
        if done:
            self.done = True
        return record

    def _accumulate(self, rec: dict):
        m = self.metrics
        m.duration = rec["t"]
        real = np.asarray(rec["real"])
        m.inter_effector_distances.append(float(np.linalg.norm(real[3:] - real[:3])))
        m.tracking_errors.append(tuple(rec["track_err"]))
        m.min_clearance = min(m.min_clearance, rec["clear"])
        if rec["viol"] > self.spec.solver.constraint_tol:
            m.collision_count += 1
        if not rec["solver"]["converged"]:
            m.solver_failures += 1
        if rec["done"] and not m.completed:
            m.completed = True
            m.completion_time = rec["t"]

    def _finalize_metrics(self):
        if self.spec.goals and self.records:
            real = self.realized
            self.metrics.terminal_goal_error = (
                min(float(np.linalg.norm(real[:3] - g.position)) for g in self.spec.goals),
                min(float(np.linalg.norm(real[3:] - g.position)) for g in self.spec.goals),
            )

    def run(self) -> tuple[RunMetrics, list[dict]]:
        spec = self.spec
        while not self.done:
            t = self.tick * spec.delta
            if t > spec.max_duration or self.operator_source.finished(t):
                break
            cmd = self.operator_source.command_for_tick(self.tick, t, self.observation())
            self.step(cmd)
        self._finalize_metrics()
        return self.metrics, self.records


def run_scenario(
    spec: ScenarioSpec,
    assist: bool = True,
    seed: int | None = None,
    operator_source=None,
) -> tuple[RunMetrics, list[dict]]:
    """Run a scenario to completion or trace end; returns metrics and the log."""
    engine = Engine(spec, assist=assist, seed=seed, operator_source=operator_source)
    return engine.run()
