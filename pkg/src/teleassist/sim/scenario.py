"""Scenario files: world geometry, robot parameters, control configuration,
operator source, and grasp-mode schedule, loaded from YAML with field-path
error reporting."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..alilqr import SolverConfig
from ..armkin import ArmModel, ur5e_arm
from ..basekin import MecanumParams
from ..constraints import ConstraintWorld
from ..worldmodel import (
    EllipsoidObstacle,
    Goal,
    GoalSet,
    GraspKind,
    PlaneSet,
    SharedControlConfig,
    check_rot3,
    rot_rpy,
)


class ScenarioError(ValueError):
    """Validation failure, annotated with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _req(d: dict, key: str, path: str):
    if key not in d:
        raise ScenarioError(f"{path}.{key}", "missing required field")
    return d[key]


def _num(value, path: str, positive=False, nonnegative=False) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    v = float(value)
    if positive and v <= 0:
        raise ScenarioError(path, f"must be positive, got {v}")
    if nonnegative and v < 0:
        raise ScenarioError(path, f"must be >= 0, got {v}")
    return v


def _vec(value, n: int, path: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ScenarioError(path, f"expected a list of {n} numbers")
    return np.array([_num(v, f"{path}[{i}]") for i, v in enumerate(value)])


def _rot(entry: dict, path: str) -> np.ndarray:
    if "rpy_deg" in entry:
        r, p, y = np.deg2rad(_vec(entry["rpy_deg"], 3, f"{path}.rpy_deg"))
        return rot_rpy(r, p, y)
    if "rot" in entry:
        m = _vec(entry["rot"], 9, f"{path}.rot").reshape(3, 3)
        try:
            return check_rot3(m)
        except ValueError as exc:
            raise ScenarioError(f"{path}.rot", str(exc)) from exc
    return np.eye(3)


@dataclass(frozen=True)
class ObjectSpec:
    object_id: str
    shelf_z: float
    lift_height: float


@dataclass(frozen=True)
class BaseObstacle:
    center: np.ndarray  # world-frame (x, y)
    radius: float


@dataclass(frozen=True)
class ScheduleEntry:
    time: float
    kind: GraspKind
    offset: np.ndarray | None  # None means capture at activation ("auto")


@dataclass(frozen=True)
class StartPose:
    position: np.ndarray
    rotation: np.ndarray


@dataclass(frozen=True)
class OperatorSpec:
    source: str                     # "trace" | "model" | "bridge"
    trace_file: str | None = None
    model: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    tick_rate: float
    max_duration: float
    seed: int
    waypoint_noise_sigma: float
    task_required: bool
    arm_left: ArmModel
    arm_right: ArmModel
    selection_w_current: float
    selection_w_posture: float
    mecanum: MecanumParams
    pad_scale: tuple[float, float, float]
    stop_range: float
    ray_count: int
    base_obstacles: tuple[BaseObstacle, ...]
    world: ConstraintWorld
    goals: GoalSet
    objects: dict[str, ObjectSpec]
    control: SharedControlConfig
    solver: SolverConfig
    intent_process_noise: float
    intent_measurement_noise: float
    attach_radius: float
    start_left: StartPose
    start_right: StartPose
    start_base: np.ndarray
    operator: OperatorSpec
    schedule: tuple[ScheduleEntry, ...]
    source_dir: Path | None = None

    @property
    def delta(self) -> float:
        return 1.0 / self.tick_rate

    def trace_path(self) -> Path:
        if self.operator.trace_file is None:
            raise ScenarioError("operator.trace_file", "trace source needs a file")
        p = Path(self.operator.trace_file)
        if not p.is_absolute() and self.source_dir is not None:
            p = self.source_dir / p
        return p


def _load_arms(d: dict, path: str) -> tuple[ArmModel, ArmModel, float, float]:
    mounts = _req(d, "mounts", path)
    models = {}
    for side in ("left", "right"):
        m = _req(mounts, side, f"{path}.mounts")
        tr = _vec(_req(m, "translation", f"{path}.mounts.{side}"), 3, f"{path}.mounts.{side}.translation")
        yaw = np.deg2rad(_num(m.get("yaw_deg", 0.0), f"{path}.mounts.{side}.yaw_deg"))
        kwargs = {}
        if "posture_deg" in d:
            kwargs["posture"] = np.deg2rad(_vec(d["posture_deg"], 6, f"{path}.posture_deg"))
        if "lower_deg" in d:
            kwargs["lower"] = np.deg2rad(_vec(d["lower_deg"], 6, f"{path}.lower_deg"))
        if "upper_deg" in d:
            kwargs["upper"] = np.deg2rad(_vec(d["upper_deg"], 6, f"{path}.upper_deg"))
        models[side] = ur5e_arm(mount_translation=tr, mount_rotation=rot_rpy(0, 0, yaw), **kwargs)
    sw = d.get("selection_weights", {})
    w_cur = _num(sw.get("current", 1.0), f"{path}.selection_weights.current", nonnegative=True)
    w_post = _num(sw.get("posture", 0.1), f"{path}.selection_weights.posture", nonnegative=True)
    return models["left"], models["right"], w_cur, w_post


def _load_world(d: dict, path: str) -> tuple[ConstraintWorld, GoalSet, dict[str, ObjectSpec]]:
    planes_in = d.get("planes", [])
    normals, offsets, labels = [], [], []
    for i, p in enumerate(planes_in):
        pp = f"{path}.planes[{i}]"
        n = _vec(_req(p, "normal", pp), 3, f"{pp}.normal")
        nn = np.linalg.norm(n)
        if nn < 1e-12:
            raise ScenarioError(f"{pp}.normal", "zero normal")
        normals.append(n / nn)
        offsets.append(_num(_req(p, "offset", pp), f"{pp}.offset"))
        labels.append(str(p.get("label", f"plane{i}")))
    planes = PlaneSet(np.array(normals).reshape(-1, 3), np.array(offsets), tuple(labels))

    ellipsoids = []
    for i, e in enumerate(d.get("ellipsoids", [])):
        ep = f"{path}.ellipsoids[{i}]"
        center = _vec(_req(e, "center", ep), 3, f"{ep}.center")
        rot = _rot(e, ep)
        label = str(e.get("label", f"ellipsoid{i}"))
        if "semi_axes" in e:
            axes = _vec(e["semi_axes"], 3, f"{ep}.semi_axes")
            if np.any(axes <= 0):
                raise ScenarioError(f"{ep}.semi_axes", "must be positive")
            ellipsoids.append(EllipsoidObstacle.from_semi_axes(center, rot, axes, label))
        else:
            scale = _vec(_req(e, "scale", ep), 3, f"{ep}.scale")
            margin = _num(_req(e, "margin", ep), f"{ep}.margin", positive=True)
            ellipsoids.append(EllipsoidObstacle(center, rot, scale, margin, label))

    goals = []
    for i, g in enumerate(d.get("goals", [])):
        gp = f"{path}.goals[{i}]"
        goals.append(
            Goal(
                position=_vec(_req(g, "position", gp), 3, f"{gp}.position"),
                frame=_rot(g, gp),
                object_id=str(_req(g, "object", gp)),
                approach_weights=_vec(g.get("approach_weights", [1.0, 1.0, 1.0]), 3, f"{gp}.approach_weights"),
                arm=str(g.get("arm", "both")),
            )
        )

    objects = {}
    for i, o in enumerate(d.get("objects", [])):
        op = f"{path}.objects[{i}]"
        oid = str(_req(o, "id", op))
        objects[oid] = ObjectSpec(
            object_id=oid,
            shelf_z=_num(_req(o, "shelf_z", op), f"{op}.shelf_z"),
            lift_height=_num(o.get("lift_height", 0.05), f"{op}.lift_height", positive=True),
        )
    for i, g in enumerate(goals):
        if g.object_id not in objects:
            raise ScenarioError(f"{path}.goals[{i}].object", f"unknown object {g.object_id!r}")
    return ConstraintWorld(planes=planes, ellipsoids=tuple(ellipsoids)), GoalSet(tuple(goals)), objects


def _load_control(d: dict, path: str) -> SharedControlConfig:
    n = int(_num(_req(d, "horizon_steps", path), f"{path}.horizon_steps", positive=True))
    t = _num(_req(d, "horizon_seconds", path), f"{path}.horizon_seconds", positive=True)
    try:
        return SharedControlConfig(
            q_diag=_vec(_req(d, "q_diag", path), 6, f"{path}.q_diag"),
            r_diag=_vec(_req(d, "r_diag", path), 6, f"{path}.r_diag"),
            p_diag=_vec(_req(d, "p_diag", path), 6, f"{path}.p_diag"),
            alpha_w=_num(_req(d, "alpha_w", path), f"{path}.alpha_w", positive=True),
            beta_w=_num(_req(d, "beta_w", path), f"{path}.beta_w"),
            delta=t / n,
            horizon_T=t,
            horizon_N=n,
            u_min=_vec(_req(d, "u_min", path), 3, f"{path}.u_min"),
            u_max=_vec(_req(d, "u_max", path), 3, f"{path}.u_max"),
            arm_goal_masking=bool(d.get("arm_goal_masking", False)),
        )
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from exc


def _load_solver(d: dict, path: str) -> SolverConfig:
    try:
        return SolverConfig(
            max_outer=int(d.get("max_outer", 8)),
            max_inner=int(d.get("max_inner", 40)),
            mu0=_num(d.get("mu0", 1.0), f"{path}.mu0", positive=True),
            penalty_growth=_num(d.get("penalty_growth", 10.0), f"{path}.penalty_growth"),
            constraint_tol=_num(d.get("constraint_tol", 1e-4), f"{path}.constraint_tol", positive=True),
            cost_tol=_num(d.get("cost_tol", 1e-9), f"{path}.cost_tol", positive=True),
        )
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from exc


def _load_schedule(entries, path: str) -> tuple[ScheduleEntry, ...]:
    out = []
    kinds = {k.value: k for k in GraspKind}
    for i, e in enumerate(entries):
        ep = f"{path}[{i}]"
        kind_name = str(_req(e, "mode", ep))
        if kind_name not in kinds:
            raise ScenarioError(f"{ep}.mode", f"unknown mode {kind_name!r}, expected one of {sorted(kinds)}")
        kind = kinds[kind_name]
        offset = None
        if kind is not GraspKind.INDEPENDENT:
            raw = e.get("offset", "auto")
            if raw != "auto":
                offset = _vec(raw, 3, f"{ep}.offset")
        out.append(ScheduleEntry(_num(_req(e, "time", ep), f"{ep}.time", nonnegative=True), kind, offset))
    times = [e.time for e in out]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ScenarioError(path, "schedule times must be strictly increasing")
    return tuple(out)


def load_scenario(path) -> ScenarioSpec:
    """Parse and validate a scenario file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ScenarioError(str(path), "scenario file not found") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(str(path), f"invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError(str(path), "scenario must be a mapping")
    return scenario_from_dict(raw, source_dir=path.parent)


def scenario_from_dict(raw: dict, source_dir: Path | None = None) -> ScenarioSpec:
    tick_rate = _num(_req(raw, "tick_rate_hz", "scenario"), "tick_rate_hz", positive=True)
    arm_left, arm_right, w_cur, w_post = _load_arms(_req(raw, "arms", "scenario"), "arms")
    world, goals, objects = _load_world(raw.get("world", {}), "world")
    control = _load_control(_req(raw, "control", "scenario"), "control")
    solver = _load_solver(raw.get("solver", {}), "solver")

    base = raw.get("base", {})
    mec = base.get("mecanum", {})
    mecanum = MecanumParams(
        wheel_radius=_num(mec.get("wheel_radius", 0.0762), "base.mecanum.wheel_radius", positive=True),
        half_length_x=_num(mec.get("half_length_x", 0.25), "base.mecanum.half_length_x", positive=True),
        half_length_y=_num(mec.get("half_length_y", 0.20), "base.mecanum.half_length_y", positive=True),
    )
    base_obstacles = []
    for i, o in enumerate(base.get("obstacles", [])):
        op = f"base.obstacles[{i}]"
        base_obstacles.append(
            BaseObstacle(
                center=_vec(_req(o, "center", op), 2, f"{op}.center"),
                radius=_num(_req(o, "radius", op), f"{op}.radius", positive=True),
            )
        )

    start = _req(raw, "start", "scenario")
    def load_pose(side: str) -> StartPose:
        s = _req(start, side, "start")
        return StartPose(
            position=_vec(_req(s, "position", f"start.{side}"), 3, f"start.{side}.position"),
            rotation=_rot(s, f"start.{side}"),
        )

    op_raw = raw.get("operator", {"source": "trace"})
    source = str(_req(op_raw, "source", "operator"))
    if source not in ("trace", "model", "bridge"):
        raise ScenarioError("operator.source", f"unknown source {source!r}")
    operator = OperatorSpec(
        source=source,
        trace_file=op_raw.get("trace_file"),
        model=op_raw.get("model", {}),
    )
    if source == "trace" and operator.trace_file is None:
        raise ScenarioError("operator.trace_file", "required for trace source")
    if source == "model" and "goal_object" not in operator.model:
        raise ScenarioError("operator.model.goal_object", "required for model source")

    intent = raw.get("intent", {})
    return ScenarioSpec(
        name=str(raw.get("name", "scenario")),
        tick_rate=tick_rate,
        max_duration=_num(raw.get("max_duration_s", 120.0), "max_duration_s", positive=True),
        seed=int(raw.get("seed", 0)),
        waypoint_noise_sigma=_num(raw.get("waypoint_noise_sigma", 0.0), "waypoint_noise_sigma", nonnegative=True),
        task_required=bool(raw.get("task_required", bool(objects))),
        arm_left=arm_left,
        arm_right=arm_right,
        selection_w_current=w_cur,
        selection_w_posture=w_post,
        mecanum=mecanum,
        pad_scale=tuple(_vec(base.get("pad_scale", [0.5, 0.5, 1.0]), 3, "base.pad_scale")),
        stop_range=_num(base.get("stop_range", 0.5), "base.stop_range", positive=True),
        ray_count=int(_num(base.get("ray_count", 72), "base.ray_count", positive=True)),
        base_obstacles=tuple(base_obstacles),
        world=world,
        goals=goals,
        objects=objects,
        control=control,
        solver=solver,
        intent_process_noise=_num(intent.get("process_noise", 1e-2), "intent.process_noise", positive=True),
        intent_measurement_noise=_num(intent.get("measurement_noise", 1e-4), "intent.measurement_noise", positive=True),
        attach_radius=_num(raw.get("attach_radius", 0.02), "attach_radius", positive=True),
        start_left=load_pose("left"),
        start_right=load_pose("right"),
        start_base=_vec(start.get("base", [0.0, 0.0, 0.0]), 3, "start.base"),
        operator=operator,
        schedule=_load_schedule(raw.get("grasp_schedule", []), "grasp_schedule"),
        source_dir=source_dir,
    )
