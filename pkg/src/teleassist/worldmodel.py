"""Shared geometric and configuration types used across the planner and simulator.

Conventions: positions in meters, velocities in m/s, angles in radians,
all vectors expressed in the robot base frame unless stated otherwise.
Stacked 6-vectors always order [left(0:3), right(3:6)].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

ROT_TOL = 1e-9

LEFT = slice(0, 3)
RIGHT = slice(3, 6)


def vec3(x, y=None, z=None) -> np.ndarray:
    """Build a finite 3-vector from components or any length-3 sequence."""
    if y is None:
        v = np.asarray(x, dtype=float).reshape(3).copy()
    else:
        v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vec3 components must be finite, got {v}")
    return v


def check_rot3(r: np.ndarray, tol: float = ROT_TOL) -> np.ndarray:
    """Validate a 3x3 rotation matrix: orthonormal and det +1 within tol."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got shape {r.shape}")
    err = np.abs(r.T @ r - np.eye(3)).max()
    if err > tol:
        raise ValueError(f"rotation not orthonormal (max |R^T R - I| = {err:.3e})")
    det = np.linalg.det(r)
    if abs(det - 1.0) > tol:
        raise ValueError(f"rotation determinant {det} != +1")
    return r


def stack(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Concatenate left and right arm 3-vectors into a stacked 6-vector."""
    return np.concatenate([vec3(left), vec3(right)])


def split(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of stack: (left, right) slices of a stacked 6-vector."""
    x = np.asarray(x, dtype=float).reshape(6)
    return x[LEFT].copy(), x[RIGHT].copy()


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Z-Y-X extrinsic roll/pitch/yaw composition."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


@dataclass(frozen=True)
class EndEffectorPairState:
    """Positions of both end effectors; the optimal-control state."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "left", vec3(self.left))
        object.__setattr__(self, "right", vec3(self.right))

    @property
    def stacked(self) -> np.ndarray:
        return stack(self.left, self.right)

    @classmethod
    def from_stacked(cls, x: np.ndarray) -> "EndEffectorPairState":
        left, right = split(x)
        return cls(left, right)


@dataclass(frozen=True)
class VelocityPair:
    """Commanded velocities of both end effectors (m/s)."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "left", vec3(self.left))
        object.__setattr__(self, "right", vec3(self.right))

    @property
    def stacked(self) -> np.ndarray:
        return stack(self.left, self.right)


@dataclass(frozen=True)
class Goal:
    """A reachable grasp point: position, approach frame, and owning object.

    approach_weights scale the per-axis attraction expressed in the goal
    frame, so each goal can prefer its own approach direction.
    """

    position: np.ndarray
    frame: np.ndarray  # goal-from-base rotation
    object_id: str
    approach_weights: np.ndarray
    arm: str = "both"  # "left" | "right" | "both"; only used when masking is on

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        object.__setattr__(self, "frame", check_rot3(self.frame))
        w = np.asarray(self.approach_weights, dtype=float).reshape(3)
        if np.any(w <= 0):
            raise ValueError("approach_weights must be positive")
        object.__setattr__(self, "approach_weights", w)
        if self.arm not in ("left", "right", "both"):
            raise ValueError(f"goal arm must be left/right/both, got {self.arm!r}")

    @property
    def stacked(self) -> np.ndarray:
        """Goal position duplicated for both arm blocks."""
        return np.concatenate([self.position, self.position])


@dataclass(frozen=True)
class GoalSet:
    goals: tuple[Goal, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(self.goals))

    def __len__(self) -> int:
        return len(self.goals)

    def __iter__(self):
        return iter(self.goals)

    def __getitem__(self, i) -> Goal:
        return self.goals[i]


@dataclass(frozen=True)
class EllipsoidObstacle:
    """Keep-out ellipsoid: feasible iff (p-c)^T R M R^T (p-c) >= margin."""

    center: np.ndarray
    orientation: np.ndarray
    scale: np.ndarray  # diagonal of M
    margin: float  # alpha_e
    label: str = "ellipsoid"

    def __post_init__(self):
        object.__setattr__(self, "center", vec3(self.center))
        object.__setattr__(self, "orientation", check_rot3(self.orientation))
        s = np.asarray(self.scale, dtype=float).reshape(3)
        if np.any(s <= 0):
            raise ValueError("ellipsoid scale must be positive")
        object.__setattr__(self, "scale", s)
        if self.margin <= 0:
            raise ValueError("ellipsoid margin must be positive")

    @property
    def shape_matrix(self) -> np.ndarray:
        """R M R^T of the quadratic form."""
        r = self.orientation
        return r @ np.diag(self.scale) @ r.T

    @classmethod
    def from_semi_axes(cls, center, orientation, semi_axes, label="ellipsoid"):
        """Ellipsoid with the given semi-axis lengths (margin fixed at 1)."""
        s = np.asarray(semi_axes, dtype=float).reshape(3)
        if np.any(s <= 0):
            raise ValueError("semi-axes must be positive")
        return cls(center, orientation, 1.0 / s**2, 1.0, label)


@dataclass(frozen=True)
class PlaneSet:
    """Half-space constraints a^T p >= b per row, normals unit-length."""

    normals: np.ndarray  # (n, 3)
    offsets: np.ndarray  # (n,)
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        n = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        b = np.asarray(self.offsets, dtype=float).reshape(-1)
        if n.shape[0] != b.shape[0]:
            raise ValueError("normals and offsets must have matching counts")
        norms = np.linalg.norm(n, axis=1)
        if n.shape[0] and np.abs(norms - 1.0).max() > ROT_TOL:
            raise ValueError("plane normals must be unit length")
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "offsets", b)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"plane{i}" for i in range(len(b))))

    def __len__(self) -> int:
        return len(self.offsets)

    @classmethod
    def empty(cls) -> "PlaneSet":
        return cls(np.zeros((0, 3)), np.zeros(0))


class GraspKind(enum.Enum):
    INDEPENDENT = "independent"
    TOP_DOWN_FRONT = "top_down_front"
    SIDE = "side"


@dataclass(frozen=True)
class GraspMode:
    """Coordination mode, with the right-in-left grasp offset when coupled."""

    kind: GraspKind
    grasp_offset: np.ndarray | None = None

    def __post_init__(self):
        if self.kind is GraspKind.INDEPENDENT:
            if self.grasp_offset is not None:
                raise ValueError("independent mode carries no grasp offset")
        else:
            if self.grasp_offset is None:
                raise ValueError(f"{self.kind.value} mode requires a grasp offset")
            object.__setattr__(self, "grasp_offset", vec3(self.grasp_offset))

    @property
    def coordinated(self) -> bool:
        return self.kind is not GraspKind.INDEPENDENT


INDEPENDENT = GraspMode(GraspKind.INDEPENDENT)


@dataclass(frozen=True)
class SharedControlConfig:
    """Weights, arbitration shape, horizon and bounds for one control setup."""

    q_diag: np.ndarray       # tracking weight diagonal, >= 0
    r_diag: np.ndarray       # control weight diagonal, > 0
    p_diag: np.ndarray       # default goal attraction diagonal, > 0
    alpha_w: float           # arbitration sigmoid steepness, > 0
    beta_w: float            # arbitration sigmoid offset
    delta: float             # step length [s]
    horizon_T: float         # horizon length [s]
    horizon_N: int           # steps in horizon
    u_min: np.ndarray        # per-arm lower velocity bound (3,)
    u_max: np.ndarray        # per-arm upper velocity bound (3,)
    arm_goal_masking: bool = False

    def __post_init__(self):
        q = np.asarray(self.q_diag, dtype=float).reshape(6)
        r = np.asarray(self.r_diag, dtype=float).reshape(6)
        p = np.asarray(self.p_diag, dtype=float).reshape(6)
        if np.any(q < 0):
            raise ValueError("tracking weight diagonal must be >= 0")
        if np.any(r <= 0):
            raise ValueError("control weight diagonal must be > 0")
        if np.any(p <= 0):
            raise ValueError("goal weight diagonal must be > 0")
        object.__setattr__(self, "q_diag", q)
        object.__setattr__(self, "r_diag", r)
        object.__setattr__(self, "p_diag", p)
        if self.alpha_w <= 0:
            raise ValueError("alpha_w must be positive")
        if self.horizon_N < 1:
            raise ValueError("horizon_N must be >= 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if abs(self.delta * self.horizon_N - self.horizon_T) > 1e-12:
            raise ValueError(
                f"delta*horizon_N = {self.delta * self.horizon_N} "
                f"does not equal horizon_T = {self.horizon_T}"
            )
        object.__setattr__(self, "u_min", vec3(self.u_min))
        object.__setattr__(self, "u_max", vec3(self.u_max))
        if np.any(self.u_min >= self.u_max):
            raise ValueError("u_min must be strictly below u_max")

    @property
    def u_min6(self) -> np.ndarray:
        return np.concatenate([self.u_min, self.u_min])

    @property
    def u_max6(self) -> np.ndarray:
        return np.concatenate([self.u_max, self.u_max])
