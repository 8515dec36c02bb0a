"""Constraint assembly for one optimal-control solve.

Inequalities (feasible when <= 0): half-space keep-outs per arm, ellipsoid
keep-outs per arm, and velocity bounds. Equalities: the coordinated-grasp
position couplings, which pin the left effector to its reference and the
right effector to a fixed offset in the commanded left frame.

Orientation couplings cannot live inside the position-only OCP; they are
enforced upstream by projecting the commanded right orientation from the
left, and surfaced here as constant diagnostic residual blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .worldmodel import (
    LEFT,
    RIGHT,
    EllipsoidObstacle,
    GraspKind,
    GraspMode,
    PlaneSet,
    SharedControlConfig,
    check_rot3,
    rot_z,
)

_EMPTY = np.zeros(0)


def plane_residuals(planes: PlaneSet, x: np.ndarray) -> np.ndarray:
    """Per plane, per arm: b - a^T p <= 0 when feasible. Order: plane-major,
    left arm then right arm."""
    x = np.asarray(x, dtype=float).reshape(6)
    out = np.empty(2 * len(planes))
    for i in range(len(planes)):
        n, b = planes.normals[i], planes.offsets[i]
        out[2 * i] = b - n @ x[LEFT]
        out[2 * i + 1] = b - n @ x[RIGHT]
    return out


def ellipsoid_residual(obs: EllipsoidObstacle, p: np.ndarray) -> float:
    """margin - (p-c)^T R M R^T (p-c); feasible (outside) when <= 0."""
    d = np.asarray(p, dtype=float).reshape(3) - obs.center
    return obs.margin - float(d @ obs.shape_matrix @ d)


def ellipsoid_gradient(obs: EllipsoidObstacle, p: np.ndarray) -> np.ndarray:
    d = np.asarray(p, dtype=float).reshape(3) - obs.center
    return -2.0 * (obs.shape_matrix @ d)


def velocity_bound_residuals(u: np.ndarray, cfg: SharedControlConfig) -> np.ndarray:
    """[u - u_max; u_min - u], twelve entries, feasible when <= 0."""
    u = np.asarray(u, dtype=float).reshape(6)
    return np.concatenate([u - cfg.u_max6, cfg.u_min6 - u])


def coupling_residuals(
    mode: GraspMode,
    x_left: np.ndarray,
    x_right: np.ndarray,
    rot_left: np.ndarray,
    rot_right: np.ndarray,
    rot_left_cmd: np.ndarray,
    xd_left: np.ndarray,
) -> np.ndarray:
    """Diagnostic residual vector for the coordinated-grasp constraints.

    Entries: the two position residual norms (left-to-reference and
    right-to-left-offset), then the flattened orientation residual blocks
    of the active mode. Independent mode couples nothing: empty vector.
    """
    if not mode.coordinated:
        return np.zeros(0)
    x_left = np.asarray(x_left, dtype=float).reshape(3)
    x_right = np.asarray(x_right, dtype=float).reshape(3)
    xd_left = np.asarray(xd_left, dtype=float).reshape(3)
    rot_left = check_rot3(rot_left)
    rot_right = check_rot3(rot_right)
    rot_left_cmd = check_rot3(rot_left_cmd)

    pos = [
        np.linalg.norm(x_left - xd_left),
        np.linalg.norm(x_right - (x_left + rot_left @ mode.grasp_offset)),
    ]
    if mode.kind is GraspKind.TOP_DOWN_FRONT:
        blocks = [rot_left.T @ rot_right - np.eye(3), rot_left.T @ rot_left_cmd - np.eye(3)]
    else:  # side grasp: arms face each other, right flipped about z
        blocks = [rot_left.T @ rot_left_cmd - np.eye(3), rot_right.T @ rot_left - rot_z(np.pi)]
    return np.concatenate([pos] + [b.reshape(9) for b in blocks])


@dataclass(frozen=True)
class ConstraintWorld:
    """Static collision geometry seen by one solve."""

    planes: PlaneSet = field(default_factory=PlaneSet.empty)
    ellipsoids: tuple[EllipsoidObstacle, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ellipsoids", tuple(self.ellipsoids))


@dataclass(frozen=True)
class CommandRotations:
    """Commanded orientation channel, constant over one solve horizon."""

    left: np.ndarray
    right: np.ndarray
    left_operator: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "left", check_rot3(self.left))
        object.__setattr__(self, "right", check_rot3(self.right))
        object.__setattr__(self, "left_operator", check_rot3(self.left_operator))


class ConstraintSet:
    """Stagewise residual/Jacobian evaluation for the solver.

    State inequalities and the coupling equalities apply at stages 1..N
    (stage 0 is the fixed initial state); velocity bounds apply at stages
    0..N-1.
    """

    def __init__(
        self,
        world: ConstraintWorld,
        mode: GraspMode,
        cfg: SharedControlConfig,
        reference_positions: np.ndarray | None = None,
        command_rot: CommandRotations | None = None,
    ):
        self.world = world
        self.mode = mode
        self.cfg = cfg
        self.horizon = cfg.horizon_N
        if mode.coordinated:
            if reference_positions is None or command_rot is None:
                raise ValueError("coordinated mode needs a reference and command rotations")
        self.reference_positions = (
            None if reference_positions is None else np.asarray(reference_positions, dtype=float)
        )
        self.command_rot = command_rot

        planes = world.planes
        n_p, n_e = len(planes), len(world.ellipsoids)
        self._n_state_ineq = 2 * n_p + 2 * n_e
        # constant pieces, hoisted out of the per-stage evaluation
        jx = np.zeros((2 * n_p, 6))
        for i in range(n_p):
            jx[2 * i, LEFT] = -planes.normals[i]
            jx[2 * i + 1, RIGHT] = -planes.normals[i]
        self._plane_jx = jx
        self._plane_b = np.repeat(planes.offsets, 2)
        self._bound_ju = np.vstack([np.eye(6), -np.eye(6)])
        self._u_max6 = cfg.u_max6
        self._u_min6 = cfg.u_min6
        self._ell_centers = [e.center for e in world.ellipsoids]
        self._ell_mats = [e.shape_matrix for e in world.ellipsoids]
        self._ell_margins = [e.margin for e in world.ellipsoids]
        if mode.coordinated:
            self._offset_base = command_rot.left @ mode.grasp_offset
            hx = np.zeros((6, 6))
            hx[0:3, LEFT] = np.eye(3)
            hx[3:6, LEFT] = -np.eye(3)
            hx[3:6, RIGHT] = np.eye(3)
            self._eq_hx = hx
        self.labels = tuple(
            [f"{lbl}/{arm}" for lbl in planes.labels for arm in ("L", "R")]
            + [f"{e.label}/{arm}" for e in world.ellipsoids for arm in ("L", "R")]
        )

    # -- counting -----------------------------------------------------------
    @property
    def inequality_count_per_stage(self) -> int:
        """State keep-outs per arm plus the twelve velocity bound rows."""
        return self._n_state_ineq + 12

    @property
    def equality_block_count(self) -> int:
        return 2 if self.mode.coordinated else 0

    @property
    def orientation_block_count(self) -> int:
        return 2 if self.mode.coordinated else 0

    # -- stagewise evaluation ------------------------------------------------
    def _state_residuals(self, x: np.ndarray, out: np.ndarray) -> None:
        n_p = len(self.world.planes)
        if n_p:
            out[: 2 * n_p] = self._plane_b + self._plane_jx @ x
        row = 2 * n_p
        for c, s, m in zip(self._ell_centers, self._ell_mats, self._ell_margins):
            d = x[LEFT] - c
            out[row] = m - d @ s @ d
            d = x[RIGHT] - c
            out[row + 1] = m - d @ s @ d
            row += 2

    def state_inequalities(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(residuals, Jacobian wrt x) of plane and ellipsoid keep-outs."""
        n_p = len(self.world.planes)
        r = np.empty(self._n_state_ineq)
        self._state_residuals(x, r)
        jx = np.zeros((self._n_state_ineq, 6))
        if n_p:
            jx[: 2 * n_p] = self._plane_jx
        row = 2 * n_p
        for c, s in zip(self._ell_centers, self._ell_mats):
            jx[row, LEFT] = -2.0 * (s @ (x[LEFT] - c))
            jx[row + 1, RIGHT] = -2.0 * (s @ (x[RIGHT] - c))
            row += 2
        return r, jx

    def control_inequalities(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return velocity_bound_residuals(u, self.cfg), self._bound_ju

    def equalities(self, i: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Coupling equalities h(x) = 0 at stage i (vector form, exact Jacobians)."""
        if not self.mode.coordinated or i == 0:
            return np.zeros(0), np.zeros((0, 6))
        h = np.empty(6)
        h[:3] = x[LEFT] - self.reference_positions[i, LEFT]
        h[3:] = x[RIGHT] - x[LEFT] - self._offset_base
        return h, self._eq_hx

    def stage_sizes(self, i: int) -> tuple[int, int]:
        """(inequality, equality) residual sizes at stage i."""
        n = self.horizon
        n_ineq = (self._n_state_ineq if i >= 1 else 0) + (12 if i < n else 0)
        n_eq = 6 if (self.mode.coordinated and i >= 1) else 0
        return n_ineq, n_eq

    def stage_residuals(self, i: int, x: np.ndarray, u: np.ndarray | None):
        """Residual values only (merit and violation checks): (c, h)."""
        n = self.horizon
        n_state = self._n_state_ineq if i >= 1 else 0
        n_ctrl = 12 if i < n else 0
        c = np.empty(n_state + n_ctrl)
        if n_state:
            self._state_residuals(x, c[:n_state])
        if n_ctrl:
            c[n_state : n_state + 6] = u - self._u_max6
            c[n_state + 6 :] = self._u_min6 - u
        if self.mode.coordinated and i >= 1:
            h = np.empty(6)
            h[:3] = x[LEFT] - self.reference_positions[i, LEFT]
            h[3:] = x[RIGHT] - x[LEFT] - self._offset_base
        else:
            h = _EMPTY
        return c, h

    def stage_eval(self, i: int, x: np.ndarray, u: np.ndarray | None):
        """Residuals and Jacobians at stage i: (c, Jx, Ju, h, Hx)."""
        n = self.horizon
        n_state = self._n_state_ineq if i >= 1 else 0
        n_ctrl = 12 if i < n else 0
        c = np.empty(n_state + n_ctrl)
        cjx = np.zeros((n_state + n_ctrl, 6))
        cju = np.zeros((n_state + n_ctrl, 6))
        if n_state:
            c[:n_state], cjx[:n_state] = self.state_inequalities(x)
        if n_ctrl:
            c[n_state : n_state + 6] = u - self._u_max6
            c[n_state + 6 :] = self._u_min6 - u
            cju[n_state:] = self._bound_ju
        h, hx = self.equalities(i, x)
        return c, cjx, cju, h, hx

    # -- trajectory-level evaluation (vectorized across the horizon) ----------
    def traj_state_residuals(self, states: np.ndarray) -> np.ndarray:
        """Keep-out residuals at stages 1..N, shape (N, n_state)."""
        xs = states[1:]
        out = np.empty((xs.shape[0], self._n_state_ineq))
        n_p = len(self.world.planes)
        if n_p:
            out[:, : 2 * n_p] = self._plane_b + xs @ self._plane_jx.T
        col = 2 * n_p
        for c, s, m in zip(self._ell_centers, self._ell_mats, self._ell_margins):
            for sl in (LEFT, RIGHT):
                d = xs[:, sl] - c
                out[:, col] = m - np.einsum("ij,jk,ik->i", d, s, d)
                col += 1
        return out

    def traj_ctrl_residuals(self, controls: np.ndarray) -> np.ndarray:
        """Velocity bound residuals at stages 0..N-1, shape (N, 12)."""
        return np.hstack([controls - self._u_max6, self._u_min6 - controls])

    def traj_eq_residuals(self, states: np.ndarray) -> np.ndarray:
        """Coupling equalities at stages 1..N, shape (N, 6); empty when independent."""
        if not self.mode.coordinated:
            return np.zeros((states.shape[0] - 1, 0))
        xs = states[1:]
        h = np.empty((xs.shape[0], 6))
        h[:, :3] = xs[:, LEFT] - self.reference_positions[1:, LEFT]
        h[:, 3:] = xs[:, RIGHT] - xs[:, LEFT] - self._offset_base
        return h

    # -- diagnostics ----------------------------------------------------------
    def geometric_residuals(self, x: np.ndarray) -> np.ndarray:
        """Collision keep-out residuals at a realized state (no bounds)."""
        r, _ = self.state_inequalities(np.asarray(x, dtype=float).reshape(6))
        return r

    def orientation_residual_norms(self) -> dict[str, float]:
        """Frobenius norms of the orientation coupling blocks at the commanded
        orientations; near zero when the command projection is in effect."""
        if not self.mode.coordinated:
            return {}
        cr = self.command_rot
        if self.mode.kind is GraspKind.TOP_DOWN_FRONT:
            return {
                "left_right_aligned": float(np.linalg.norm(cr.left.T @ cr.right - np.eye(3))),
                "left_matches_operator": float(
                    np.linalg.norm(cr.left.T @ cr.left_operator - np.eye(3))
                ),
            }
        return {
            "left_matches_operator": float(
                np.linalg.norm(cr.left.T @ cr.left_operator - np.eye(3))
            ),
            "right_flipped_from_left": float(
                np.linalg.norm(cr.right.T @ cr.left - rot_z(np.pi))
            ),
        }

    def max_violation(self, states: np.ndarray, controls: np.ndarray) -> float:
        """Worst constraint violation over a trajectory."""
        worst = 0.0
        if self._n_state_ineq:
            worst = max(worst, float(self.traj_state_residuals(states).max()))
        worst = max(worst, float(self.traj_ctrl_residuals(controls).max()))
        h = self.traj_eq_residuals(states)
        if h.size:
            worst = max(worst, float(np.abs(h).max()))
        return worst


def assemble(
    world: ConstraintWorld,
    mode: GraspMode,
    cfg: SharedControlConfig,
    reference_positions: np.ndarray | None = None,
    command_rot: CommandRotations | None = None,
) -> ConstraintSet:
    """Build the constraint set for one solve."""
    return ConstraintSet(world, mode, cfg, reference_positions, command_rot)
