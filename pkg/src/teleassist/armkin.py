"""Six-axis arm kinematics: DH forward chain, analytic branch-enumeration
inverse kinematics (shoulder x elbow x wrist = 8 candidates), and weighted
least-squares solution selection.

The closed-form inverse follows the spherical-wrist-offset decomposition
used for UR-class arms; a short Gauss-Newton polish tightens each branch
to round-off before limit filtering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .worldmodel import check_rot3, vec3

POSE_TOL = 1e-8
DEDUP_TOL = 1e-6
POLISH_ITERS = 5

# Universal-Robots-style 6-DoF arm, standard DH
UR5E_DH_A = np.array([0.0, -0.425, -0.3922, 0.0, 0.0, 0.0])
UR5E_DH_D = np.array([0.1625, 0.0, 0.0, 0.1333, 0.0997, 0.0996])
UR5E_DH_ALPHA = np.array([np.pi / 2, 0.0, 0.0, np.pi / 2, -np.pi / 2, 0.0])

# elbow-up, elbow held outward from the torso
DEFAULT_POSTURE = np.array([0.0, -np.pi / 2, np.pi / 2, -np.pi / 2, -np.pi / 2, 0.0])


def wrap_angle(q):
    """Normalize angles to (-pi, pi]."""
    w = np.mod(np.asarray(q, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def dh_transform(theta: float, d: float, a: float, alpha: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _inv_tf(t: np.ndarray) -> np.ndarray:
    out = np.eye(4)
    r = t[:3, :3]
    out[:3, :3] = r.T
    out[:3, 3] = -r.T @ t[:3, 3]
    return out


@dataclass(frozen=True)
class ArmModel:
    """DH chain plus mount pose on the mobile base and selection defaults."""

    dh_a: np.ndarray
    dh_d: np.ndarray
    dh_alpha: np.ndarray
    dh_theta_offset: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    mount_translation: np.ndarray
    mount_rotation: np.ndarray
    posture: np.ndarray

    def __post_init__(self):
        for name in ("dh_a", "dh_d", "dh_alpha", "dh_theta_offset", "lower", "upper", "posture"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(6))
        if np.any(self.lower >= self.upper):
            raise ValueError("joint limits must satisfy lower < upper")
        object.__setattr__(self, "mount_translation", vec3(self.mount_translation))
        object.__setattr__(self, "mount_rotation", check_rot3(self.mount_rotation))

    @property
    def mount_tf(self) -> np.ndarray:
        t = np.eye(4)
        t[:3, :3] = self.mount_rotation
        t[:3, 3] = self.mount_translation
        return t


def ur5e_arm(
    mount_translation=(0.0, 0.0, 0.0),
    mount_rotation=np.eye(3),
    lower=None,
    upper=None,
    posture=None,
) -> ArmModel:
    """UR5e-class arm mounted at the given pose on the base."""
    eps = 1e-9  # default limits admit every normalized angle
    return ArmModel(
        dh_a=UR5E_DH_A,
        dh_d=UR5E_DH_D,
        dh_alpha=UR5E_DH_ALPHA,
        dh_theta_offset=np.zeros(6),
        lower=np.full(6, -np.pi - eps) if lower is None else lower,
        upper=np.full(6, np.pi + eps) if upper is None else upper,
        mount_translation=mount_translation,
        mount_rotation=mount_rotation,
        posture=DEFAULT_POSTURE if posture is None else posture,
    )


def _chain(model: ArmModel, q: np.ndarray) -> list[np.ndarray]:
    """Cumulative transforms in the arm frame: [T01, T02, ..., T06]."""
    t = np.eye(4)
    out = []
    for i in range(6):
        t = t @ dh_transform(
            q[i] + model.dh_theta_offset[i], model.dh_d[i], model.dh_a[i], model.dh_alpha[i]
        )
        out.append(t)
    return out


def fk(model: ArmModel, q) -> tuple[np.ndarray, np.ndarray]:
    """Flange pose in the robot base frame, mount included."""
    q = np.asarray(q, dtype=float).reshape(6)
    if not np.all(np.isfinite(q)):
        raise ValueError("joint angles must be finite")
    t = model.mount_tf @ _chain(model, q)[-1]
    return t[:3, 3].copy(), t[:3, :3].copy()


def fk_joint_positions(model: ArmModel, q) -> np.ndarray:
    """Base-frame positions of the mount origin and each joint frame origin, (7, 3)."""
    q = np.asarray(q, dtype=float).reshape(6)
    mount = model.mount_tf
    pts = [mount[:3, 3].copy()]
    for t in _chain(model, q):
        w = mount @ t
        pts.append(w[:3, 3])
    return np.array(pts)


def jacobian(model: ArmModel, q) -> np.ndarray:
    """Geometric Jacobian (linear; angular) of the flange in the base frame."""
    q = np.asarray(q, dtype=float).reshape(6)
    mount = model.mount_tf
    chain = [mount] + [mount @ t for t in _chain(model, q)]
    p_e = chain[-1][:3, 3]
    jac = np.zeros((6, 6))
    for i in range(6):
        z = chain[i][:3, 2]
        p = chain[i][:3, 3]
        jac[:3, i] = np.cross(z, p_e - p)
        jac[3:, i] = z
    return jac


def _rotvec(r: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, accurate down to round-off
    near the identity (atan2 form, no arccos noise floor)."""
    skew = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    s = 0.5 * np.linalg.norm(skew)  # |sin theta|
    c = 0.5 * (np.trace(r) - 1.0)   # cos theta
    theta = np.arctan2(s, c)
    if s > 1e-9:
        return (0.5 * theta / s) * skew
    if c > 0.0:
        return 0.5 * skew  # theta ~ 0: first-order exact
    # theta ~ pi: axis from the dominant column of R + I
    m = r + np.eye(3)
    k = int(np.argmax(np.diag(m)))
    axis = m[:, k] / np.linalg.norm(m[:, k])
    return theta * axis


def _pose_error(model, q, target_pos, target_rot):
    pos, rot = fk(model, q)
    return np.concatenate([target_pos - pos, _rotvec(target_rot @ rot.T)])


def _polish(model, q, target_pos, target_rot):
    """A few damped Gauss-Newton steps to tighten a branch to round-off."""
    q = q.copy()
    for _ in range(POLISH_ITERS):
        err = _pose_error(model, q, target_pos, target_rot)
        if np.linalg.norm(err) < 1e-12:
            break
        jac = jacobian(model, q)
        jtj = jac.T @ jac + 1e-10 * np.eye(6)
        q = q + np.linalg.solve(jtj, jac.T @ err)
    return q


def _ik_branches(model: ArmModel, t06: np.ndarray) -> list[np.ndarray]:
    """Closed-form candidates in the arm frame; may return fewer than 8 when
    branch preconditions fail (targets at or beyond workspace limits)."""
    a2, a3 = model.dh_a[1], model.dh_a[2]
    d1, d4, d5, d6 = model.dh_d[0], model.dh_d[3], model.dh_d[4], model.dh_d[5]
    p06 = t06[:3, 3]
    sols = []

    # shoulder: position of the wrist-2 origin projected on the base plane
    p05 = p06 - d6 * t06[:3, 2]
    rho = np.hypot(p05[0], p05[1])
    if rho < abs(d4) - 1e-12:
        return []
    psi = np.arctan2(p05[1], p05[0])
    phi = np.arccos(np.clip(d4 / max(rho, abs(d4)), -1.0, 1.0))
    for theta1 in (psi + phi + np.pi / 2, psi - phi + np.pi / 2):
        s1, c1 = np.sin(theta1), np.cos(theta1)
        # wrist: flange offset component along the shoulder axis
        arg5 = (p06[0] * s1 - p06[1] * c1 - d4) / d6
        if abs(arg5) > 1.0 + 1e-12:
            continue
        for theta5 in (np.arccos(np.clip(arg5, -1.0, 1.0)), -np.arccos(np.clip(arg5, -1.0, 1.0))):
            s5 = np.sin(theta5)
            t60 = _inv_tf(t06)
            x60, y60 = t60[:3, 0], t60[:3, 1]
            if abs(s5) < 1e-12:
                theta6 = 0.0  # wrist aligned: theta6 is free, fix the convention
            else:
                theta6 = np.arctan2(
                    (-x60[1] * s1 + y60[1] * c1) / s5, (x60[0] * s1 - y60[0] * c1) / s5
                )
            t01 = dh_transform(theta1, d1, model.dh_a[0], model.dh_alpha[0])
            t45 = dh_transform(theta5, d5, model.dh_a[4], model.dh_alpha[4])
            t56 = dh_transform(theta6, d6, model.dh_a[5], model.dh_alpha[5])
            t14 = _inv_tf(t01) @ t06 @ _inv_tf(t45 @ t56)
            # elbow: the 2R chain lies in the x-y plane of frame 1,
            # p14 = [a2 c2 + a3 c23, a2 s2 + a3 s23, d4]
            p14 = t14[:3, 3]
            p14xy = np.hypot(p14[0], p14[1])
            c3 = (p14xy**2 - a2**2 - a3**2) / (2.0 * a2 * a3)
            if abs(c3) > 1.0 + 1e-9:
                continue
            for theta3 in (np.arccos(np.clip(c3, -1.0, 1.0)), -np.arccos(np.clip(c3, -1.0, 1.0))):
                theta2 = np.arctan2(p14[1], p14[0]) - np.arctan2(
                    a3 * np.sin(theta3), a2 + a3 * np.cos(theta3)
                )
                t12 = dh_transform(theta2, model.dh_d[1], a2, model.dh_alpha[1])
                t23 = dh_transform(theta3, model.dh_d[2], a3, model.dh_alpha[2])
                t34 = _inv_tf(t12 @ t23) @ t14
                theta4 = np.arctan2(t34[1, 0], t34[0, 0])
                sols.append(np.array([theta1, theta2, theta3, theta4, theta5, theta6]))
    return sols


def ik(model: ArmModel, position, orientation) -> list[np.ndarray]:
    """All joint solutions reaching the base-frame pose, polished to 1e-8
    and filtered by joint limits. Empty list when unreachable."""
    position = vec3(position)
    orientation = check_rot3(orientation)
    target = np.eye(4)
    target[:3, :3] = orientation
    target[:3, 3] = position
    t06 = _inv_tf(model.mount_tf) @ target

    out = []
    for q in _ik_branches(model, t06):
        q = wrap_angle(q - model.dh_theta_offset)
        q = _polish(model, q, position, orientation)
        q = wrap_angle(q)
        err = _pose_error(model, q, position, orientation)
        if np.linalg.norm(err[:3]) > POSE_TOL or np.linalg.norm(err[3:]) > POSE_TOL:
            continue
        if np.any(q < model.lower) or np.any(q > model.upper):
            continue
        if any(np.max(np.abs(wrap_angle(q - prev))) < DEDUP_TOL for prev in out):
            continue
        out.append(q)
    return out


def select_solution(solutions, q_current, q_desired, w_current, w_desired) -> np.ndarray:
    """Pick the candidate minimizing the weighted squared distance to the
    current joints plus the weighted squared distance to the preferred
    posture. Deterministic: ties go to the lowest candidate index."""
    if not solutions:
        raise ValueError("no IK solutions to select from")
    q_current = np.asarray(q_current, dtype=float).reshape(6)
    q_desired = np.asarray(q_desired, dtype=float).reshape(6)
    wl = np.diag(np.asarray(w_current, dtype=float)) if np.ndim(w_current) == 1 else np.asarray(w_current, dtype=float)
    wd = np.diag(np.asarray(w_desired, dtype=float)) if np.ndim(w_desired) == 1 else np.asarray(w_desired, dtype=float)

    best_idx, best_score = 0, np.inf
    for idx, q in enumerate(solutions):
        dl = wrap_angle(q - q_current)
        dd = wrap_angle(q - q_desired)
        score = float(dl @ wl @ dl + dd @ wd @ dd)
        if score < best_score - 1e-15:
            best_idx, best_score = idx, score
    return np.asarray(solutions[best_idx], dtype=float).copy()
