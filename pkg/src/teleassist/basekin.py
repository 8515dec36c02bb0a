"""Omnidirectional base: mecanum wheel kinematics, pad command mapping, velocity gating."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PAD_DEAD_ZONE = 0.05
GATE_MAX_PASSES = 200
GATE_EPS = 0.0  # projections are removed until none remain strictly positive


@dataclass(frozen=True)
class MecanumParams:
    wheel_radius: float  # m
    half_length_x: float  # m, wheel contact offset along x
    half_length_y: float  # m, wheel contact offset along y

    def __post_init__(self):
        if min(self.wheel_radius, self.half_length_x, self.half_length_y) <= 0:
            raise ValueError("mecanum parameters must be positive")


@dataclass(frozen=True)
class BodyTwist:
    v_x: float
    v_y: float
    omega_z: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.v_x, self.v_y, self.omega_z])):
            raise ValueError("twist components must be finite")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.v_x, self.v_y, self.omega_z])


@dataclass(frozen=True)
class WheelSpeeds:
    omega: np.ndarray  # (4,) rad/s, order front-left, front-right, rear-left, rear-right

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float).reshape(4)
        if not np.all(np.isfinite(w)):
            raise ValueError("wheel speeds must be finite")
        object.__setattr__(self, "omega", w)


def drive_matrix(params: MecanumParams) -> np.ndarray:
    """Body twist [v_x, v_y, w_z] -> wheel speeds map of the mecanum drive."""
    l = params.half_length_x + params.half_length_y
    return (1.0 / params.wheel_radius) * np.array(
        [
            [1.0, -1.0, -l],
            [1.0, 1.0, l],
            [1.0, 1.0, -l],
            [1.0, -1.0, l],
        ]
    )


def wheel_speeds(twist: BodyTwist, params: MecanumParams) -> WheelSpeeds:
    return WheelSpeeds(drive_matrix(params) @ twist.array)


def body_twist(wheels: WheelSpeeds, params: MecanumParams) -> BodyTwist:
    """Least-squares inverse of the drive map; exact on consistent wheel vectors."""
    t = np.linalg.pinv(drive_matrix(params)) @ wheels.omega
    return BodyTwist(t[0], t[1], t[2])


def map_pads(
    left_pad: tuple[float, float],
    right_pad_x: float,
    scale: tuple[float, float, float],
) -> BodyTwist:
    """Touchpad command mapping: left pad -> planar velocity, right pad x -> yaw rate.

    Inputs are clamped to [-1, 1]; magnitudes below the dead zone map to zero.
    """
    raw = np.clip([left_pad[0], left_pad[1], right_pad_x], -1.0, 1.0)
    raw[np.abs(raw) < PAD_DEAD_ZONE] = 0.0
    s = np.asarray(scale, dtype=float)
    return BodyTwist(raw[0] * s[0], raw[1] * s[1], raw[2] * s[2])


def _allowed_wedge(dirs: list[np.ndarray]) -> tuple[float, float] | None:
    """Intersect the per-obstacle allowed half-circles of motion headings.

    Each obstacle direction d forbids headings with positive projection on
    it, leaving the closed arc [angle(d)+pi/2, angle(d)+3pi/2]. Half-plane
    intersections through the origin are convex, so the result is a single
    arc of width <= pi, or nothing (motion fully blocked).
    """
    lo = hi = 0.0
    first = True
    for d in dirs:
        a = np.arctan2(d[1], d[0]) + 0.5 * np.pi
        if first:
            lo, hi = a, a + np.pi
            first = False
            continue
        best = None
        for shift in (-2.0 * np.pi, 0.0, 2.0 * np.pi):
            nl, nh = max(lo, a + shift), min(hi, a + shift + np.pi)
            if nh >= nl and (best is None or nh - nl > best[1] - best[0]):
                best = (nl, nh)
        if best is None:
            return None
        lo, hi = best
    return lo, hi


def gate_velocity(
    twist: BodyTwist,
    obstacles: list[tuple[np.ndarray, float]],
    stop_range: float,
    hard_stop_range: float | None = None,
) -> BodyTwist:
    """Remove linear velocity components directed at nearby obstacles.

    obstacles are (unit direction in base frame, range in meters) pairs.
    Within hard_stop_range (default stop_range/2) linear motion stops
    entirely; otherwise the planar velocity is projected onto the cone of
    headings with no positive projection toward any in-range obstacle, so
    the result never moves toward one. Yaw rate passes through unchanged.
    A twist that is already feasible is returned untouched, which makes
    gating exactly idempotent.
    """
    if hard_stop_range is None:
        hard_stop_range = 0.5 * stop_range

    near = []
    for direction, rng in obstacles:
        if rng >= stop_range:
            continue
        d = np.asarray(direction, dtype=float).reshape(3)
        if d[2] != 0.0:
            # base motion is planar; vertical components cannot be acted on
            d = np.array([d[0], d[1], 0.0])
            n = np.linalg.norm(d)
            if n < 1e-12:
                continue
            d = d / n
        near.append((d, rng))

    v = np.array([twist.v_x, twist.v_y, 0.0])
    if near and min(rng for _, rng in near) < hard_stop_range:
        return BodyTwist(0.0, 0.0, twist.omega_z)
    if not near or not np.any(v):
        return twist

    dirs = [d for d, _ in near]
    if max(float(v @ d) for d in dirs) <= GATE_EPS:
        return twist

    wedge = _allowed_wedge(dirs)
    if wedge is None:
        return BodyTwist(0.0, 0.0, twist.omega_z)
    # project onto the wedge: the nearer edge ray, or zero when v points
    # into the polar cone
    best = np.zeros(3)
    best_dist = float(v @ v)
    for ang in wedge:
        ray = np.array([np.cos(ang), np.sin(ang), 0.0])
        p = float(v @ ray)
        if p <= 0.0:
            continue
        cand = p * ray
        dist = float((v - cand) @ (v - cand))
        if dist < best_dist:
            best, best_dist = cand, dist
    v = best

    # edge rays are orthogonal to their obstacle only to round-off; sweep any
    # residual positive projections out exactly
    for _ in range(GATE_MAX_PASSES):
        worst = max(float(v @ d) for d in dirs)
        if worst <= GATE_EPS:
            break
        for d in dirs:
            p = float(v @ d)
            if p > GATE_EPS:
                v = v - p * d
    else:
        return BodyTwist(0.0, 0.0, twist.omega_z)
    return BodyTwist(v[0], v[1], twist.omega_z)
