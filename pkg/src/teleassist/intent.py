"""Operator intent estimation: constant-velocity Kalman filtering of commanded
hand positions and forward propagation of the tracking reference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .worldmodel import SharedControlConfig, vec3

DEFAULT_PROCESS_NOISE = 1e-2
DEFAULT_MEASUREMENT_NOISE = 1e-4
INIT_POSITION_VAR = 1e-2  # m^2
INIT_VELOCITY_VAR = 1.0   # (m/s)^2


@dataclass(frozen=True)
class IntentFilter:
    """Per-arm constant-velocity filter state: [position(3), velocity(3)]."""

    state: np.ndarray        # (6,)
    covariance: np.ndarray   # (6, 6) symmetric positive definite
    process_noise: float
    measurement_noise: float

    def __post_init__(self):
        x = np.asarray(self.state, dtype=float).reshape(6)
        p = np.asarray(self.covariance, dtype=float).reshape(6, 6)
        object.__setattr__(self, "state", x)
        object.__setattr__(self, "covariance", p)
        if self.process_noise <= 0 or self.measurement_noise <= 0:
            raise ValueError("noise intensities must be positive")

    @property
    def position(self) -> np.ndarray:
        return self.state[:3].copy()

    @property
    def velocity(self) -> np.ndarray:
        return self.state[3:].copy()


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Propagated reference: N+1 stacked positions and N stacked velocities."""

    positions: np.ndarray   # (N+1, 6)
    velocities: np.ndarray  # (N, 6)

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        v = np.asarray(self.velocities, dtype=float)
        if p.shape[0] != v.shape[0] + 1 or p.shape[1] != 6 or v.shape[1] != 6:
            raise ValueError(f"inconsistent reference shapes {p.shape}, {v.shape}")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "velocities", v)


def init_filter(
    position,
    process_noise: float = DEFAULT_PROCESS_NOISE,
    measurement_noise: float = DEFAULT_MEASUREMENT_NOISE,
) -> IntentFilter:
    """Start a filter at the first measurement with an uninformative velocity prior."""
    state = np.concatenate([vec3(position), np.zeros(3)])
    cov = np.diag([INIT_POSITION_VAR] * 3 + [INIT_VELOCITY_VAR] * 3)
    return IntentFilter(state, cov, process_noise, measurement_noise)


def _transition(dt: float) -> np.ndarray:
    f = np.eye(6)
    f[:3, 3:] = dt * np.eye(3)
    return f


def _process_cov(dt: float, q: float) -> np.ndarray:
    # white-acceleration discretization of the constant-velocity model
    i3 = np.eye(3)
    top = np.hstack([dt**3 / 3.0 * i3, dt**2 / 2.0 * i3])
    bot = np.hstack([dt**2 / 2.0 * i3, dt * i3])
    return q * np.vstack([top, bot])


def kf_update(filt: IntentFilter, measured_position, dt: float) -> IntentFilter:
    """Predict with the constant-velocity model, then correct with a position fix.

    Raises ValueError on non-finite measurements; the input filter is untouched.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    z = np.asarray(measured_position, dtype=float).reshape(3)
    if not np.all(np.isfinite(z)):
        raise ValueError(f"non-finite measurement rejected: {z}")

    f = _transition(dt)
    x = f @ filt.state
    p = f @ filt.covariance @ f.T + _process_cov(dt, filt.process_noise)

    h = np.zeros((3, 6))
    h[:, :3] = np.eye(3)
    r = filt.measurement_noise * np.eye(3)
    s = h @ p @ h.T + r
    k = p @ h.T @ np.linalg.inv(s)

    x = x + k @ (z - h @ x)
    ikh = np.eye(6) - k @ h
    p = ikh @ p @ ikh.T + k @ r @ k.T  # Joseph form keeps the covariance PD
    p = 0.5 * (p + p.T)
    return IntentFilter(x, p, filt.process_noise, filt.measurement_noise)


def propagate_reference(
    filter_left: IntentFilter,
    filter_right: IntentFilter,
    cfg: SharedControlConfig,
) -> ReferenceTrajectory:
    """Roll the current position/velocity estimates forward over the horizon."""
    n = cfg.horizon_N
    v = np.concatenate([filter_left.velocity, filter_right.velocity])
    positions = np.empty((n + 1, 6))
    positions[0] = np.concatenate([filter_left.position, filter_right.position])
    step = v * cfg.delta
    for i in range(1, n + 1):
        positions[i] = positions[i - 1] + step
    velocities = np.tile(v, (n, 1))
    return ReferenceTrajectory(positions, velocities)
