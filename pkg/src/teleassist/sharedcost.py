"""Blended teleoperation/assistance stage cost.

Three summands per stage: a tracking quadratic on the operator reference
scaled by the minimum arbitration weight across goals, a control effort
quadratic, and per-goal attraction quadratics expressed in each goal's
frame and scaled by the complementary weight. The arbitration weight is a
sigmoid of effector-goal distance, so authority hands over smoothly as an
effector nears a goal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .worldmodel import LEFT, RIGHT, GoalSet, SharedControlConfig


def sigmoid_weight(target, position, alpha_w: float, beta_w: float) -> float:
    """w(t, p) = 1 / (1 + exp(beta - alpha * ||t - p||)), in (0, 1).

    Monotone nondecreasing in distance: ~1 far from the goal (pure
    tracking), small near it (assistance dominates).
    """
    d = float(np.linalg.norm(np.asarray(target, dtype=float) - np.asarray(position, dtype=float)))
    z = alpha_w * d - beta_w
    # numerically stable logistic, stays strictly positive for sane beta
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@dataclass(frozen=True)
class ArbitrationWeights:
    """Per-goal (left, right) sigmoid weights plus their per-block minimum."""

    per_goal: tuple[tuple[float, float], ...]
    kmin_left: float
    kmin_right: float

    @property
    def kmin_diag(self) -> np.ndarray:
        return np.array([self.kmin_left] * 3 + [self.kmin_right] * 3)


def arbitration(x: np.ndarray, goals: GoalSet, cfg: SharedControlConfig) -> ArbitrationWeights:
    """Evaluate the arbitration weights at the stacked effector position x.

    The tracking scale is the blockwise minimum over goals; with no goals
    it is identity and control reduces to pure teleoperation.
    """
    x = np.asarray(x, dtype=float).reshape(6)
    per_goal = []
    for g in goals:
        w_l = sigmoid_weight(g.position, x[LEFT], cfg.alpha_w, cfg.beta_w)
        w_r = sigmoid_weight(g.position, x[RIGHT], cfg.alpha_w, cfg.beta_w)
        per_goal.append((w_l, w_r))
    if per_goal:
        kmin_l = min(w for w, _ in per_goal)
        kmin_r = min(w for _, w in per_goal)
    else:
        kmin_l = kmin_r = 1.0
    return ArbitrationWeights(tuple(per_goal), kmin_l, kmin_r)


@dataclass(frozen=True)
class StageCostTerms:
    tracking: float
    control: float
    goal: float

    @property
    def total(self) -> float:
        return self.tracking + self.control + self.goal


def _goal_block_weights(goal, cfg: SharedControlConfig) -> tuple[float, float]:
    """Mask factors for (left, right) when per-arm goal assignment is on."""
    if not cfg.arm_goal_masking or goal.arm == "both":
        return 1.0, 1.0
    return (1.0, 0.0) if goal.arm == "left" else (0.0, 1.0)


def stage_cost(
    x,
    u,
    xd,
    ud,
    goals: GoalSet,
    cfg: SharedControlConfig,
    weights: ArbitrationWeights | None = None,
) -> StageCostTerms:
    """Evaluate one stage of the blended cost. Pass u = ud = None at the
    terminal stage to drop the control term.

    weights may be supplied to evaluate with externally frozen arbitration
    (used by the derivative checks); by default they are recomputed at x.
    """
    x = np.asarray(x, dtype=float).reshape(6)
    xd = np.asarray(xd, dtype=float).reshape(6)
    if weights is None:
        weights = arbitration(x, goals, cfg)

    ex = x - xd
    tracking = float(ex @ (weights.kmin_diag * cfg.q_diag * ex))

    control = 0.0
    if u is not None:
        u = np.asarray(u, dtype=float).reshape(6)
        ud = np.asarray(ud, dtype=float).reshape(6)
        eu = u - ud
        control = float(eu @ (cfg.r_diag * eu))

    goal_term = 0.0
    for j, g in enumerate(goals):
        w_l, w_r = weights.per_goal[j]
        m_l, m_r = _goal_block_weights(g, cfg)
        rf = g.frame
        p3 = g.approach_weights
        e_l = rf @ (x[LEFT] - g.position)
        e_r = rf @ (x[RIGHT] - g.position)
        goal_term += m_l * (1.0 - w_l) * float(e_l @ (p3 * e_l))
        goal_term += m_r * (1.0 - w_r) * float(e_r @ (p3 * e_r))

    return StageCostTerms(tracking, control, goal_term)


def trajectory_cost(
    states: np.ndarray,
    controls: np.ndarray,
    ref_positions: np.ndarray,
    ref_velocities: np.ndarray,
    goals: GoalSet,
    cfg: SharedControlConfig,
) -> float:
    """Sum of stage costs over a rollout (terminal stage has no control term),
    vectorized across the horizon. Semantically identical to summing
    stage_cost over stages 0..N."""
    states = np.asarray(states, dtype=float)
    n1 = states.shape[0]  # N + 1

    eu = controls - ref_velocities
    control = float(np.sum((eu * eu) @ cfg.r_diag))

    ex = states - ref_positions
    if len(goals) == 0:
        tracking = float(np.sum((ex * ex) @ cfg.q_diag))
        return tracking + control

    # per-stage arbitration: w[s, j, arm]
    w = np.empty((n1, len(goals), 2))
    goal_term = 0.0
    for j, g in enumerate(goals):
        m_l, m_r = _goal_block_weights(g, cfg)
        for arm, (sl, mask) in enumerate(((LEFT, m_l), (RIGHT, m_r))):
            d = np.linalg.norm(states[:, sl] - g.position, axis=1)
            z = cfg.alpha_w * d - cfg.beta_w
            w_arm = np.where(
                z >= 0, 1.0 / (1.0 + np.exp(-np.clip(z, 0, None))),
                np.exp(np.clip(z, None, 0)) / (1.0 + np.exp(np.clip(z, None, 0))),
            )
            w[:, j, arm] = w_arm
            if mask == 0.0:
                continue
            e = (states[:, sl] - g.position) @ g.frame.T
            quad = (e * e) @ g.approach_weights
            goal_term += mask * float(np.sum((1.0 - w_arm) * quad))
    kmin = w.min(axis=1)  # (N+1, 2)
    qx = ex * ex
    tracking = float(
        np.sum(kmin[:, 0] * (qx[:, :3] @ cfg.q_diag[:3]))
        + np.sum(kmin[:, 1] * (qx[:, 3:] @ cfg.q_diag[3:]))
    )
    return tracking + control + goal_term


def cost_derivatives(
    x,
    u,
    xd,
    ud,
    goals: GoalSet,
    cfg: SharedControlConfig,
    weights: ArbitrationWeights | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient (12,) and Gauss-Newton Hessian (12, 12) of the stage cost
    in the stacked [x; u] variables.

    The arbitration weights are treated as locally constant (refreshed at
    each solver iterate): the exact sigmoid curvature would make the
    Hessian indefinite, while the frozen form stays PSD.
    """
    x = np.asarray(x, dtype=float).reshape(6)
    xd = np.asarray(xd, dtype=float).reshape(6)
    if weights is None:
        weights = arbitration(x, goals, cfg)

    kq = weights.kmin_diag * cfg.q_diag
    gx = 2.0 * kq * (x - xd)
    hxx = np.diag(2.0 * kq)

    for j, g in enumerate(goals):
        w_l, w_r = weights.per_goal[j]
        m_l, m_r = _goal_block_weights(g, cfg)
        rf = g.frame
        # per-arm weight matrix in base coordinates: R^T diag(p) R
        w3 = rf.T @ (g.approach_weights[:, None] * rf)
        for sl, w, m in ((LEFT, w_l, m_l), (RIGHT, w_r, m_r)):
            scale = m * (1.0 - w)
            if scale == 0.0:
                continue
            e = x[sl] - g.position
            gx[sl] += 2.0 * scale * (w3 @ e)
            hxx[sl, sl] += 2.0 * scale * w3

    grad = np.zeros(12)
    hess = np.zeros((12, 12))
    grad[:6] = gx
    hess[:6, :6] = hxx
    if u is not None:
        u = np.asarray(u, dtype=float).reshape(6)
        ud = np.asarray(ud, dtype=float).reshape(6)
        grad[6:] = 2.0 * cfg.r_diag * (u - ud)
        hess[6:, 6:] = np.diag(2.0 * cfg.r_diag)
    return grad, hess
