"""Augmented-Lagrangian iLQR for the end-effector pair OCP, plus the MPC step.

Dynamics are the point-mass integrator x_{t+1} = x_t + u_t * delta with
stacked 6-dimensional state and control. Inequalities use the active-set
augmented-Lagrangian form (penalty applied where violated or where a
multiplier is live); equalities carry a multiplier plus quadratic penalty.
The backward pass is Gauss-Newton with Levenberg regularization on the
control Hessian; the forward pass backtracks on the AL merit and never
accepts an increase.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import sharedcost
from .constraints import ConstraintSet
from .intent import ReferenceTrajectory
from .worldmodel import EndEffectorPairState, GoalSet, SharedControlConfig

NX = 6
NU = 6


@dataclass(frozen=True)
class SolverConfig:
    max_outer: int = 8
    max_inner: int = 40
    mu0: float = 1.0
    penalty_growth: float = 10.0
    constraint_tol: float = 1e-4
    cost_tol: float = 1e-9          # relative merit improvement for inner convergence
    backtrack_factor: float = 0.5
    min_step: float = 1.0 / 128.0
    reg_init: float = 0.0
    reg_min: float = 1e-10
    reg_max: float = 1e8
    mu_max: float = 1e8

    def __post_init__(self):
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.mu0 <= 0 or self.penalty_growth <= 1.0:
            raise ValueError("need mu0 > 0 and penalty growth > 1")
        for name in ("constraint_tol", "cost_tol", "backtrack_factor", "min_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must be in (0, 1)")


class BlendedHorizonCost:
    """Per-stage blended cost over one horizon: reference tracking with
    arbitration, control effort, and goal attraction. Terminal stage keeps
    the state terms only."""

    def __init__(self, reference: ReferenceTrajectory, goals: GoalSet, cfg: SharedControlConfig):
        self.reference = reference
        self.goals = goals
        self.cfg = cfg

    def stage(self, i: int, x: np.ndarray, u: np.ndarray) -> float:
        return sharedcost.stage_cost(
            x, u, self.reference.positions[i], self.reference.velocities[i], self.goals, self.cfg
        ).total

    def terminal(self, x: np.ndarray) -> float:
        return sharedcost.stage_cost(
            x, None, self.reference.positions[-1], None, self.goals, self.cfg
        ).total

    def total(self, states: np.ndarray, controls: np.ndarray) -> float:
        return sharedcost.trajectory_cost(
            states, controls, self.reference.positions, self.reference.velocities,
            self.goals, self.cfg,
        )

    def stage_derivs(self, i: int, x: np.ndarray, u: np.ndarray):
        grad, hess = sharedcost.cost_derivatives(
            x, u, self.reference.positions[i], self.reference.velocities[i], self.goals, self.cfg
        )
        return grad[:NX], grad[NX:], hess[:NX, :NX], hess[NX:, NX:]

    def terminal_derivs(self, x: np.ndarray):
        grad, hess = sharedcost.cost_derivatives(
            x, None, self.reference.positions[-1], None, self.goals, self.cfg
        )
        return grad[:NX], hess[:NX, :NX]


@dataclass
class OcProblem:
    x0: np.ndarray
    delta: float
    horizon: int
    cost: BlendedHorizonCost
    constraints: ConstraintSet | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(NX)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")


@dataclass
class WarmStart:
    controls: np.ndarray                    # (N, 6)
    lam_state: np.ndarray | None = None     # (N, n_state), stages 1..N
    lam_ctrl: np.ndarray | None = None      # (N, 12), stages 0..N-1
    lam_eq: np.ndarray | None = None        # (N, n_eq), stages 1..N
    mu: float | None = None


@dataclass
class OcpSolution:
    states: np.ndarray                 # (N+1, 6)
    controls: np.ndarray               # (N, 6)
    lam_state: np.ndarray              # keep-out multipliers, stages 1..N
    lam_ctrl: np.ndarray               # bound multipliers, stages 0..N-1
    lam_eq: np.ndarray                 # coupling multipliers, stages 1..N
    mu: float
    iterations: int                    # total inner iLQR iterations
    outer_iterations: int
    max_violation: float
    cost: float                        # true objective, no AL terms
    converged: bool
    violation_history: list[float] = field(default_factory=list)
    merit_history: list[list[float]] = field(default_factory=list)  # per outer iteration

    def shifted_warm_start(self) -> WarmStart:
        """One-step receding-horizon shift of controls and multipliers."""

        def shift(rows: np.ndarray) -> np.ndarray:
            if rows.shape[0] < 2:
                return rows.copy()
            return np.vstack([rows[1:], rows[-1:]])

        return WarmStart(
            shift(self.controls),
            shift(self.lam_state),
            shift(self.lam_ctrl),
            shift(self.lam_eq),
            self.mu,
        )


def rollout(x0: np.ndarray, controls: np.ndarray, delta: float) -> np.ndarray:
    n = len(controls)
    states = np.empty((n + 1, NX))
    states[0] = x0
    for i in range(n):
        states[i + 1] = states[i] + controls[i] * delta
    return states


class _AlState:
    """Multipliers and penalty for one solve, stored densely per family:
    keep-outs at stages 1..N, bounds at stages 0..N-1, couplings at 1..N."""

    def __init__(self, problem: OcProblem, warm: WarmStart | None, cfg: SolverConfig):
        n = problem.horizon
        con = problem.constraints
        n_state = con._n_state_ineq if con is not None else 0
        n_eq = 6 if (con is not None and con.mode.coordinated) else 0
        n_ctrl = 12 if con is not None else 0
        self.mu = cfg.mu0
        self.lam_state = np.zeros((n, n_state))
        self.lam_ctrl = np.zeros((n, n_ctrl))
        self.lam_eq = np.zeros((n, n_eq))
        if warm is not None:
            if warm.mu is not None:
                self.mu = float(np.clip(warm.mu, cfg.mu0, 1e6))
            for attr in ("lam_state", "lam_ctrl", "lam_eq"):
                src = getattr(warm, attr)
                if src is not None and src.shape == getattr(self, attr).shape:
                    setattr(self, attr, src.copy())

    def lam_ineq_at(self, i: int, n: int) -> np.ndarray:
        parts = []
        if i >= 1:
            parts.append(self.lam_state[i - 1])
        if i < n:
            parts.append(self.lam_ctrl[i])
        return np.concatenate(parts) if parts else np.zeros(0)

    def lam_eq_at(self, i: int) -> np.ndarray:
        return self.lam_eq[i - 1] if i >= 1 and self.lam_eq.shape[1] else np.zeros(0)

    def update(self, problem: OcProblem, states: np.ndarray, controls: np.ndarray, cfg: SolverConfig):
        con = problem.constraints
        if self.lam_state.shape[1]:
            cs = con.traj_state_residuals(states)
            self.lam_state = np.maximum(0.0, self.lam_state + self.mu * cs)
        if self.lam_ctrl.shape[1]:
            cu = con.traj_ctrl_residuals(controls)
            self.lam_ctrl = np.maximum(0.0, self.lam_ctrl + self.mu * cu)
        if self.lam_eq.shape[1]:
            h = con.traj_eq_residuals(states)
            self.lam_eq = self.lam_eq + self.mu * h
        self.mu = min(self.mu * cfg.penalty_growth, cfg.mu_max)


def _al_merit(problem: OcProblem, states, controls, al: _AlState) -> float:
    cost = problem.cost.total(states, controls)
    con = problem.constraints
    if con is None:
        return cost
    mu = al.mu
    if al.lam_state.shape[1]:
        c = con.traj_state_residuals(states)
        act = c * ((c > 0.0) | (al.lam_state > 0.0))
        cost += float(np.sum(al.lam_state * c)) + 0.5 * mu * float(np.sum(act * act))
    if al.lam_ctrl.shape[1]:
        c = con.traj_ctrl_residuals(controls)
        act = c * ((c > 0.0) | (al.lam_ctrl > 0.0))
        cost += float(np.sum(al.lam_ctrl * c)) + 0.5 * mu * float(np.sum(act * act))
    if al.lam_eq.shape[1]:
        h = con.traj_eq_residuals(states)
        cost += float(np.sum(al.lam_eq * h)) + 0.5 * mu * float(np.sum(h * h))
    return cost


def _true_cost(problem: OcProblem, states, controls) -> float:
    return problem.cost.total(states, controls)


def _stage_al_derivs(problem, al, i, x, u):
    """Cost expansion at stage i including augmented-Lagrangian terms."""
    if u is None:
        lx, lxx = problem.cost.terminal_derivs(x)
        lu = luu = None
    else:
        lx, lu, lxx, luu = problem.cost.stage_derivs(i, x, u)
    lux = np.zeros((NU, NX))
    con = problem.constraints
    if con is not None:
        n = problem.horizon
        c, cjx, cju, h, hx = con.stage_eval(i, x, u)
        if len(c):
            lam = al.lam_ineq_at(i, n)
            active = (c > 0.0) | (lam > 0.0)
            imu = np.where(active, al.mu, 0.0)
            w = lam + imu * c
            lx = lx + cjx.T @ w
            lxx = lxx + cjx.T @ (imu[:, None] * cjx)
            if u is not None:
                lu = lu + cju.T @ w
                luu = luu + cju.T @ (imu[:, None] * cju)
                lux = lux + cju.T @ (imu[:, None] * cjx)
        if len(h):
            lam = al.lam_eq_at(i)
            w = lam + al.mu * h
            lx = lx + hx.T @ w
            lxx = lxx + al.mu * (hx.T @ hx)
    return lx, lu, lxx, luu, lux


def _backward_pass(problem, al, states, controls, reg):
    """Returns (k, K, expected_decrease) or None if Quu is not PD."""
    n = problem.horizon
    delta = problem.delta
    b = delta * np.eye(NX)  # A = I
    vx, vxx = _stage_al_derivs(problem, al, n, states[n], None)[0:3:2]
    ks = np.zeros((n, NU))
    gains = np.zeros((n, NU, NX))
    dv1 = dv2 = 0.0
    for i in range(n - 1, -1, -1):
        lx, lu, lxx, luu, lux = _stage_al_derivs(problem, al, i, states[i], controls[i])
        qx = lx + vx
        qu = lu + b.T @ vx
        qxx = lxx + vxx
        quu = luu + b.T @ vxx @ b + reg * np.eye(NU)
        qux = lux + b.T @ vxx
        try:
            chol = np.linalg.cholesky(0.5 * (quu + quu.T))
        except np.linalg.LinAlgError:
            return None
        rhs = np.column_stack([qu, qux])
        sol = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        k = -sol[:, 0]
        kk = -sol[:, 1:]
        dv1 += float(k @ qu)
        dv2 += 0.5 * float(k @ quu @ k)
        vx = qx + kk.T @ quu @ k + kk.T @ qu + qux.T @ k
        vxx = qxx + kk.T @ quu @ kk + kk.T @ qux + qux.T @ kk
        vxx = 0.5 * (vxx + vxx.T)
        ks[i] = k
        gains[i] = kk
    return ks, gains, dv1 + dv2


def _forward_pass(problem, al, states, controls, ks, gains, merit, cfg):
    """Backtracking rollout; accepts only steps that do not increase the merit."""
    n = problem.horizon
    alpha = 1.0
    while alpha >= cfg.min_step:
        new_u = np.empty_like(controls)
        new_x = np.empty_like(states)
        new_x[0] = states[0]
        for i in range(n):
            du = alpha * ks[i] + gains[i] @ (new_x[i] - states[i])
            new_u[i] = controls[i] + du
            new_x[i + 1] = new_x[i] + new_u[i] * problem.delta
        new_merit = _al_merit(problem, new_x, new_u, al)
        if np.isfinite(new_merit) and new_merit <= merit:
            return new_x, new_u, new_merit, alpha
        alpha *= cfg.backtrack_factor
    return None


def _ilqr_inner(problem, al, states, controls, cfg, budget):
    """Minimize the AL merit for fixed multipliers. Returns trajectories,
    merit history, iterations used, and whether a stationary point was hit."""
    merit = _al_merit(problem, states, controls, al)
    merits = [merit]
    reg = cfg.reg_init
    iters = 0
    stationary = False
    while iters < budget:
        iters += 1
        bp = _backward_pass(problem, al, states, controls, reg)
        if bp is None:
            reg = max(reg * 10.0, 1e-6)
            if reg > cfg.reg_max:
                stationary = True
                break
            continue
        ks, gains, expected = bp
        fp = _forward_pass(problem, al, states, controls, ks, gains, merit, cfg)
        if fp is None:
            reg = max(reg * 10.0, 1e-6)
            if reg > cfg.reg_max:
                stationary = True
                break
            continue
        new_x, new_u, new_merit, _alpha = fp
        improvement = merit - new_merit
        states, controls, merit = new_x, new_u, new_merit
        merits.append(merit)
        reg = max(reg * 0.5, cfg.reg_min) if reg > 0 else 0.0
        if improvement <= cfg.cost_tol * (1.0 + abs(merit)):
            stationary = True
            break
    return states, controls, merits, iters, stationary


def solve(
    problem: OcProblem,
    cfg: SolverConfig,
    warm_start: WarmStart | None = None,
    diagnostics=None,
) -> OcpSolution:
    """Run the augmented-Lagrangian outer loop around iLQR.

    diagnostics, when given, receives one JSON line per outer iteration
    (writeable stream) with the iteration counts, merit, violation, and
    penalty value.
    """
    n = problem.horizon
    if warm_start is not None and warm_start.controls is not None:
        controls = np.asarray(warm_start.controls, dtype=float).reshape(n, NU).copy()
    else:
        controls = np.zeros((n, NU))
    states = rollout(problem.x0, controls, problem.delta)
    al = _AlState(problem, warm_start, cfg)
    con = problem.constraints

    total_inner = 0
    merit_history: list[list[float]] = []
    violation_history: list[float] = []
    converged = False
    outer_used = 0
    for outer in range(cfg.max_outer):
        outer_used = outer + 1
        states, controls, merits, iters, stationary = _ilqr_inner(
            problem, al, states, controls, cfg, cfg.max_inner
        )
        total_inner += iters
        merit_history.append(merits)
        if not np.all(np.isfinite(states)) or not np.isfinite(merits[-1]):
            break  # diverged; report best effort
        violation = con.max_violation(states, controls) if con is not None else 0.0
        violation_history.append(violation)
        if diagnostics is not None:
            diagnostics.write(
                json.dumps(
                    {
                        "outer": outer_used,
                        "inner_iterations": iters,
                        "merit": merits[-1],
                        "violation": violation,
                        "mu": al.mu,
                    }
                )
                + "\n"
            )
        if violation <= cfg.constraint_tol and stationary:
            converged = True
            break
        if con is None:
            converged = stationary
            break
        al.update(problem, states, controls, cfg)

    final_violation = con.max_violation(states, controls) if con is not None else 0.0
    return OcpSolution(
        states=states,
        controls=controls,
        lam_state=al.lam_state,
        lam_ctrl=al.lam_ctrl,
        lam_eq=al.lam_eq,
        mu=al.mu,
        iterations=total_inner,
        outer_iterations=outer_used,
        max_violation=final_violation,
        cost=_true_cost(problem, states, controls),
        converged=converged,
        violation_history=violation_history,
        merit_history=merit_history,
    )


def mpc_step(
    current: EndEffectorPairState,
    reference: ReferenceTrajectory,
    goals: GoalSet,
    constraint_set: ConstraintSet,
    shared_cfg: SharedControlConfig,
    solver_cfg: SolverConfig,
    previous_solution: OcpSolution | None = None,
) -> tuple[np.ndarray, OcpSolution]:
    """One receding-horizon step: solve, emit the first trajectory point.

    The previous solution (shifted one step) warm-starts the solve. On
    solver failure the waypoint holds the current position and the failure
    is visible through solution.converged.
    """
    problem = OcProblem(
        x0=current.stacked,
        delta=shared_cfg.delta,
        horizon=shared_cfg.horizon_N,
        cost=BlendedHorizonCost(reference, goals, shared_cfg),
        constraints=constraint_set,
    )
    warm = previous_solution.shifted_warm_start() if previous_solution is not None else None
    solution = solve(problem, solver_cfg, warm)
    if solution.converged:
        waypoint = solution.states[1].copy()
    else:
        waypoint = current.stacked
    return waypoint, solution
