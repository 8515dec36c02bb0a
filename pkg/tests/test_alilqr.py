import numpy as np
import pytest

from teleassist.alilqr import (
    BlendedHorizonCost,
    OcProblem,
    SolverConfig,
    mpc_step,
    solve,
)
from teleassist.constraints import CommandRotations, ConstraintWorld, assemble
from teleassist.intent import ReferenceTrajectory
from teleassist.worldmodel import (
    EllipsoidObstacle,
    EndEffectorPairState,
    Goal,
    GoalSet,
    GraspKind,
    GraspMode,
    PlaneSet,
    SharedControlConfig,
    stack,
)


def make_cfg(n=10, delta=0.1, q=1.0, r=1.0, u_lim=0.5, alpha_w=10.0, beta_w=4.0):
    return SharedControlConfig(
        q_diag=np.full(6, q),
        r_diag=np.full(6, r),
        p_diag=np.ones(6),
        alpha_w=alpha_w,
        beta_w=beta_w,
        delta=delta,
        horizon_T=n * delta,
        horizon_N=n,
        u_min=np.full(3, -u_lim),
        u_max=np.full(3, u_lim),
    )


def constant_reference(cfg, target, u_d=None):
    n = cfg.horizon_N
    positions = np.tile(np.asarray(target, dtype=float), (n + 1, 1))
    velocities = (
        np.zeros((n, 6)) if u_d is None else np.tile(np.asarray(u_d, dtype=float), (n, 1))
    )
    return ReferenceTrajectory(positions, velocities)


def riccati_tracking_oracle(x0, xd, ud, q_diag, r_diag, delta, n):
    """Affine-quadratic value recursion for the tracking LQR, written from
    scratch (independent of the iLQR path). Returns (controls, cost)."""
    q = np.diag(q_diag)
    r = np.diag(r_diag)
    s_mat = q.copy()
    s_vec = -q @ xd[n]
    c = xd[n] @ q @ xd[n]
    gains = []
    for i in range(n - 1, -1, -1):
        quu = r + delta**2 * s_mat
        quu_inv = np.linalg.inv(quu)
        k_mat = quu_inv @ (delta * s_mat)
        d_vec = quu_inv @ (r @ ud[i] - delta * s_vec)
        a_cl = np.eye(6) - delta * k_mat
        s_new = q + k_mat.T @ r @ k_mat + a_cl.T @ s_mat @ a_cl
        s_vec_new = (
            -q @ xd[i]
            - k_mat.T @ r @ d_vec
            + k_mat.T @ r @ ud[i]
            + a_cl.T @ s_mat @ (delta * d_vec)
            + a_cl.T @ s_vec
        )
        c_new = (
            xd[i] @ q @ xd[i]
            + d_vec @ r @ d_vec
            - 2 * ud[i] @ r @ d_vec
            + ud[i] @ r @ ud[i]
            + delta**2 * d_vec @ s_mat @ d_vec
            + 2 * delta * s_vec @ d_vec
            + c
        )
        gains.append((k_mat, d_vec))
        s_mat, s_vec, c = 0.5 * (s_new + s_new.T), s_vec_new, c_new
    gains.reverse()
    x = np.asarray(x0, dtype=float)
    controls = np.zeros((n, 6))
    for i, (k_mat, d_vec) in enumerate(gains):
        controls[i] = d_vec - k_mat @ x
        x = x + delta * controls[i]
    cost = x0 @ s_mat @ x0 + 2 * s_vec @ x0 + c
    return controls, cost


class TestUnconstrained:
    def test_matches_riccati_oracle(self):
        n, delta = 20, 0.1
        cfg = make_cfg(n=n, delta=delta, q=1.0, r=1.0)
        target = stack([0.4, -0.2, 0.3], [0.1, 0.5, -0.3])
        ref = constant_reference(cfg, target)
        x0 = np.zeros(6)
        problem = OcProblem(x0, delta, n, BlendedHorizonCost(ref, GoalSet(), cfg))
        sol = solve(problem, SolverConfig())
        assert sol.converged

        xd = ref.positions
        ud = ref.velocities
        u_star, j_star = riccati_tracking_oracle(x0, xd, ud, cfg.q_diag, cfg.r_diag, delta, n)
        assert np.abs(sol.controls - u_star).max() <= 1e-6
        assert abs(sol.cost - j_star) <= 1e-6 * max(1.0, abs(j_star))

    def test_stationary_reference_zero_cost(self):
        cfg = make_cfg()
        x0 = stack([0.2, 0.1, 0.4], [0.3, -0.1, 0.2])
        ref = constant_reference(cfg, x0)
        problem = OcProblem(x0, cfg.delta, cfg.horizon_N, BlendedHorizonCost(ref, GoalSet(), cfg))
        sol = solve(problem, SolverConfig())
        assert sol.converged
        assert np.abs(sol.controls).max() <= 1e-12
        assert sol.cost <= 1e-18

    def test_on_reference_with_moving_target_rides_it(self):
        # starting on a reference that advances at u_d, the optimum is u = u_d
        # at every stage with zero cost
        cfg = make_cfg()
        n = cfg.horizon_N
        x0 = stack([0.2, 0.1, 0.4], [0.3, -0.1, 0.2])
        u_d = np.array([0.1, -0.05, 0.02, 0.0, 0.1, -0.02])
        positions = x0 + np.outer(np.arange(n + 1), u_d * cfg.delta)
        ref = ReferenceTrajectory(positions, np.tile(u_d, (n, 1)))
        problem = OcProblem(x0, cfg.delta, n, BlendedHorizonCost(ref, GoalSet(), cfg))
        sol = solve(problem, SolverConfig())
        assert sol.converged
        assert np.abs(sol.controls - u_d).max() <= 1e-9
        assert sol.cost <= 1e-15

    def test_dynamics_recurrence_exact(self):
        cfg = make_cfg()
        ref = constant_reference(cfg, np.ones(6))
        problem = OcProblem(np.zeros(6), cfg.delta, cfg.horizon_N, BlendedHorizonCost(ref, GoalSet(), cfg))
        sol = solve(problem, SolverConfig())
        for i in range(cfg.horizon_N):
            expected = sol.states[i] + sol.controls[i] * cfg.delta
            assert np.array_equal(sol.states[i + 1], expected)


def bounded_problem():
    """One-dimensional reach beyond the velocity limit: the optimal policy
    rides the bound at every stage."""
    cfg = make_cfg(n=10, delta=0.1, q=10.0, r=0.01, u_lim=0.1)
    target = np.zeros(6)
    target[0] = 1.0
    ref = constant_reference(cfg, target)
    cs = assemble(ConstraintWorld(), GraspMode(GraspKind.INDEPENDENT), cfg)
    return OcProblem(np.zeros(6), cfg.delta, cfg.horizon_N, BlendedHorizonCost(ref, GoalSet(), cfg), cs), cfg


def ellipsoid_problem():
    """Reach a target with a keep-out ellipsoid near the straight-line path."""
    cfg = make_cfg(n=10, delta=0.1, q=20.0, r=0.1, u_lim=1.0)
    x0 = stack([0.0, 0.06, 0.0], [0.0, -0.6, 0.0])
    target = stack([0.8, 0.06, 0.0], [0.0, -0.6, 0.0])
    obstacle = EllipsoidObstacle([0.4, 0.0, 0.0], np.eye(3), 1.0 / np.array([0.12, 0.12, 0.12]) ** 2, 1.0)
    ref = constant_reference(cfg, target)
    cs = assemble(ConstraintWorld(ellipsoids=(obstacle,)), GraspMode(GraspKind.INDEPENDENT), cfg)
    return OcProblem(x0, cfg.delta, cfg.horizon_N, BlendedHorizonCost(ref, GoalSet(), cfg), cs), cfg


def floor_problem():
    """Reference dips below the floor half-space; solution rides the plane."""
    cfg = make_cfg(n=10, delta=0.1, q=20.0, r=0.1, u_lim=1.0)
    x0 = stack([0.3, 0.0, 0.2], [0.3, -0.3, 0.2])
    target = stack([0.3, 0.0, -0.4], [0.3, -0.3, 0.2])
    planes = PlaneSet([[0.0, 0.0, 1.0]], [-0.1])
    ref = constant_reference(cfg, target)
    cs = assemble(ConstraintWorld(planes=planes), GraspMode(GraspKind.INDEPENDENT), cfg)
    return OcProblem(x0, cfg.delta, cfg.horizon_N, BlendedHorizonCost(ref, GoalSet(), cfg), cs), cfg


def coupled_problem():
    """Coordinated mode: left pinned to its reference, right slaved at a
    fixed offset in the commanded left frame."""
    cfg = make_cfg(n=10, delta=0.1, q=10.0, r=0.5, u_lim=0.6)
    offset = np.array([0.0, -0.4, 0.0])
    mode = GraspMode(GraspKind.TOP_DOWN_FRONT, offset)
    x_l0 = np.array([0.5, 0.2, 0.3])
    x0 = stack(x_l0, x_l0 + offset)
    n = cfg.horizon_N
    positions = np.empty((n + 1, 6))
    v_l = np.array([-0.05, 0.0, 0.02])
    for i in range(n + 1):
        left = x_l0 + v_l * cfg.delta * i
        positions[i] = stack(left, left + offset)
    ref = ReferenceTrajectory(positions, np.tile(np.concatenate([v_l, v_l]), (n, 1)))
    cr = CommandRotations(np.eye(3), np.eye(3), np.eye(3))
    cs = assemble(ConstraintWorld(), mode, cfg, ref.positions, cr)
    return OcProblem(x0, cfg.delta, n, BlendedHorizonCost(ref, GoalSet(), cfg), cs), cfg


CONSTRAINED_SUITE = {
    "velocity_bound": bounded_problem,
    "ellipsoid_detour": ellipsoid_problem,
    "floor_ride": floor_problem,
    "coordinated_coupling": coupled_problem,
}


class TestConstrained:
    def test_velocity_saturation_matches_bang_solution(self):
        problem, _cfg = bounded_problem()
        sol = solve(problem, SolverConfig())
        assert sol.converged
        # analytic optimum: ride the bound on the reaching axis, zero elsewhere
        assert np.abs(sol.controls[:, 0] - 0.1).max() <= 1e-4
        assert np.abs(sol.controls[:, 1:]).max() <= 1e-6

    @pytest.mark.parametrize("name", sorted(CONSTRAINED_SUITE))
    def test_suite_converges_within_tolerance(self, name):
        problem, _cfg = CONSTRAINED_SUITE[name]()
        sol = solve(problem, SolverConfig())
        assert sol.converged, f"{name} failed to converge"
        assert sol.max_violation <= 1e-4
        # the reported violation is the recomputed violation of the returned iterate
        recomputed = problem.constraints.max_violation(sol.states, sol.controls)
        assert sol.max_violation == recomputed

    def test_diagnostics_stream(self):
        import io
        import json as json_mod

        problem, _cfg = bounded_problem()
        stream = io.StringIO()
        sol = solve(problem, SolverConfig(), diagnostics=stream)
        lines = [json_mod.loads(ln) for ln in stream.getvalue().splitlines()]
        assert len(lines) == sol.outer_iterations
        assert all({"outer", "inner_iterations", "merit", "violation", "mu"} <= set(l) for l in lines)

    @pytest.mark.parametrize("name", sorted(CONSTRAINED_SUITE))
    def test_outer_violation_monotone(self, name):
        problem, _cfg = CONSTRAINED_SUITE[name]()
        sol = solve(problem, SolverConfig())
        hist = sol.violation_history
        for earlier, later in zip(hist, hist[1:]):
            assert later <= earlier + 1e-12

    @pytest.mark.parametrize("name", sorted(CONSTRAINED_SUITE))
    def test_line_search_never_increases_merit(self, name):
        problem, _cfg = CONSTRAINED_SUITE[name]()
        sol = solve(problem, SolverConfig())
        for inner_merits in sol.merit_history:
            for earlier, later in zip(inner_merits, inner_merits[1:]):
                assert later <= earlier

    def test_coupling_held_tight_with_strict_tolerance(self):
        problem, _cfg = coupled_problem()
        sol = solve(problem, SolverConfig(constraint_tol=1e-6, max_outer=10))
        assert sol.converged
        assert sol.max_violation <= 1e-6
        offset = problem.constraints.mode.grasp_offset
        for i in range(1, problem.horizon + 1):
            gap = sol.states[i, 3:] - sol.states[i, :3]
            assert np.linalg.norm(gap - offset) <= 5e-6


class TestMpcStep:
    def test_stationary_operator_holds(self):
        cfg = make_cfg()
        current = EndEffectorPairState([0.3, 0.2, 0.3], [0.3, -0.2, 0.3])
        ref = constant_reference(cfg, current.stacked)
        cs = assemble(ConstraintWorld(), GraspMode(GraspKind.INDEPENDENT), cfg)
        wp, sol = mpc_step(current, ref, GoalSet(), cs, cfg, SolverConfig())
        assert sol.converged
        assert np.abs(wp - current.stacked).max() <= 1e-6

    def test_ramp_advances_with_reference(self):
        cfg = make_cfg()
        current = EndEffectorPairState([0.3, 0.2, 0.3], [0.3, -0.2, 0.3])
        v = np.array([0.2, 0.0, 0.0, 0.2, 0.0, 0.0])
        n = cfg.horizon_N
        positions = current.stacked + np.outer(np.arange(n + 1), v * cfg.delta)
        ref = ReferenceTrajectory(positions, np.tile(v, (n, 1)))
        cs = assemble(ConstraintWorld(), GraspMode(GraspKind.INDEPENDENT), cfg)
        wp, sol = mpc_step(current, ref, GoalSet(), cs, cfg, SolverConfig())
        advance = wp - current.stacked
        assert np.linalg.norm(advance - v * cfg.delta) <= 0.1 * np.linalg.norm(v * cfg.delta)

    def test_goal_pulls_off_reference(self):
        cfg = make_cfg(alpha_w=60.0, beta_w=6.0)
        current = EndEffectorPairState([0.74, 0.1, 0.25], [0.3, -0.5, 0.3])
        goal = Goal([0.79, 0.1, 0.25], np.eye(3), "item", [10.0, 10.0, 10.0])
        ref = constant_reference(cfg, current.stacked)  # operator holds short of goal
        cs = assemble(ConstraintWorld(), GraspMode(GraspKind.INDEPENDENT), cfg)
        wp, sol = mpc_step(current, ref, GoalSet((goal,)), cs, cfg, SolverConfig())
        assert sol.converged
        d0 = np.linalg.norm(current.left - goal.position)
        d1 = np.linalg.norm(wp[:3] - goal.position)
        assert d1 < d0 - 1e-4  # moves toward the goal though the reference does not
        assert np.linalg.norm(wp[3:] - current.right) <= 1e-6  # far arm stays put

    def test_warm_started_static_solve_is_cheap(self):
        # stationary reference with an active coupling: after the first solve,
        # the shifted warm start should make the next solve nearly free
        cfg = make_cfg(n=10, delta=0.1, q=10.0, r=0.5, u_lim=0.6)
        offset = np.array([0.0, -0.4, 0.0])
        mode = GraspMode(GraspKind.TOP_DOWN_FRONT, offset)
        x_l0 = np.array([0.5, 0.2, 0.3])
        x0 = stack(x_l0 + [0.02, 0.0, 0.0], x_l0 + offset)
        ref = constant_reference(cfg, stack(x_l0, x_l0 + offset))
        cr = CommandRotations(np.eye(3), np.eye(3), np.eye(3))
        cs = assemble(ConstraintWorld(), mode, cfg, ref.positions, cr)
        problem = OcProblem(x0, cfg.delta, cfg.horizon_N, BlendedHorizonCost(ref, GoalSet(), cfg), cs)
        scfg = SolverConfig()
        first = solve(problem, scfg)
        assert first.converged
        warm = first.shifted_warm_start()
        problem2 = OcProblem(
            first.states[1], problem.delta, problem.horizon, problem.cost, problem.constraints
        )
        second = solve(problem2, scfg, warm)
        assert second.converged
        assert second.iterations <= 3

    def test_failure_holds_position(self):
        cfg = make_cfg()
        current = EndEffectorPairState([0.3, 0.2, 0.3], [0.3, -0.2, 0.3])
        ref = constant_reference(cfg, current.stacked + 5.0)
        cs = assemble(ConstraintWorld(), GraspMode(GraspKind.INDEPENDENT), cfg)
        # an unreachable tolerance forces non-convergence
        scfg = SolverConfig(max_outer=1, max_inner=1, constraint_tol=1e-16, cost_tol=1e-18)
        wp, sol = mpc_step(current, ref, GoalSet(), cs, cfg, scfg)
        if not sol.converged:
            assert np.array_equal(wp, current.stacked)
