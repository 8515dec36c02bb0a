import numpy as np
import pytest

from teleassist.armkin import (
    DEFAULT_POSTURE,
    dh_transform,
    fk,
    fk_joint_positions,
    ik,
    jacobian,
    select_solution,
    ur5e_arm,
    wrap_angle,
)
from teleassist.worldmodel import check_rot3, rot_rpy, rot_z

MODEL = ur5e_arm()
MOUNTED = ur5e_arm(mount_translation=[0.10, 0.18, 0.05], mount_rotation=rot_z(np.pi / 4))


def chained_matrix_oracle(model, q):
    """Independent flange pose: explicit product of the six DH transforms."""
    t = model.mount_tf.copy()
    for i in range(6):
        t = t @ dh_transform(
            q[i] + model.dh_theta_offset[i], model.dh_d[i], model.dh_a[i], model.dh_alpha[i]
        )
    return t


class TestFk:
    def test_zero_pose_matches_chained_oracle(self):
        for model in (MODEL, MOUNTED):
            t = chained_matrix_oracle(model, np.zeros(6))
            pos, rot = fk(model, np.zeros(6))
            assert np.allclose(pos, t[:3, 3], atol=1e-15)
            assert np.allclose(rot, t[:3, :3], atol=1e-15)

    def test_random_pose_matches_chained_oracle(self):
        rng = np.random.default_rng(61)
        for _ in range(100):
            q = rng.uniform(-np.pi, np.pi, 6)
            t = chained_matrix_oracle(MOUNTED, q)
            pos, rot = fk(MOUNTED, q)
            assert np.allclose(pos, t[:3, 3], atol=1e-12)
            assert np.allclose(rot, t[:3, :3], atol=1e-12)

    def test_base_joint_pi_flips_xy_in_mount_frame(self):
        rng = np.random.default_rng(62)
        for _ in range(20):
            q = rng.uniform(-1.0, 1.0, 6)
            q2 = q.copy()
            q2[0] += np.pi
            p1, _ = fk(MOUNTED, q)
            p2, _ = fk(MOUNTED, q2)
            # express both in the mount frame: rotating the base joint by pi
            # negates the x and y components there
            rm, tm = MOUNTED.mount_rotation, MOUNTED.mount_translation
            m1 = rm.T @ (p1 - tm)
            m2 = rm.T @ (p2 - tm)
            assert np.allclose(m2, [-m1[0], -m1[1], m1[2]], atol=1e-12)

    def test_orientation_always_valid(self):
        rng = np.random.default_rng(63)
        for _ in range(1000):
            _, rot = fk(MODEL, rng.uniform(-np.pi, np.pi, 6))
            check_rot3(rot, tol=1e-9)

    def test_joint_positions_chain_shape(self):
        pts = fk_joint_positions(MOUNTED, np.zeros(6))
        assert pts.shape == (7, 3)
        assert np.allclose(pts[0], MOUNTED.mount_translation)
        pos, _ = fk(MOUNTED, np.zeros(6))
        assert np.allclose(pts[-1], pos, atol=1e-12)


class TestIk:
    def test_round_trip_membership(self):
        rng = np.random.default_rng(64)
        for _ in range(300):
            q = rng.uniform(-np.pi, np.pi, 6)
            pos, rot = fk(MOUNTED, q)
            sols = ik(MOUNTED, pos, rot)
            assert any(np.max(np.abs(wrap_angle(s - q))) < 1e-7 for s in sols)

    def test_round_trip_accuracy(self):
        rng = np.random.default_rng(65)
        for _ in range(200):
            q = rng.uniform(-np.pi, np.pi, 6)
            pos, rot = fk(MODEL, q)
            for s in ik(MODEL, pos, rot):
                p2, r2 = fk(MODEL, s)
                assert np.linalg.norm(p2 - pos) <= 1e-8
                assert np.abs(r2 - rot).max() <= 1e-7

    def test_generic_interior_pose_eight_branches(self):
        # elbow bent, wrist off-singularity, comfortably inside the workspace
        # so every shoulder/elbow/wrist branch pairing stays reachable
        generic = np.array([0.3, -1.2, 1.6, -1.2, -1.3, 0.4])
        rng = np.random.default_rng(66)
        count8 = 0
        for _ in range(50):
            q = generic + rng.uniform(-0.3, 0.3, 6)
            pos, rot = fk(MODEL, q)
            if len(ik(MODEL, pos, rot)) == 8:
                count8 += 1
        assert count8 == 50

    def test_unreachable_empty(self):
        assert ik(MODEL, [10.0, 0.0, 0.0], np.eye(3)) == []

    def test_out_of_limit_branches_filtered(self):
        narrow = ur5e_arm(lower=[-2.8, -np.pi, -2.5, -np.pi, -np.pi, -np.pi],
                          upper=[2.8, 0.0, 2.5, np.pi, np.pi, np.pi])
        rng = np.random.default_rng(67)
        saw_fewer = False
        for _ in range(50):
            q = rng.uniform(-np.pi, np.pi, 6)
            pos, rot = fk(MODEL, q)
            sols_all = ik(MODEL, pos, rot)
            sols_narrow = ik(narrow, pos, rot)
            assert len(sols_narrow) <= len(sols_all)
            for s in sols_narrow:
                assert np.all(s >= narrow.lower) and np.all(s <= narrow.upper)
            if len(sols_narrow) < len(sols_all):
                saw_fewer = True
        assert saw_fewer

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(68)
        step = 1e-7
        for _ in range(20):
            q = rng.uniform(-np.pi, np.pi, 6)
            jac = jacobian(MOUNTED, q)
            for k in range(6):
                qp, qm = q.copy(), q.copy()
                qp[k] += step
                qm[k] -= step
                pp, _ = fk(MOUNTED, qp)
                pm, _ = fk(MOUNTED, qm)
                fd = (pp - pm) / (2 * step)
                assert np.abs(jac[:3, k] - fd).max() < 1e-5


class TestSelectSolution:
    def make_candidates(self):
        return [
            np.array([0.0, -1.5, 1.0, -1.0, -1.5, 0.0]),
            np.array([0.5, -1.2, 1.4, -0.8, -1.6, 0.2]),
            np.array([2.0, 1.0, -1.0, 2.0, 1.5, 2.5]),
        ]

    def test_zero_posture_weight_returns_nearest_current(self):
        cands = self.make_candidates()
        q_now = np.array([0.45, -1.25, 1.35, -0.85, -1.55, 0.15])
        best = select_solution(cands, q_now, DEFAULT_POSTURE, np.ones(6), np.zeros(6))
        assert np.array_equal(best, cands[1])

    def test_zero_current_weight_returns_nearest_posture(self):
        cands = self.make_candidates()
        q_now = np.array([2.0, 1.0, -1.0, 2.0, 1.5, 2.5])
        desired = np.array([0.0, -1.5, 1.0, -1.0, -1.5, 0.0])
        best = select_solution(cands, q_now, desired, np.zeros(6), np.ones(6))
        assert np.array_equal(best, cands[0])

    def test_tie_breaks_to_lowest_index(self):
        a = np.array([0.2, 0, 0, 0, 0, 0])
        b = np.array([-0.2, 0, 0, 0, 0, 0])
        for _ in range(10):
            best = select_solution([a, b], np.zeros(6), np.zeros(6), np.ones(6), np.ones(6))
            assert np.array_equal(best, a)

    def test_scale_invariance_of_argmin(self):
        rng = np.random.default_rng(69)
        for _ in range(50):
            cands = [rng.uniform(-np.pi, np.pi, 6) for _ in range(5)]
            q_now = rng.uniform(-np.pi, np.pi, 6)
            wl, wd = rng.uniform(0.1, 2, 6), rng.uniform(0.1, 2, 6)
            s = rng.uniform(0.5, 20.0)
            b1 = select_solution(cands, q_now, DEFAULT_POSTURE, wl, wd)
            b2 = select_solution(cands, q_now, DEFAULT_POSTURE, s * wl, s * wd)
            assert np.array_equal(b1, b2)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            select_solution([], np.zeros(6), np.zeros(6), np.ones(6), np.ones(6))

    def test_selection_respects_limits_via_ik(self):
        rng = np.random.default_rng(70)
        for _ in range(50):
            q = rng.uniform(-np.pi, np.pi, 6)
            pos, rot = fk(MOUNTED, q)
            sols = ik(MOUNTED, pos, rot)
            if not sols:
                continue
            best = select_solution(sols, q, DEFAULT_POSTURE, np.ones(6), 0.1 * np.ones(6))
            assert np.all(best >= MOUNTED.lower) and np.all(best <= MOUNTED.upper)
