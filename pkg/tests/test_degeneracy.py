import math

import numpy as np
import pytest

import tunnelslam as ts
from tunnelslam.degeneracy import (DegenerateLabels, InsufficientCorrespondences,
                                   assess, gradient_rows, hessian, misalignment,
                                   point_cost_gradient, roc_curve)
from tunnelslam.geometry import euler_zyx_to_matrix
from tunnelslam.registration import Correspondences
from conftest import assess_scene_pair, make_pose


def fd_gradient(t_vec, angles, p_source, p_target, step=1e-6):
    """Central finite differences over (tx,ty,tz,rx,ry,rz); the oracle."""
    def cost(params):
        tx, ty, tz, rx, ry, rz = params
        R = euler_zyx_to_matrix(rx, ry, rz)
        d = R @ p_source + np.array([tx, ty, tz]) - p_target
        return float(d @ d)

    base = np.concatenate([t_vec, angles])
    grad = np.empty(6)
    for i in range(6):
        hi, lo = base.copy(), base.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (cost(hi) - cost(lo)) / (2 * step)
    return grad


def random_transform_pair(rng):
    angles = rng.uniform(-math.pi / 2 + 0.1, math.pi / 2 - 0.1, size=3)
    t = rng.normal(scale=2.0, size=3)
    pose = ts.Pose3.from_euler_zyx(*angles, t=t)
    p_source = rng.normal(scale=5.0, size=3)
    p_target = rng.normal(scale=5.0, size=3)
    return pose, angles, t, p_source, p_target


class TestMisalignment:
    def test_zero(self):
        assert np.allclose(misalignment(ts.Pose3.identity(), [1, 2, 3], [1, 2, 3]), 0)

    def test_identity_offset(self):
        np.testing.assert_allclose(
            misalignment(ts.Pose3.identity(), [1, 0, 0], [0, 0, 0]), [1, 0, 0])

    def test_rotation_cancels(self):
        u = ts.Pose3.from_yaw(math.pi / 2)
        np.testing.assert_allclose(misalignment(u, [1, 0, 0], [0, 1, 0]), 0, atol=1e-12)


class TestGradient:
    def test_zero_at_minimum(self):
        g = point_cost_gradient(ts.Pose3.identity(), [1.0, 2.0, 0.5], [1.0, 2.0, 0.5])
        np.testing.assert_allclose(g, 0.0, atol=1e-12)

    def test_translation_block(self):
        g = point_cost_gradient(ts.Pose3.identity(), [1.0, 0, 0], [0.0, 0, 0])
        np.testing.assert_allclose(g[:3], [2.0, 0.0, 0.0], atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            pose, angles, t, ps, pt = random_transform_pair(rng)
            analytic = point_cost_gradient(pose, ps, pt)
            numeric = fd_gradient(t, angles, ps, pt)
            denom = max(np.linalg.norm(numeric), 1e-6)
            assert np.linalg.norm(analytic - numeric) / denom < 1e-5

    def test_gradient_rows_match_single(self):
        rng = np.random.default_rng(7)
        pose, _, _, _, _ = random_transform_pair(rng)
        src = rng.normal(size=(20, 3))
        tgt = rng.normal(size=(20, 3))
        rows = gradient_rows(pose, Correspondences(src, tgt))
        for k in range(20):
            np.testing.assert_allclose(rows[k], point_cost_gradient(pose, src[k], tgt[k]),
                                       atol=1e-9)


class TestHessian:
    def test_single_pair_outer_product(self):
        rng = np.random.default_rng(0)
        pose, _, _, ps, pt = random_transform_pair(rng)
        # replicate the pair 6 times to satisfy the minimum count
        corr = Correspondences(np.tile(ps, (6, 1)), np.tile(pt, (6, 1)))
        H = hessian(pose, corr)
        g = point_cost_gradient(pose, ps, pt)
        np.testing.assert_allclose(H, 6 * np.outer(g, g), rtol=1e-9)
        assert np.linalg.matrix_rank(H, tol=1e-9 * np.abs(H).max()) == 1

    def test_plane_pair_rank_deficient(self):
        # correspondences on an infinite plane constrain only 3 DoF
        rng = np.random.default_rng(1)
        xy = rng.uniform(-10, 10, size=(400, 2))
        src = np.c_[xy, np.zeros(400)]
        tgt = src + np.array([0, 0, 0.01])          # uniform normal offset
        H = hessian(ts.Pose3.identity(), Correspondences(src, tgt))
        w = np.linalg.eigvalsh(H)
        assert w[0] < 1e-9 * w[-1]

    def test_full_scene_well_conditioned(self, junction_world):
        report, _ = assess_scene_pair(junction_world,
                                      ts.Pose3.from_yaw(0.0, (19.75, 0.0, 1.0)),
                                      ts.Pose3.from_yaw(0.0, (20.0, 0.0, 1.0)), seed=0)
        assert report.eigenvalues[0] / report.eigenvalues[5] < 100.0

    def test_insufficient(self):
        with pytest.raises(InsufficientCorrespondences):
            hessian(ts.Pose3.identity(), Correspondences(np.zeros((5, 3)), np.zeros((5, 3))))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        pose, _, _, _, _ = random_transform_pair(rng)
        src = rng.normal(size=(50, 3))
        tgt = rng.normal(size=(50, 3))
        w1 = np.linalg.eigvalsh(hessian(pose, Correspondences(src, tgt)))
        perm = rng.permutation(50)
        w2 = np.linalg.eigvalsh(hessian(pose, Correspondences(src[perm], tgt[perm])))
        np.testing.assert_allclose(w1, w2, rtol=1e-6)

    def test_kappa_scale_invariance(self):
        # scaling every gradient by c scales eigenvalues by c^2, kappa unchanged
        rng = np.random.default_rng(3)
        pose, _, _, _, _ = random_transform_pair(rng)
        src = rng.normal(size=(30, 3))
        tgt = rng.normal(size=(30, 3))
        rows = gradient_rows(pose, Correspondences(src, tgt))
        for c in (0.1, 7.0):
            w1 = np.sort(np.linalg.eigvalsh(rows.T @ rows))
            w2 = np.sort(np.linalg.eigvalsh((c * rows).T @ (c * rows)))
            np.testing.assert_allclose(w2, c * c * w1, rtol=1e-9)
            assert w2[-1] / w2[0] == pytest.approx(w1[-1] / w1[0], rel=1e-9)

    def test_weyl_monotonicity(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            pose, _, _, _, _ = random_transform_pair(rng)
            src = rng.normal(size=(12, 3))
            tgt = rng.normal(size=(12, 3))
            w_before = np.linalg.eigvalsh(hessian(pose, Correspondences(src[:-1], tgt[:-1])))
            w_after = np.linalg.eigvalsh(hessian(pose, Correspondences(src, tgt)))
            assert np.all(w_after >= w_before - 1e-9)


class TestAssess:
    def test_corridor_degenerate_along_axis(self, corridor_world):
        report, _ = assess_scene_pair(corridor_world,
                                      ts.Pose3.from_yaw(0.0, (25.0, 0.0, 1.0)),
                                      ts.Pose3.from_yaw(0.0, (25.25, 0.0, 1.0)), seed=0)
        assert report.degenerate
        assert report.log_kappa >= 2.0
        assert abs(report.least_observable_direction[0]) > 0.9

    def test_junction_not_degenerate(self, junction_world):
        report, _ = assess_scene_pair(junction_world,
                                      ts.Pose3.from_yaw(0.0, (19.75, 0.0, 1.0)),
                                      ts.Pose3.from_yaw(0.0, (20.0, 0.0, 1.0)), seed=0)
        assert not report.degenerate
        assert report.log_kappa < 2.0

    def test_report_invariants(self, junction_world):
        report, _ = assess_scene_pair(junction_world,
                                      ts.Pose3.from_yaw(0.0, (19.5, 0.0, 1.0)),
                                      ts.Pose3.from_yaw(0.0, (19.75, 0.0, 1.0)), seed=1)
        w = report.eigenvalues
        assert np.all(np.diff(w) <= 0) and np.all(w >= 0)
        assert report.condition_number == pytest.approx(w[0] / w[5])
        assert np.linalg.norm(report.least_observable_direction) == pytest.approx(1.0)
        assert report.degenerate == (report.log_kappa >= 2.0)

    def test_singular_is_degenerate(self):
        src = np.tile(np.array([1.0, 0.0, 0.0]), (10, 1))
        tgt = src.copy()
        report = assess(ts.Pose3.identity(), Correspondences(src, tgt), 2.0)
        assert math.isinf(report.condition_number)
        assert report.degenerate


class TestRoc:
    def test_perfect_separation(self):
        scores = np.array([3.0, 3.5, 4.0, 0.5, 1.0, 1.5])
        labels = np.array([1, 1, 1, 0, 0, 0])
        _, auc = roc_curve(scores, labels)
        assert auc == pytest.approx(1.0)

    def test_chance_level(self):
        rng = np.random.default_rng(0)
        scores = rng.normal(size=1000)
        labels = rng.integers(0, 2, size=1000)
        _, auc = roc_curve(scores, labels)
        assert abs(auc - 0.5) < 0.05

    def test_monotone_curve(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(size=100)
        labels = (scores + rng.normal(scale=1.5, size=100)) > 0
        points, _ = roc_curve(scores, labels.astype(int))
        assert np.all(np.diff(points[:, 0]) >= 0)
        assert np.all(np.diff(points[:, 1]) >= 0)

    def test_degenerate_labels(self):
        with pytest.raises(DegenerateLabels):
            roc_curve(np.array([1.0, 2.0]), np.array([1, 1]))
