import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import tunnelslam as ts
from tunnelslam.geometry import (Pose3, pose_error, quat_from_axis_angle,
                                 se3_adjoint, se3_exp, se3_log)
from conftest import make_pose


def angles():
    return st.floats(-math.pi, math.pi, allow_nan=False)


def coords():
    return st.floats(-50.0, 50.0, allow_nan=False)


def poses():
    return st.builds(
        lambda ax, ay, az, angle, tx, ty, tz: Pose3(
            quat_from_axis_angle(np.array([ax, ay, az]) if abs(ax) + abs(ay) + abs(az) > 1e-3
                                 else np.array([1.0, 0.0, 0.0]), angle),
            np.array([tx, ty, tz])),
        st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
        angles(), coords(), coords(), coords())


class TestCompose:
    def test_identity(self):
        p = Pose3.from_yaw(0.7, (1.0, -2.0, 3.0))
        q = Pose3.identity().compose(p)
        assert pose_error(p, q) == pytest.approx((0.0, 0.0), abs=1e-12)

    def test_group_inverse(self):
        p = Pose3.from_yaw(1.1, (4.0, 5.0, -1.0))
        angle, dist = pose_error(Pose3.identity(), p.compose(p.inverse()))
        assert angle < 1e-9 and dist < 1e-9

    def test_hand_computed_yaw90(self):
        # oracle: 4x4 matrix product of the two transforms
        a = Pose3.from_yaw(math.pi / 2, (1.0, 0.0, 0.0))
        b = Pose3.from_yaw(0.0, (1.0, 0.0, 0.0))
        expected = a.matrix() @ b.matrix()
        got = a.compose(b)
        np.testing.assert_allclose(got.matrix(), expected, atol=1e-12)
        np.testing.assert_allclose(got.t, [1.0, 1.0, 0.0], atol=1e-12)
        assert got.yaw() == pytest.approx(math.pi / 2)

    @settings(max_examples=100, deadline=None)
    @given(poses(), poses(), poses())
    def test_associativity(self, a, b, c):
        left = a.compose(b).compose(c)
        right = a.compose(b.compose(c))
        angle, dist = pose_error(left, right)
        assert angle < 1e-9
        assert dist < 1e-9

    def test_between_compose_roundtrip_bulk(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            a, b = make_pose(rng), make_pose(rng)
            angle, dist = pose_error(b, a.compose(a.between(b)))
            assert angle < 1e-9 and dist < 1e-9


class TestBetween:
    def test_self(self):
        p = Pose3.from_yaw(0.3, (2.0, 0.0, 1.0))
        angle, dist = pose_error(Pose3.identity(), p.between(p))
        assert angle < 1e-12 and dist < 1e-12

    def test_from_identity(self):
        p = Pose3.from_yaw(-0.4, (0.5, 0.5, 0.0))
        d = Pose3.identity().between(p)
        assert pose_error(d, p) == pytest.approx((0.0, 0.0), abs=1e-12)

    def test_rotated_frame(self):
        # displacement [0,1,0] seen from a frame yawed 90 deg is [1,0,0]
        a = Pose3.from_yaw(math.pi / 2, (0.0, 0.0, 0.0))
        b = Pose3.from_yaw(math.pi / 2, (0.0, 1.0, 0.0))
        d = a.between(b)
        np.testing.assert_allclose(d.t, [1.0, 0.0, 0.0], atol=1e-12)
        assert d.rotation_angle() < 1e-12


class TestPoseError:
    def test_zero(self):
        p = Pose3.from_yaw(1.0, (1, 2, 3))
        assert pose_error(p, p) == (0.0, 0.0)

    def test_antipodal_rotation(self):
        angle, dist = pose_error(Pose3.identity(), Pose3.from_yaw(math.pi))
        assert angle == pytest.approx(math.pi, abs=1e-9)
        assert dist == 0.0

    def test_three_four_five(self):
        angle, dist = pose_error(Pose3.identity(), Pose3.from_yaw(0.0, (3.0, 4.0, 0.0)))
        assert angle == pytest.approx(0.0, abs=1e-12)
        assert dist == pytest.approx(5.0, abs=1e-12)


class TestQuaternionInvariants:
    @settings(max_examples=100, deadline=None)
    @given(poses(), poses())
    def test_unit_norm_preserved(self, a, b):
        assert abs(np.linalg.norm(a.compose(b).q) - 1.0) < 1e-9

    def test_rotation_orthonormal(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            R = make_pose(rng).rotation()
            np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-9)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)


class TestSe3Maps:
    def test_log_exp_roundtrip(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            p = make_pose(rng)
            q = se3_exp(se3_log(p))
            angle, dist = pose_error(p, q)
            assert angle < 1e-9 and dist < 1e-8

    def test_log_zero_iff_identity(self):
        assert np.allclose(se3_log(Pose3.identity()), 0.0)
        xi = se3_log(Pose3.from_yaw(0.2, (1.0, 0.0, 0.0)))
        assert np.linalg.norm(xi) > 0.1

    def test_adjoint_matches_conjugation(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            p = make_pose(rng)
            xi = rng.normal(scale=0.01, size=6)
            # p * exp(xi) * p^-1 == exp(Ad_p xi), first order exact here
            lhs = p.compose(se3_exp(xi)).compose(p.inverse())
            rhs = se3_exp(se3_adjoint(p) @ xi)
            angle, dist = pose_error(lhs, rhs)
            assert angle < 1e-6 and dist < 1e-6


class TestPointCloud:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            ts.PointCloud(np.array([[0.0, 0.0, np.inf]]))

    def test_transform_roundtrip(self):
        rng = np.random.default_rng(1)
        cloud = ts.PointCloud(rng.normal(size=(100, 3)))
        p = make_pose(rng)
        back = cloud.transformed(p).transformed(p.inverse())
        np.testing.assert_allclose(back.points, cloud.points, atol=1e-9)
