import math

import numpy as np
import pytest

import tunnelslam as ts
from tunnelslam.metrics import TooShort, ape, rpe
from conftest import make_pose


def straight_path(n, step=1.0):
    return [ts.Pose3.from_yaw(0.0, (i * step, 0.0, 0.0)) for i in range(n)]


class TestRpe:
    def test_identical_trajectories(self):
        truth = straight_path(50)
        samples = rpe(truth, truth, 10.0)
        assert samples
        assert all(s.translation_error < 1e-12 and s.rotation_error < 1e-12
                   for s in samples)

    def test_constant_yaw_bias_closed_form(self):
        # estimate follows an arc of radius step/bias; over a segment of
        # length L the cross-track deviation is about L^2 * b / (2 * step)
        step, bias, n = 1.0, 0.001, 400
        truth = straight_path(n, step)
        est = []
        pose = truth[0]
        inc = ts.Pose3.from_yaw(bias, (step, 0.0, 0.0))
        est.append(pose)
        for _ in range(n - 1):
            pose = pose.compose(inc)
            est.append(pose)
        for L in (50.0, 150.0):
            samples = rpe(est, truth, L)
            med = np.median([s.translation_error for s in samples])
            predicted = L * L * bias / (2 * step)
            assert med == pytest.approx(predicted, rel=0.1)
        # and the error grows with segment length
        med_50 = np.median([s.translation_error for s in rpe(est, truth, 50.0)])
        med_150 = np.median([s.translation_error for s in rpe(est, truth, 150.0)])
        assert med_150 > med_50

    def test_too_short(self):
        truth = straight_path(5)
        with pytest.raises(TooShort):
            rpe(truth, truth, 100.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rpe(straight_path(5), straight_path(6), 1.0)

    def test_invariant_to_global_rigid_transform(self):
        rng = np.random.default_rng(0)
        truth = straight_path(60)
        est = [ts.Pose3(p.q, p.t + rng.normal(0, 0.05, 3)) for p in truth]
        base = rpe(est, truth, 15.0)
        T = make_pose(rng)
        moved = rpe([T.compose(p) for p in est], [T.compose(p) for p in truth], 15.0)
        for a, b in zip(base, moved):
            assert a.translation_error == pytest.approx(b.translation_error, abs=1e-9)
            assert a.rotation_error == pytest.approx(b.rotation_error, abs=1e-9)


class TestApe:
    def test_identical(self):
        truth = straight_path(20)
        assert np.allclose(ape(truth, truth), 0.0)

    def test_rigid_offset_is_one(self):
        truth = straight_path(20)
        est = [ts.Pose3(p.q, p.t + np.array([0.0, 1.0, 0.0])) for p in truth]
        np.testing.assert_allclose(ape(est, truth), 1.0, atol=1e-12)

    def test_nonnegative_and_zero_iff_equal(self):
        rng = np.random.default_rng(1)
        truth = straight_path(30)
        est = [ts.Pose3(p.q, p.t + rng.normal(0, 0.1, 3)) for p in truth]
        errors = ape(est, truth)
        assert np.all(errors >= 0)
        assert errors.max() > 0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ape(straight_path(3), straight_path(4))
