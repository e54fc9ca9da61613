import numpy as np
import pytest

import tunnelslam as ts
from tunnelslam import registration as reg
from tunnelslam import sim


def make_pose(rng) -> ts.Pose3:
    v = rng.normal(size=3)
    angle = rng.uniform(0, np.pi)
    q = ts.geometry.quat_from_axis_angle(v if np.linalg.norm(v) > 1e-6 else np.array([1.0, 0, 0]),
                                         angle)
    return ts.Pose3(q, rng.normal(scale=5.0, size=3))


@pytest.fixture(scope="session")
def junction_world():
    return sim.scenario("t_junction").world


@pytest.fixture(scope="session")
def corridor_world():
    return sim.scenario("straight_corridor").world


@pytest.fixture(scope="session")
def junction_scan(junction_world):
    """Noise-free scan at the junction center (shared; scans are immutable)."""
    model = sim.LidarModel(sigma_r=0.0, sigma_point=0.0)
    return sim.scan(junction_world, ts.Pose3.from_yaw(0.0, (20.0, 0.0, 1.0)), model, None)


@pytest.fixture(scope="session")
def junction_scan_noisy(junction_world):
    model = sim.LidarModel()
    return sim.scan(junction_world, ts.Pose3.from_yaw(0.0, (20.0, 0.0, 1.0)), model,
                    np.random.default_rng(7))


def assess_scene_pair(world, pose_a, pose_b, seed, assess_range=6.0):
    """Key-scan pair -> converged plane ICP -> degeneracy report (shared recipe)."""
    from tunnelslam import degeneracy as dg
    model = sim.LidarModel()
    rng = np.random.default_rng(seed)
    a = reg.range_filter(sim.scan(world, pose_a, model, rng), assess_range)
    b = reg.range_filter(sim.scan(world, pose_b, model, rng), assess_range)
    source = reg.voxel_filter(b, 0.2)
    result = reg.icp(source, a, pose_a.between(pose_b),
                     reg.IcpParams(max_correspondence_distance=0.5, cost="plane"))
    return dg.assess(result.transform, result.correspondences), result
