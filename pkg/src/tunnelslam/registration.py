"""Point-cloud filtering and two-stage ICP odometry.

``icp`` is plain point-to-point: alternate nearest-neighbor correspondence
(kd-tree) with the closed-form SVD alignment, tracking the mean squared
misalignment as the cost. ``scan_to_submap`` refines a predicted world pose
against locally aggregated key-scans. The correspondences of the final
iteration are kept because the degeneracy analysis consumes them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Pose3, PointCloud, pose_error
from .graph import PoseGraph


class FewCorrespondences(RuntimeError):
    """Raised when ICP ends with fewer matched pairs than the configured minimum."""


class EmptySubmap(RuntimeError):
    """Raised when no key-scan lies within the submap radius."""


@dataclass(frozen=True)
class IcpParams:
    max_correspondence_distance: float = 1.0   # meters
    max_iterations: int = 50
    epsilon: float = 1e-6                      # cost-change convergence, m^2
    min_correspondences: int = 50
    cost: str = "point"                        # "point" or "plane"
    normal_k: int = 20                         # neighbors for target normals (plane mode)
    planarity_min: float = 9.0                 # middle/smallest PCA eigenvalue ratio
    linearity_max: float = 16.0                # largest/middle ratio above which the
                                               # neighborhood is a 1D arc, not a surface


@dataclass(frozen=True)
class Correspondences:
    """Final-iteration matched pairs; source points are in the source frame,
    target points in the target frame, paired under the converged transform."""

    source: np.ndarray  # (N, 3)
    target: np.ndarray  # (N, 3)

    @property
    def count(self) -> int:
        return self.source.shape[0]


@dataclass(frozen=True)
class RegistrationResult:
    transform: Pose3
    mse: float
    correspondences: Correspondences
    converged: bool
    iterations: int
    cost_history: tuple[float, ...] = ()


def correspondence_mse(transform: Pose3, corr: Correspondences) -> float:
    """Mean squared misalignment of the pairs under ``transform``."""
    if corr.count == 0:
        return 0.0
    d = transform.apply(corr.source) - corr.target
    return float(np.mean(np.sum(d * d, axis=1)))


# ---------------------------------------------------------------------------
# filters
# ---------------------------------------------------------------------------

def voxel_filter(cloud: PointCloud, voxel_size: float) -> PointCloud:
    """Replace the points in each occupied voxel with their centroid."""
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / voxel_size).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    sums = np.zeros((counts.shape[0], 3))
    np.add.at(sums, inverse, cloud.points)
    return PointCloud(sums / counts[:, None], cloud.frame)


def _ring_azimuth_bins(points: np.ndarray, n_rings: int = 16,
                       elevation_span_deg: tuple[float, float] = (-15.0, 15.0)) -> tuple[np.ndarray, np.ndarray]:
    r_xy = np.hypot(points[:, 0], points[:, 1])
    elev = np.arctan2(points[:, 2], r_xy)
    lo, hi = (math.radians(v) for v in elevation_span_deg)
    ring = np.clip(np.rint((elev - lo) / (hi - lo) * (n_rings - 1)), 0, n_rings - 1).astype(int)
    azim = np.arctan2(points[:, 1], points[:, 0])
    return ring, azim


def salient_filter(cloud: PointCloud, keep_fraction: float = 0.1,
                   neighbors: int = 10, sectors: int = 6,
                   edge_share: float = 0.2) -> PointCloud:
    """Keep curvature extremes, uniformly distributed over azimuthal sectors.

    Curvature is the centered range-difference sum over ``neighbors``
    azimuthal neighbors within a scan ring (a symmetric window cancels on
    linear range profiles and spikes at kinks, so corners rank above
    grazing wall stretches); the top ``edge_share`` of the kept budget goes
    to high-curvature (edge) points, the rest to the flattest (planar)
    points of each sector.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must be in (0, 1]")
    if len(cloud) < 10 or keep_fraction == 1.0:
        return cloud
    pts = cloud.points
    ring, azim = _ring_azimuth_bins(pts)
    ranges = np.linalg.norm(pts, axis=1)
    sector = np.minimum((((azim + np.pi) / (2 * np.pi)) * sectors).astype(int), sectors - 1)

    keep: list[np.ndarray] = []
    half = neighbors // 2
    for r in np.unique(ring):
        idx = np.where(ring == r)[0]
        if idx.size < neighbors + 1:
            keep.append(idx)
            continue
        order = idx[np.argsort(azim[idx], kind="stable")]
        rr = ranges[order]
        n = rr.shape[0]
        offsets = [o for o in range(-half, half + 1) if o != 0]
        neigh = np.stack([np.roll(rr, -o) for o in offsets], axis=0)
        curv = ((neigh - rr[None, :]).sum(axis=0) / np.maximum(rr, 1e-9)) ** 2
        for s in range(sectors):
            in_s = np.where(sector[order] == s)[0]
            if in_s.size == 0:
                continue
            budget = keep_fraction * in_s.size
            n_edge = int(round(edge_share * budget))
            n_plane = int(round((1.0 - edge_share) * budget))
            ranked = in_s[np.argsort(curv[in_s], kind="stable")]
            chosen = set()
            if n_edge > 0:
                chosen.update(ranked[-n_edge:].tolist())
            if n_plane > 0:
                chosen.update(ranked[:n_plane].tolist())
            if chosen:
                keep.append(order[sorted(chosen)])
    if not keep:
        return PointCloud(np.zeros((0, 3)), cloud.frame)
    sel = np.sort(np.concatenate(keep))
    return PointCloud(pts[sel], cloud.frame)


# ---------------------------------------------------------------------------
# ICP
# ---------------------------------------------------------------------------

def _best_rigid(source: np.ndarray, target: np.ndarray) -> Pose3:
    """Least-squares rigid transform mapping source onto target (Kabsch/SVD)."""
    cs = source.mean(axis=0)
    ct = target.mean(axis=0)
    H = (source - cs).T @ (target - ct)
    U, _, Vt = np.linalg.svd(H)
    S = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ S @ U.T
    return Pose3.from_matrix(R, ct - R @ cs)


def _surface_normals(points: np.ndarray, tree: cKDTree, k: int,
                     planarity_min: float, linearity_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals from local PCA plus a usability mask.

    A neighborhood is usable only when it is genuinely two-dimensional:
    the middle PCA eigenvalue must clearly exceed the smallest (planarity)
    and must not be dwarfed by the largest (a 1D arc has no defined
    normal). Sensor-centered scan rings on flat ground are the common
    offender for both failure modes.
    """
    k = min(k, points.shape[0])
    _, nn = tree.query(points, k=k)
    neigh = points[nn]                                   # (N, k, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    vals, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]                              # smallest-variance axis
    normals = normals / np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-12)
    planar = ((vals[:, 1] > planarity_min * np.maximum(vals[:, 0], 1e-12))
              & (vals[:, 2] < linearity_max * np.maximum(vals[:, 1], 1e-12)))
    return normals, planar


def icp(source: PointCloud, target: PointCloud, initial_guess: Pose3 | None = None,
        params: IcpParams | None = None) -> RegistrationResult:
    """ICP aligning ``source`` onto ``target``.

    cost "point": classic point-to-point against the nearest target sample.
    cost "plane": the matched target sample is replaced by the foot point of
    the moved source point on the target's local tangent plane, which
    removes the tangential sampling mismatch between two scans of the same
    surface; the update step is the same closed-form SVD alignment.

    Within each iteration the alignment step cannot increase the cost on
    the current correspondence set (asserted); convergence is declared when
    the cost change drops below ``params.epsilon`` before the iteration
    cap. Raises FewCorrespondences when the final pair count is below
    ``params.min_correspondences``.
    """
    params = params or IcpParams()
    if len(source) == 0 or len(target) == 0:
        raise FewCorrespondences("empty input cloud")
    transform = initial_guess or Pose3.identity()
    tree = cKDTree(target.points)
    src = source.points
    normals = planar = None
    if params.cost == "plane":
        normals, planar = _surface_normals(target.points, tree, params.normal_k,
                                           params.planarity_min, params.linearity_max)

    prev_cost = None
    converged = False
    history: list[float] = []
    corr_src = np.zeros((0, 3))
    corr_tgt = np.zeros((0, 3))
    iterations = 0
    for iterations in range(1, params.max_iterations + 1):
        moved = transform.apply(src)
        dist, nn = tree.query(moved, distance_upper_bound=params.max_correspondence_distance)
        mask = np.isfinite(dist)
        if normals is not None:
            mask &= planar[np.minimum(nn, len(target) - 1)]
        if mask.sum() < 3:
            break
        corr_src = src[mask]
        matched = target.points[nn[mask]]
        if normals is not None:
            n = normals[nn[mask]]
            offset = np.sum((moved[mask] - matched) * n, axis=1)
            corr_tgt = moved[mask] - offset[:, None] * n
        else:
            corr_tgt = matched
        d0 = moved[mask] - corr_tgt
        pre_cost = float(np.mean(np.sum(d0 * d0, axis=1)))
        transform = _best_rigid(corr_src, corr_tgt)
        d = transform.apply(corr_src) - corr_tgt
        cost = float(np.mean(np.sum(d * d, axis=1)))
        assert cost <= pre_cost + 1e-12, "alignment step increased the cost"
        history.append(cost)
        if prev_cost is not None and abs(prev_cost - cost) < params.epsilon:
            converged = True
            break
        prev_cost = cost

    corr = Correspondences(corr_src, corr_tgt)
    mse = correspondence_mse(transform, corr)
    if corr.count < params.min_correspondences:
        raise FewCorrespondences(
            f"{corr.count} correspondences < minimum {params.min_correspondences}")
    return RegistrationResult(transform, mse, corr, converged, iterations, tuple(history))


def range_filter(cloud: PointCloud, max_range: float) -> PointCloud:
    """Drop returns beyond ``max_range`` from the sensor origin (local frame)."""
    r = np.linalg.norm(cloud.points, axis=1)
    return PointCloud(cloud.points[r <= max_range], cloud.frame)


def scan_to_submap(scan: PointCloud, graph: PoseGraph, predicted_pose: Pose3,
                   params: IcpParams | None = None, submap_radius: float = 15.0,
                   submap_voxel: float = 0.1) -> RegistrationResult:
    """Refine a predicted world pose against nearby key-scans.

    Key-scans within ``submap_radius`` of the prediction are projected into
    the world frame and concatenated; the returned transform is the refined
    world pose of the scan.
    """
    params = params or IcpParams()
    center = predicted_pose.t
    parts = []
    for node in graph.nodes.values():
        if np.linalg.norm(node.pose.t - center) <= submap_radius and len(node.scan) > 0:
            parts.append(node.pose.apply(node.scan.points))
    if not parts:
        raise EmptySubmap(f"no key-scan within {submap_radius} m of prediction")
    submap = voxel_filter(PointCloud(np.vstack(parts), frame="world"), submap_voxel)
    return icp(scan, submap, predicted_pose, params)


def should_create_keynode(last_key_pose: Pose3, current_pose: Pose3,
                          min_translation: float = 1.0,
                          min_rotation: float = math.radians(30.0)) -> bool:
    """Key-node policy: enough rotation or enough translation since the last one."""
    angle, dist = pose_error(last_key_pose, current_pose)
    return angle >= min_rotation or dist >= min_translation
