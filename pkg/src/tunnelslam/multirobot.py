"""Base-station merge: fuse per-robot pose graphs via inter-robot loop
closures, assuming known initial poses.

Anchors are hard constraints (fixed variables, not soft priors): each
robot's first node is pinned at its given initial pose through the final
optimization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .backend import OptimizeParams, PcmParams, optimize
from .geometry import PointCloud, Pose3
from .graph import EdgeKind, NodeId, PoseGraph, merge_disjoint
from .loopclose import LoopCandidate, LoopParams, close_loops
from .occupancy import MapImage, binarize, build_grid
from .prematch import Feature2D
from .registration import voxel_filter


class NoOverlap(UserWarning):
    """Zero inter-robot loop edges survived; graphs stay anchored by priors only."""


@dataclass
class MergeResult:
    graph: PoseGraph
    candidates: list[LoopCandidate]
    inter_edges: int
    final_cost: float


def _reanchor(graph: PoseGraph, robot: int, anchor: Pose3) -> None:
    """Rigidly move a robot's sub-graph so its first node sits at the anchor."""
    first = min(i for r, i in graph.nodes if r == robot)
    correction = anchor.compose(graph.nodes[(robot, first)].pose.inverse())
    for nid in list(graph.nodes):
        if nid[0] == robot:
            graph.set_pose(nid, correction.compose(graph.nodes[nid].pose))


def build_images(graph: PoseGraph, robot_height: float = 0.8,
                 ground_tolerance: float = 0.15) -> dict[NodeId, MapImage]:
    """Binary map images for every node whose key-scan has a usable slice."""
    images: dict[NodeId, MapImage] = {}
    for nid, node in graph.nodes.items():
        if len(node.scan) == 0:
            continue
        try:
            images[nid] = binarize(build_grid(node.scan, robot_height, ground_tolerance))
        except Exception:
            continue
    return images


def merge(graphs: list[PoseGraph], initial_poses: dict[int, Pose3],
          params: LoopParams | None = None, pcm: PcmParams | None = None,
          images: dict[NodeId, MapImage] | None = None,
          loop_information: np.ndarray | None = None,
          optimize_params: OptimizeParams | None = None) -> MergeResult:
    """Union per-robot graphs, search inter-robot loop closures with the
    pose-invariant pipeline, reject outliers jointly, and optimize globally.

    Emits a NoOverlap warning (not an error) when no inter-robot edge
    survives; the union graph is still returned, anchored by the priors.
    """
    params = params or LoopParams()
    merged = merge_disjoint([g.copy() for g in graphs])
    for robot in merged.robots():
        if robot not in initial_poses:
            raise ValueError(f"missing initial pose for robot {robot}")
        _reanchor(merged, robot, initial_poses[robot])

    if images is None:
        images = build_images(merged)
    features: dict[NodeId, list[Feature2D]] = {}

    all_candidates: list[LoopCandidate] = []
    for nid in sorted(merged.nodes):
        found = close_loops(merged, nid, params, images, features, pcm,
                            anchors=initial_poses, loop_information=loop_information,
                            robots="other")
        all_candidates.extend(found)

    fixed = {(r, min(i for rr, i in merged.nodes if rr == r)) for r in merged.robots()}
    _, cost = optimize(merged, optimize_params, fixed=fixed)

    inter = sum(1 for e in merged.edges if e.kind is EdgeKind.INTER_LOOP)
    if inter == 0 and len(merged.robots()) > 1:
        warnings.warn("no inter-robot loop closures found; graphs joined by anchors only",
                      NoOverlap)
    return MergeResult(merged, all_candidates, inter, cost)


def export_global_map(graph: PoseGraph, voxel: float = 0.1) -> PointCloud:
    """Project every key-scan through its node pose into the world frame and
    fuse with a voxel filter."""
    parts = [node.pose.apply(node.scan.points)
             for node in graph.nodes.values() if len(node.scan) > 0]
    if not parts:
        return PointCloud.empty(frame="world")
    cloud = PointCloud(np.vstack(parts), frame="world")
    return voxel_filter(cloud, voxel) if voxel > 0 else cloud
