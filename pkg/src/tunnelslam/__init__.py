"""Degeneracy-aware lidar SLAM with saliency-based loop closing.

The pipeline: lidar scans are filtered and registered (scan-to-scan, then
scan-to-submap) into a reduced pose graph of key-nodes; every registration
is eigen-analyzed for geometric degeneracy; loop closures are nominated by
pose-invariant matching of bird's-eye occupancy map images, verified by
seeded ICP, screened by pairwise consistency, and folded in by nonlinear
pose-graph optimization. A synthetic tunnel-world simulator makes every
stage testable at desk scale.
"""

from .geometry import Pose3, PointCloud, pose_error
from .graph import EdgeKind, GraphEdge, KeyNode, NodeId, PoseGraph

__all__ = [
    "Pose3", "PointCloud", "pose_error",
    "EdgeKind", "GraphEdge", "KeyNode", "NodeId", "PoseGraph",
]

__version__ = "0.1.0"
