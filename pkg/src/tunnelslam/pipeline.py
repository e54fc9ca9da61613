"""End-to-end single-robot SLAM driver: front-end over all scans, key-node
policy, degeneracy assessment, the selected loop-closure mode, and back-end
optimization.

Pose propagation comes either from two-stage registration (scan-to-scan,
then scan-to-submap) or straight from the dataset's odometry stream
(``frontend.odometry_source = dataset``), which is how drift experiments
inject a known error level; degeneracy is always assessed from a dedicated
ICP between consecutive key-scans, so the gate sees the scene geometry in
both modes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .backend import add_keynode, optimize
from .config import PipelineConfig
from .degeneracy import DegeneracyReport, assess
from .geometry import PointCloud, Pose3
from .graph import NodeId, PoseGraph
from .loopclose import (CandidateStatus, LoopCandidate, bglc_close_loops,
                        close_loops, loop_log_lines)
from .occupancy import EmptySlice, MapImage, binarize, build_grid
from .prematch import Feature2D
from .registration import (FewCorrespondences, icp, range_filter,
                           salient_filter, should_create_keynode, voxel_filter)
from .sim import Dataset

MODES = ("open_loop", "bglc", "sglc")


@dataclass
class RunSummary:
    mode: str = "open_loop"
    n_scans: int = 0
    n_keynodes: int = 0
    n_degenerate: int = 0
    prematch_candidates: int = 0
    attempted_icp: int = 0
    verified: int = 0
    accepted: int = 0
    registration_failures: int = 0
    wall_time: float = 0.0

    def lines(self) -> list[str]:
        return [f"{k} = {v}" for k, v in vars(self).items()]


@dataclass
class RunResult:
    graph: PoseGraph
    trajectory: list[Pose3]              # per-scan estimates, post-optimization
    images: dict[NodeId, MapImage]
    candidates: list[LoopCandidate]
    summary: RunSummary
    keynode_scan_index: dict[NodeId, int] = field(default_factory=dict)
    scan_anchor: list[tuple[int, Pose3]] = field(default_factory=list)


def _prepare_for_registration(cloud: PointCloud, cfg) -> PointCloud:
    out = range_filter(cloud, cfg.registration_range)
    if cfg.salient_keep < 1.0:
        out = salient_filter(out, cfg.salient_keep)
    return out


def _assess_keypair(prev_scan: PointCloud, scan: PointCloud, rel_guess: Pose3,
                    config: PipelineConfig) -> DegeneracyReport | None:
    """Degeneracy of the new key-scan from a dedicated key-to-key ICP."""
    dcfg = config.degeneracy
    target = range_filter(prev_scan, dcfg.assess_range)
    source = voxel_filter(range_filter(scan, dcfg.assess_range), dcfg.assess_voxel)
    try:
        result = icp(source, target, rel_guess, dcfg.icp_params())
    except FewCorrespondences:
        return None
    try:
        return assess(result.transform, result.correspondences,
                      dcfg.kappa_th, dcfg.hessian_mode)
    except Exception:
        return None


class _Frontend:
    """Incremental pose tracking with key-node bookkeeping."""

    def __init__(self, config: PipelineConfig, robot: int = 0):
        self.config = config
        self.robot = robot
        self.graph = PoseGraph()
        self.images: dict[NodeId, MapImage] = {}
        self.features: dict[NodeId, list[Feature2D]] = {}
        self.keynode_scan_index: dict[NodeId, int] = {}
        self.pose = Pose3.identity()
        self.since_key = Pose3.identity()      # motion since the last key-node
        self.scan_anchor: list[tuple[int, Pose3]] = []  # per scan: (key index, rel pose)
        self.prev_scan: PointCloud | None = None        # consecutive-scan pair for kappa
        self.prev_increment: Pose3 | None = None
        self.last_key_id: NodeId | None = None
        self.summary = RunSummary()
        self._submap_cloud: PointCloud | None = None
        self._submap_center: np.ndarray | None = None

    # -- per-scan update -----------------------------------------------------

    def track(self, index: int, scan: PointCloud, odom_increment: Pose3 | None) -> None:
        cfg = self.config.frontend
        if index == 0:
            self._make_keynode(index, scan, None)
            self.scan_anchor.append((self.last_key_id[1], Pose3.identity()))
            self.prev_scan = scan
            return

        increment = odom_increment or Pose3.identity()
        if cfg.odometry_source == "registration":
            increment = self._register_increment(scan, increment)
        self.pose = self.pose.compose(increment)
        self.since_key = self.since_key.compose(increment)
        self.prev_increment = increment

        if cfg.odometry_source == "registration":
            refined = self._refine_against_submap(scan)
            if refined is not None:
                self.pose = refined
                key_pose = self.graph.nodes[self.last_key_id].pose
                self.since_key = key_pose.inverse().compose(self.pose)

        key_pose = self.graph.nodes[self.last_key_id].pose
        if should_create_keynode(key_pose, self.pose,
                                 cfg.keynode_translation,
                                 math.radians(cfg.keynode_rotation_deg)):
            self._make_keynode(index, scan, self.since_key)
        self.scan_anchor.append((self.last_key_id[1],
                                 self.graph.nodes[self.last_key_id].pose.inverse().compose(self.pose)))
        self.prev_scan = scan

    def _register_increment(self, scan: PointCloud, guess: Pose3) -> Pose3:
        # icp(source=current, target=previous) returns the transform taking
        # current-frame points into the previous frame, i.e. the increment u
        # with pose_i = pose_{i-1} o u.
        cfg = self.config.frontend
        target = self._prev_reg_cloud
        prepared = _prepare_for_registration(scan, cfg)
        source = voxel_filter(prepared, cfg.source_voxel)
        self._prev_reg_cloud = prepared
        try:
            result = icp(source, target, guess, cfg.icp_params())
            return result.transform
        except FewCorrespondences:
            self.summary.registration_failures += 1
            return guess

    def _refine_against_submap(self, scan: PointCloud) -> Pose3 | None:
        cfg = self.config.frontend
        submap = self._submap()
        if submap is None or len(submap) == 0:
            return None
        source = voxel_filter(_prepare_for_registration(scan, cfg), cfg.source_voxel)
        try:
            result = icp(source, submap, self.pose, cfg.icp_params())
        except FewCorrespondences:
            self.summary.registration_failures += 1
            return None
        return result.transform if result.converged else None

    def _submap(self) -> PointCloud | None:
        if self._submap_cloud is not None:
            return self._submap_cloud
        cfg = self.config.frontend
        center = self.pose.t
        parts = [node.pose.apply(voxel_filter(node.scan, cfg.submap_voxel).points)
                 for node in self.graph.nodes.values()
                 if np.linalg.norm(node.pose.t - center) <= cfg.submap_radius
                 and len(node.scan) > 0]
        if not parts:
            return None
        self._submap_cloud = voxel_filter(PointCloud(np.vstack(parts), frame="world"),
                                          cfg.submap_voxel)
        self._submap_center = center
        return self._submap_cloud

    def _make_keynode(self, scan_index: int, scan: PointCloud, odom: Pose3 | None) -> None:
        # degeneracy of the scene at this key-node, from the consecutive
        # scan pair ending here (matching the sensor-rate semantics)
        report = None
        if self.prev_scan is not None and self.prev_increment is not None:
            report = _assess_keypair(self.prev_scan, scan, self.prev_increment, self.config)
        node_id = add_keynode(self.graph, self.robot, self.pose, scan, odom, report,
                              self.config.backend.odom_information())
        self.last_key_id = node_id
        self.since_key = Pose3.identity()
        self.keynode_scan_index[node_id] = scan_index
        self.summary.n_keynodes += 1
        if report is not None and report.degenerate:
            self.summary.n_degenerate += 1
        try:
            self.images[node_id] = binarize(build_grid(
                scan, self.config.occupancy.robot_height,
                self.config.occupancy.ground_tolerance))
        except EmptySlice:
            pass
        self._submap_cloud = None        # keyframe set changed


def run_slam(dataset: Dataset, config: PipelineConfig | None = None,
             mode: str = "sglc", robot: int = 0) -> RunResult:
    """Run the full pipeline over one robot's dataset; returns the optimized
    graph, per-scan trajectory, and loop-closure bookkeeping."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    config = (config or PipelineConfig()).with_loop_params()
    t0 = time.perf_counter()

    front = _Frontend(config, robot)
    front.summary.mode = mode
    front.summary.n_scans = len(dataset.scans)
    front._prev_reg_cloud = _prepare_for_registration(dataset.scans[0], config.frontend)

    all_candidates: list[LoopCandidate] = []
    keys_done: set[NodeId] = set()
    for index, scan in enumerate(dataset.scans):
        odom = dataset.odometry[index - 1] if index > 0 else None
        front.track(index, scan, odom)
        new_key = front.last_key_id not in keys_done
        if new_key and mode != "open_loop":
            keys_done.add(front.last_key_id)
            found = _close_for_key(front, front.last_key_id, mode, config)
            all_candidates.extend(found)
            if any(c.status is CandidateStatus.ACCEPTED for c in found):
                optimize(front.graph, config.backend.optimize_params())
                front._submap_cloud = None
                # re-anchor the running estimate on the optimized key pose
                key_pose = front.graph.nodes[front.last_key_id].pose
                front.pose = key_pose.compose(front.since_key)
        elif new_key:
            keys_done.add(front.last_key_id)

    # final optimization pass (no-op without loops)
    if front.graph.loop_edges():
        optimize(front.graph, config.backend.optimize_params())

    trajectory = []
    for key_index, rel in front.scan_anchor:
        key_pose = front.graph.nodes[(robot, key_index)].pose
        trajectory.append(key_pose.compose(rel))

    front.summary.wall_time = time.perf_counter() - t0
    front.summary.accepted = sum(1 for c in all_candidates
                                 if c.status is CandidateStatus.ACCEPTED)
    front.summary.verified += sum(1 for c in all_candidates
                                  if c.status in (CandidateStatus.VERIFIED,
                                                  CandidateStatus.ACCEPTED,
                                                  CandidateStatus.REJECTED_OUTLIER))
    return RunResult(front.graph, trajectory, front.images, all_candidates,
                     front.summary, front.keynode_scan_index, front.scan_anchor)


def run_loop_phase(front: RunResult, config: PipelineConfig | None = None,
                   mode: str = "sglc", robot: int = 0) -> RunResult:
    """Batch loop closure over an existing front-end result.

    This is the asynchronous-worker variant: the front-end graph is taken as
    given (e.g. from an open-loop run), each key-node is queried in order,
    and one optimization runs at the end. The input result is not modified.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    config = (config or PipelineConfig()).with_loop_params()
    t0 = time.perf_counter()
    graph = front.graph.copy()
    summary = RunSummary(mode=mode, n_scans=front.summary.n_scans,
                         n_keynodes=front.summary.n_keynodes,
                         n_degenerate=front.summary.n_degenerate)
    features: dict[NodeId, list[Feature2D]] = {}
    candidates: list[LoopCandidate] = []
    for nid in sorted(n for n in graph.nodes if n[0] == robot):
        if mode == "sglc":
            found = close_loops(graph, nid, config.loop, front.images, features,
                                config.pcm,
                                loop_information=config.backend.loop_information())
            summary.prematch_candidates += len(found)
        elif mode == "bglc":
            found = bglc_close_loops(graph, nid, config.loop, config.pcm,
                                     loop_information=config.backend.loop_information())
        else:
            found = []
        summary.attempted_icp += sum(1 for c in found
                                     if c.status is not CandidateStatus.PREMATCHED)
        candidates.extend(found)
    if graph.loop_edges():
        optimize(graph, config.backend.optimize_params())
    trajectory = [graph.nodes[(robot, key_index)].pose.compose(rel)
                  for key_index, rel in front.scan_anchor]
    summary.wall_time = time.perf_counter() - t0
    summary.accepted = sum(1 for c in candidates if c.status is CandidateStatus.ACCEPTED)
    summary.verified = sum(1 for c in candidates
                           if c.status in (CandidateStatus.VERIFIED,
                                           CandidateStatus.ACCEPTED,
                                           CandidateStatus.REJECTED_OUTLIER))
    return RunResult(graph, trajectory, front.images, candidates, summary,
                     front.keynode_scan_index, front.scan_anchor)


def _close_for_key(front: _Frontend, key: NodeId, mode: str,
                   config: PipelineConfig) -> list[LoopCandidate]:
    if mode == "sglc":
        found = close_loops(front.graph, key, config.loop, front.images,
                            front.features, config.pcm,
                            loop_information=config.backend.loop_information())
        front.summary.prematch_candidates += len(found)
    else:
        found = bglc_close_loops(front.graph, key, config.loop, config.pcm,
                                 loop_information=config.backend.loop_information())
    front.summary.attempted_icp += sum(1 for c in found
                                       if c.status is not CandidateStatus.PREMATCHED)
    return found


# ---------------------------------------------------------------------------
# run output files
# ---------------------------------------------------------------------------

def _fmt_pose(p: Pose3) -> str:
    q, t = p.q, p.t
    return " ".join(repr(float(v)) for v in (t[0], t[1], t[2], q[1], q[2], q[3], q[0]))


def write_run_outputs(out_dir, result: RunResult, config: PipelineConfig) -> None:
    from pathlib import Path

    from .config import config_to_text
    from .graph import save_graph
    from .multirobot import export_global_map

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.txt").write_text(
        "\n".join(_fmt_pose(p) for p in result.trajectory) + "\n")
    save_graph(out / "graph.g2o", result.graph)
    cloud = export_global_map(result.graph, voxel=0.1)
    (out / "map.xyz").write_text(
        "\n".join(" ".join(repr(float(v)) for v in row) for row in cloud.points)
        + ("\n" if len(cloud) else ""))
    (out / "loops.txt").write_text(
        "\n".join(loop_log_lines(result.candidates)) + ("\n" if result.candidates else ""))
    deg_lines = [f"{nid[0]}:{nid[1]} {node.log_kappa!r} {int(node.degenerate)}"
                 for nid, node in sorted(result.graph.nodes.items())]
    (out / "degeneracy.txt").write_text("\n".join(deg_lines) + "\n")
    key_lines = [f"{nid[0]} {nid[1]} {scan_idx}"
                 for nid, scan_idx in sorted(result.keynode_scan_index.items())]
    (out / "keynodes.txt").write_text("\n".join(key_lines) + "\n")
    (out / "summary.txt").write_text("\n".join(result.summary.lines()) + "\n")
    (out / "effective_config").write_text(config_to_text(config))
