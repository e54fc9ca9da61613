"""Loop-closure search: the saliency-gated global pipeline (SGLC) and the
fixed-radius baseline (BGLC).

SGLC pre-matches the query's map image against every historic
non-degenerate node's image regardless of pose estimates, so candidate
recall survives arbitrary odometric drift; BGLC gates candidates on
estimated positions and goes blind once drift exceeds its radius.
Verification seeds ICP with the yaw extracted from the planar pre-match
transform and zero translation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping

import numpy as np

from .backend import PcmParams, default_information, pcm_filter
from .geometry import Pose3, PointCloud
from .graph import EdgeKind, GraphEdge, NodeId, PoseGraph
from .occupancy import MapImage
from .prematch import (Feature2D, MatchReport, PrematchParams, detect_features,
                       pair_seed, prematch, transform_yaw)
from .registration import FewCorrespondences, IcpParams, icp, voxel_filter


class CandidateStatus(Enum):
    PREMATCHED = "prematched"
    VERIFIED = "verified"
    REJECTED_GEOMETRIC = "rejected_geometric"
    REJECTED_OUTLIER = "rejected_outlier"
    ACCEPTED = "accepted"


@dataclass(frozen=True)
class LoopCandidate:
    """One potential loop closure between ``from_id`` (query) and ``to_id``.

    The edge transform maps to-frame points into the from-frame, i.e.
    ``pose(to) = pose(from) o verified_transform``.
    """

    from_id: NodeId
    to_id: NodeId
    report: MatchReport | None          # None for BGLC candidates (no pre-match)
    verified_transform: Pose3 | None = None
    verification_mse: float | None = None
    status: CandidateStatus = CandidateStatus.PREMATCHED
    yaw_seed: float = 0.0


@dataclass(frozen=True)
class LoopParams:
    search_radius: float = 10.0          # BGLC radius D_r, meters
    exclusion: int = 10                  # most-recent key-nodes excluded
    max_verifications: int = 5           # per query, highest-Psi first
    verification_mse_max: float = 0.005  # m^2, for the plane-projected cost below
    gate_degenerate: bool = True         # SGLC degeneracy gate
    icp_voxel: float = 0.1               # verification clouds are voxel-filtered
    # verification is coarse-to-fine: a wide correspondence gate absorbs the
    # node-to-node offset of a true revisit (up to the key-node spacing),
    # then a tight refinement supplies the alignment error that is scored
    prematch: PrematchParams = field(default_factory=PrematchParams)
    icp: IcpParams = field(default_factory=lambda: IcpParams(
        max_correspondence_distance=1.5, cost="plane",
        max_iterations=150, epsilon=3e-7))
    refine_distance: float = 0.4         # tight gate for the scored refinement


def _historic_ids(graph: PoseGraph, query: NodeId, exclusion: int,
                  robots: str = "all") -> list[NodeId]:
    """Nodes eligible as loop partners: same-robot nodes older than the
    exclusion window, and (optionally) every node of other robots."""
    rq, iq = query
    out = []
    for nid in sorted(graph.nodes):
        r, i = nid
        if r == rq:
            if robots != "other" and i <= iq - exclusion - 1:
                out.append(nid)
        elif robots != "same":
            out.append(nid)
    return out


def bglc_candidates(graph: PoseGraph, query: NodeId, radius: float = 10.0,
                    exclusion: int = 10, robots: str = "all") -> list[NodeId]:
    """Baseline search: historic nodes whose estimated position lies within
    ``radius`` of the query's estimated position."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = graph.nodes[query].pose.t
    out = []
    for nid in _historic_ids(graph, query, exclusion, robots):
        if np.linalg.norm(graph.nodes[nid].pose.t - center) < radius:
            out.append(nid)
    return out


def sglc_candidates(graph: PoseGraph, query: NodeId, params: LoopParams,
                    images: Mapping[NodeId, MapImage],
                    features: dict[NodeId, list[Feature2D]] | None = None,
                    robots: str = "all") -> list[LoopCandidate]:
    """Pose-invariant search: pre-match the query's map image against every
    historic non-degenerate node's image; accepted reports become
    Prematched candidates sorted by Psi descending.

    A degenerate query returns no candidates (degeneracy gate).
    """
    node = graph.nodes[query]
    if params.gate_degenerate and node.degenerate:
        return []
    if query not in images:
        return []

    def feats(nid: NodeId) -> list[Feature2D]:
        if features is None:
            return detect_features(images[nid], params.prematch)
        if nid not in features:
            features[nid] = detect_features(images[nid], params.prematch)
        return features[nid]

    out = []
    fq = feats(query)
    for nid in _historic_ids(graph, query, params.exclusion, robots):
        other = graph.nodes[nid]
        if params.gate_degenerate and other.degenerate:
            continue
        if nid not in images:
            continue
        report = prematch(images[query], images[nid], params.prematch,
                          features_a=fq, features_b=feats(nid),
                          seed=pair_seed(query, nid))
        if report.accepted:
            out.append(LoopCandidate(query, nid, report,
                                     yaw_seed=-transform_yaw(report.transform_2d)))
    out.sort(key=lambda c: (-c.report.psi, c.to_id))
    return out


def geometric_verify(candidate: LoopCandidate, scans: tuple[PointCloud, PointCloud],
                     params: LoopParams) -> LoopCandidate:
    """Verify a Prematched candidate by seeded ICP over the two key-scans.

    ``scans`` are (scan of from_id, scan of to_id). The seed is a yaw-only
    rotation from the pre-match transform with zero translation; the
    homography's translation is logged upstream but deliberately unused.
    """
    if candidate.status is not CandidateStatus.PREMATCHED:
        raise ValueError(f"cannot verify candidate in status {candidate.status}")
    scan_from, scan_to = scans
    guess = Pose3.from_yaw(candidate.yaw_seed)
    try:
        src = voxel_filter(scan_to, params.icp_voxel) if params.icp_voxel > 0 else scan_to
        tgt = voxel_filter(scan_from, params.icp_voxel) if params.icp_voxel > 0 else scan_from
        coarse = icp(src, tgt, guess, params.icp)
        fine_params = replace(params.icp,
                              max_correspondence_distance=params.refine_distance,
                              max_iterations=60, epsilon=1e-8)
        result = icp(src, tgt, coarse.transform, fine_params)
    except FewCorrespondences:
        return replace(candidate, status=CandidateStatus.REJECTED_GEOMETRIC)
    if result.converged and result.mse <= params.verification_mse_max:
        return replace(candidate, status=CandidateStatus.VERIFIED,
                       verified_transform=result.transform,
                       verification_mse=result.mse)
    return replace(candidate, status=CandidateStatus.REJECTED_GEOMETRIC,
                   verification_mse=result.mse)


def close_loops(graph: PoseGraph, query: NodeId, params: LoopParams,
                images: Mapping[NodeId, MapImage],
                features: dict[NodeId, list[Feature2D]] | None = None,
                pcm: PcmParams | None = None,
                anchors: dict[int, Pose3] | None = None,
                loop_information: np.ndarray | None = None,
                robots: str = "all") -> list[LoopCandidate]:
    """Full SGLC pass for one query node.

    Pre-match candidates are verified highest-Psi first (up to
    ``max_verifications``), survivors go through PCM jointly, and accepted
    edges are added to the graph. Returns every candidate with its final
    status; candidates beyond the verification budget stay Prematched.
    """
    candidates = sglc_candidates(graph, query, params, images, features, robots)
    info = default_information() if loop_information is None else loop_information
    processed: list[LoopCandidate] = []
    verified: list[LoopCandidate] = []
    for k, cand in enumerate(candidates):
        if k >= params.max_verifications:
            processed.append(cand)
            continue
        cand = geometric_verify(
            cand, (graph.nodes[cand.from_id].scan, graph.nodes[cand.to_id].scan), params)
        if cand.status is CandidateStatus.VERIFIED:
            verified.append(cand)
        else:
            processed.append(cand)
    processed.extend(_filter_and_insert(graph, verified, pcm, anchors, info))
    processed.sort(key=lambda c: c.to_id)
    return processed


def _filter_and_insert(graph: PoseGraph, verified: list[LoopCandidate],
                       pcm: PcmParams | None, anchors: dict[int, Pose3] | None,
                       info: np.ndarray) -> list[LoopCandidate]:
    """PCM over verified candidates; accepted ones become graph edges."""
    if not verified:
        return []
    proposals = []
    for cand in verified:
        kind = (EdgeKind.INTRA_LOOP if cand.from_id[0] == cand.to_id[0]
                else EdgeKind.INTER_LOOP)
        proposals.append(GraphEdge(cand.from_id, cand.to_id, kind,
                                   cand.verified_transform, info))
    accepted_idx, _ = pcm_filter(graph, proposals, pcm, anchors)
    out = []
    for i, cand in enumerate(verified):
        if i in accepted_idx:
            graph.add_edge(proposals[i])
            out.append(replace(cand, status=CandidateStatus.ACCEPTED))
        else:
            out.append(replace(cand, status=CandidateStatus.REJECTED_OUTLIER))
    return out


def bglc_close_loops(graph: PoseGraph, query: NodeId, params: LoopParams,
                     pcm: PcmParams | None = None,
                     anchors: dict[int, Pose3] | None = None,
                     loop_information: np.ndarray | None = None,
                     robots: str = "all") -> list[LoopCandidate]:
    """Baseline pass: verify every radius candidate with identity-yaw seeding
    (no pre-match screen), then PCM. Mirrors close_loops for comparison runs."""
    info = default_information() if loop_information is None else loop_information
    ids = bglc_candidates(graph, query, params.search_radius, params.exclusion, robots)
    processed: list[LoopCandidate] = []
    verified: list[LoopCandidate] = []
    for nid in ids:
        cand = LoopCandidate(query, nid, report=None)
        cand = geometric_verify(
            cand, (graph.nodes[cand.from_id].scan, graph.nodes[cand.to_id].scan), params)
        if cand.status is CandidateStatus.VERIFIED:
            verified.append(cand)
        else:
            processed.append(cand)
    processed.extend(_filter_and_insert(graph, verified, pcm, anchors, info))
    processed.sort(key=lambda c: c.to_id)
    return processed


def loop_log_lines(candidates: list[LoopCandidate]) -> list[str]:
    """One line per candidate: from to psi status mse yaw_seed_deg."""
    lines = []
    for c in candidates:
        psi = c.report.psi if c.report is not None else 0.0
        mse = c.verification_mse if c.verification_mse is not None else math.nan
        lines.append(f"{c.from_id[0]}:{c.from_id[1]} {c.to_id[0]}:{c.to_id[1]} "
                     f"{psi:.6f} {c.status.value} {mse:.6e} {math.degrees(c.yaw_seed):.3f}")
    return lines
