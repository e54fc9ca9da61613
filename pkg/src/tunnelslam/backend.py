"""Pose-graph back-end: key-node insertion, PCM outlier rejection, and
Levenberg-Marquardt optimization over SE(3).

Edge residuals are on-manifold: ``r = log((x_i o u)^-1 o x_j)`` weighted by
the edge information matrix; coordinate subtraction of rotations is
ill-defined, the log-map realizes the intended Mahalanobis mismatch.
Covariances are chained through SE(3) adjoints so long odometry cycles get
an honestly inflated gate (yaw noise leveraged over the traveled path).

Mutation happens under a single-writer contract: only one owner calls
add_keynode/optimize on a given graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .degeneracy import DegeneracyReport
from .geometry import (PointCloud, Pose3, se3_adjoint, se3_exp, se3_log, skew)
from .graph import EdgeKind, GraphEdge, KeyNode, NodeId, PoseGraph


class NotConnected(RuntimeError):
    """A graph component has no anchor and no path to one."""


@dataclass(frozen=True)
class PcmParams:
    gamma: float = 12.59                # chi-square 95th percentile, 6 dof
    odom_gamma: float = 12.59           # single-loop odometry-cycle gate
    max_exact_clique: int = 60          # branch-and-bound budget


@dataclass(frozen=True)
class OptimizeParams:
    max_iterations: int = 100
    cost_epsilon: float = 1e-9
    initial_lambda: float = 1e-6
    lambda_up: float = 10.0
    lambda_down: float = 3.0
    max_retries: int = 12


def default_information(sigma_trans: float = 0.1, sigma_rot: float = 0.05) -> np.ndarray:
    """Diagonal information from per-axis sigmas (defaults: 0.1 m, 0.05 rad)."""
    d = [1.0 / sigma_trans ** 2] * 3 + [1.0 / sigma_rot ** 2] * 3
    return np.diag(d)


# ---------------------------------------------------------------------------
# key-node insertion
# ---------------------------------------------------------------------------

def add_keynode(graph: PoseGraph, robot: int, pose: Pose3, scan: PointCloud,
                odom_transform: Pose3 | None = None,
                degeneracy_report: DegeneracyReport | None = None,
                information: np.ndarray | None = None) -> NodeId:
    """Append the next key-node of ``robot``; attach the odometry edge unless
    this is the robot's first node."""
    indices = [i for r, i in graph.nodes if r == robot]
    index = max(indices) + 1 if indices else 0
    node_id = (robot, index)
    log_kappa = degeneracy_report.log_kappa if degeneracy_report else 0.0
    degenerate = degeneracy_report.degenerate if degeneracy_report else False
    graph.add_node(KeyNode(node_id, pose, scan, log_kappa, degenerate))
    if index > 0:
        if odom_transform is None:
            raise ValueError("non-first key-node needs an odometry transform")
        info = default_information() if information is None else information
        graph.add_edge(GraphEdge((robot, index - 1), node_id, EdgeKind.ODOMETRY,
                                 odom_transform, info))
    return node_id


# ---------------------------------------------------------------------------
# covariance-aware pose chains
# ---------------------------------------------------------------------------

def _compose_cov(pose_a: Pose3, cov_a: np.ndarray,
                 pose_b: Pose3, cov_b: np.ndarray) -> tuple[Pose3, np.ndarray]:
    """Compose two noisy transforms; covariances are right-perturbations."""
    ad = se3_adjoint(pose_b.inverse())
    return pose_a.compose(pose_b), ad @ cov_a @ ad.T + cov_b


def _invert_cov(pose: Pose3, cov: np.ndarray) -> tuple[Pose3, np.ndarray]:
    ad = se3_adjoint(pose)
    return pose.inverse(), ad @ cov @ ad.T


def odometry_chain(graph: PoseGraph, from_id: NodeId, to_id: NodeId) -> tuple[Pose3, np.ndarray]:
    """Composed odometry transform and covariance between two nodes of one robot."""
    if from_id[0] != to_id[0]:
        raise ValueError("odometry chains link nodes of a single robot")
    robot = from_id[0]
    i, j = from_id[1], to_id[1]
    if i == j:
        return Pose3.identity(), np.zeros((6, 6))
    edges = {e.from_id[1]: e for e in graph.odometry_edges(robot)}
    lo, hi = (i, j) if i < j else (j, i)
    pose, cov = Pose3.identity(), np.zeros((6, 6))
    for k in range(lo, hi):
        e = edges.get(k)
        if e is None:
            raise NotConnected(f"odometry chain of robot {robot} broken at index {k}")
        pose, cov = _compose_cov(pose, cov, e.transform, np.linalg.inv(e.information))
    if i > j:
        pose, cov = _invert_cov(pose, cov)
    return pose, cov


# ---------------------------------------------------------------------------
# PCM outlier rejection
# ---------------------------------------------------------------------------

def _mahalanobis(residual: np.ndarray, cov: np.ndarray) -> float:
    # tiny jitter keeps zero-noise cycles well-posed
    return float(residual @ np.linalg.solve(cov + 1e-12 * np.eye(6), residual))


def _anchored_chain(graph: PoseGraph, anchors: dict[int, Pose3] | None,
                    from_id: NodeId, to_id: NodeId) -> tuple[Pose3, np.ndarray] | None:
    """Expected between(from, to) by odometry, through anchors across robots."""
    if from_id[0] == to_id[0]:
        return odometry_chain(graph, from_id, to_id)
    if not anchors or from_id[0] not in anchors or to_id[0] not in anchors:
        return None
    ka, cov_a = odometry_chain(graph, (from_id[0], 0), from_id)
    kb, cov_b = odometry_chain(graph, (to_id[0], 0), to_id)
    bridge = anchors[from_id[0]].between(anchors[to_id[0]])
    pose, cov = _invert_cov(ka, cov_a)
    pose, cov = _compose_cov(pose, cov, bridge, np.zeros((6, 6)))
    return _compose_cov(pose, cov, kb, cov_b)


def odometry_consistent(graph: PoseGraph, edge: GraphEdge, params: PcmParams,
                        anchors: dict[int, Pose3] | None = None) -> bool:
    """Does the loop edge compose to identity around its odometry cycle?"""
    chain = _anchored_chain(graph, anchors, edge.from_id, edge.to_id)
    if chain is None:
        return True                      # no cycle available to check against
    expected, cov = chain
    residual = se3_log(expected.between(edge.transform))
    total = cov + np.linalg.inv(edge.information)
    return _mahalanobis(residual, total) <= params.odom_gamma


def pairwise_consistent(graph: PoseGraph, e1: GraphEdge, e2: GraphEdge,
                        params: PcmParams, anchors: dict[int, Pose3] | None = None) -> bool:
    """Do two loop edges close a mutual cycle through the odometry chains?"""
    a1, b1 = e1.from_id, e1.to_id
    u1, cov1 = e1.transform, np.linalg.inv(e1.information)
    # orient e2 so its endpoints pair with e1's robots where possible
    orientations = [(e2.from_id, e2.to_id, e2.transform, np.linalg.inv(e2.information))]
    inv_t, inv_c = _invert_cov(e2.transform, np.linalg.inv(e2.information))
    orientations.append((e2.to_id, e2.from_id, inv_t, inv_c))
    for a2, b2, u2, cov2 in orientations:
        if a2[0] != a1[0] or b2[0] != b1[0]:
            continue
        chain_a = _anchored_chain(graph, anchors, a1, a2)
        chain_b = _anchored_chain(graph, anchors, b2, b1)
        if chain_a is None or chain_b is None:
            continue
        pose, cov = _compose_cov(*chain_a, u2, cov2)
        pose, cov = _compose_cov(pose, cov, *chain_b)
        residual = se3_log(pose.between(u1))
        return _mahalanobis(residual, cov + cov1) <= params.gamma
    return True                          # incomparable pairs cannot veto each other


def _max_clique(adjacency: list[set[int]], limit: int) -> list[int]:
    n = len(adjacency)
    if n == 0:
        return []
    if n > limit:
        return _greedy_clique(adjacency)
    best: list[int] = []

    def bron_kerbosch(r: set[int], p: set[int], x: set[int]) -> None:
        nonlocal best
        if not p and not x:
            if len(r) > len(best) or (len(r) == len(best) and sorted(r) < sorted(best)):
                best = sorted(r)
            return
        if len(r) + len(p) <= len(best):
            return                       # bound: cannot beat current best
        pivot = max(p | x, key=lambda u: len(p & adjacency[u]))
        for v in sorted(p - adjacency[pivot]):
            bron_kerbosch(r | {v}, p & adjacency[v], x & adjacency[v])
            p = p - {v}
            x = x | {v}

    bron_kerbosch(set(), set(range(n)), set())
    return best


def _greedy_clique(adjacency: list[set[int]]) -> list[int]:
    order = sorted(range(len(adjacency)), key=lambda v: (-len(adjacency[v]), v))
    clique: list[int] = []
    for v in order:
        if all(v in adjacency[u] for u in clique):
            clique.append(v)
    return sorted(clique)


def pcm_filter(graph: PoseGraph, proposals: list[GraphEdge], params: PcmParams | None = None,
               anchors: dict[int, Pose3] | None = None) -> tuple[list[int], list[int]]:
    """Select the maximal mutually consistent subset of proposed loop edges.

    Each proposal must (1) compose to identity around its own odometry cycle
    within ``odom_gamma``, (2) be pairwise consistent with every loop edge
    already in the graph, and (3) belong to the maximum clique of the
    pairwise-consistency graph among surviving proposals. Returns (accepted,
    rejected) index lists into ``proposals``.
    """
    params = params or PcmParams()
    if not proposals:
        return [], []
    existing = graph.loop_edges()
    survivors = []
    for idx, edge in enumerate(proposals):
        if not odometry_consistent(graph, edge, params, anchors):
            continue
        if all(pairwise_consistent(graph, edge, prior, params, anchors) for prior in existing):
            survivors.append(idx)

    adjacency = [set() for _ in survivors]
    for (i, idx_i), (j, idx_j) in combinations(enumerate(survivors), 2):
        if pairwise_consistent(graph, proposals[idx_i], proposals[idx_j], params, anchors):
            adjacency[i].add(j)
            adjacency[j].add(i)
    clique = _max_clique(adjacency, params.max_exact_clique)
    accepted = sorted(survivors[i] for i in clique)
    rejected = [i for i in range(len(proposals)) if i not in accepted]
    return accepted, rejected


# ---------------------------------------------------------------------------
# Levenberg-Marquardt pose-graph optimization
# ---------------------------------------------------------------------------

def _se3_ad(xi: np.ndarray) -> np.ndarray:
    rho, phi = xi[:3], xi[3:]
    out = np.zeros((6, 6))
    out[:3, :3] = skew(phi)
    out[:3, 3:] = skew(rho)
    out[3:, 3:] = skew(phi)
    return out


def _edge_residual(pose_i: Pose3, pose_j: Pose3, edge: GraphEdge) -> np.ndarray:
    return se3_log(pose_i.compose(edge.transform).between(pose_j))


def graph_cost(graph: PoseGraph) -> float:
    total = 0.0
    for e in graph.edges:
        r = _edge_residual(graph.nodes[e.from_id].pose, graph.nodes[e.to_id].pose, e)
        total += float(r @ e.information @ r)
    return total


def _check_anchored(graph: PoseGraph, fixed: set[NodeId]) -> None:
    parent: dict[NodeId, NodeId] = {nid: nid for nid in graph.nodes}

    def find(x: NodeId) -> NodeId:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in graph.edges:
        ra, rb = find(e.from_id), find(e.to_id)
        if ra != rb:
            parent[ra] = rb
    anchored_roots = {find(f) for f in fixed}
    for nid in graph.nodes:
        if find(nid) not in anchored_roots:
            raise NotConnected(f"node {nid} has no path to an anchored node")


def optimize(graph: PoseGraph, params: OptimizeParams | None = None,
             fixed: set[NodeId] | None = None) -> tuple[dict[NodeId, Pose3], float]:
    """Minimize the weighted on-manifold residual sum; updates poses in place.

    ``fixed`` nodes hold the gauge (default: the first node of the first
    robot). Damped steps are only accepted when they reduce the cost, so the
    cost sequence is non-increasing. Returns (optimized poses, final cost).
    """
    params = params or OptimizeParams()
    if not graph.nodes:
        return {}, 0.0
    if fixed is None:
        first_robot = graph.robots()[0]
        fixed = {(first_robot, min(i for r, i in graph.nodes if r == first_robot))}
    _check_anchored(graph, fixed)

    free = [nid for nid in sorted(graph.nodes) if nid not in fixed]
    index = {nid: k for k, nid in enumerate(free)}
    poses = {nid: n.pose for nid, n in graph.nodes.items()}
    dim = 6 * len(free)
    if dim == 0 or not graph.edges:
        cost = graph_cost(graph)
        return dict(poses), cost

    def total_cost(p: dict[NodeId, Pose3]) -> float:
        c = 0.0
        for e in graph.edges:
            r = _edge_residual(p[e.from_id], p[e.to_id], e)
            c += float(r @ e.information @ r)
        return c

    cost = total_cost(poses)
    lam = params.initial_lambda
    for _ in range(params.max_iterations):
        H = np.zeros((dim, dim))
        b = np.zeros(dim)
        for e in graph.edges:
            pi, pj = poses[e.from_id], poses[e.to_id]
            r = _edge_residual(pi, pj, e)
            jr_inv = np.eye(6) + 0.5 * _se3_ad(r)      # right-Jacobian inverse, 1st order
            jl_inv = np.eye(6) - 0.5 * _se3_ad(r)
            Jj = jr_inv
            Ji = -jl_inv @ se3_adjoint(e.transform.inverse())
            for nid_a, Ja in ((e.from_id, Ji), (e.to_id, Jj)):
                if nid_a in fixed:
                    continue
                ka = index[nid_a]
                b[6 * ka:6 * ka + 6] += Ja.T @ e.information @ r
                for nid_b, Jb in ((e.from_id, Ji), (e.to_id, Jj)):
                    if nid_b in fixed:
                        continue
                    kb = index[nid_b]
                    H[6 * ka:6 * ka + 6, 6 * kb:6 * kb + 6] += Ja.T @ e.information @ Jb

        improved = False
        diag = np.diag(np.maximum(np.diag(H), 1e-12))
        for _ in range(params.max_retries):
            try:
                delta = np.linalg.solve(H + lam * diag, -b)
            except np.linalg.LinAlgError:
                lam *= params.lambda_up
                continue
            trial = dict(poses)
            for nid, k in index.items():
                trial[nid] = poses[nid].compose(se3_exp(delta[6 * k:6 * k + 6]))
            trial_cost = total_cost(trial)
            if trial_cost < cost:
                poses = trial
                lam = max(lam / params.lambda_down, 1e-12)
                improved = True
                break
            lam *= params.lambda_up
        if not improved:
            break
        if abs(cost - trial_cost) < params.cost_epsilon:
            cost = trial_cost
            break
        cost = trial_cost

    for nid, pose in poses.items():
        graph.set_pose(nid, pose)
    return poses, total_cost(poses)
