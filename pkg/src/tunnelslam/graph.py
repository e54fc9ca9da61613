"""Pose-graph containers: key-nodes, typed edges, and g2o-style text I/O.

Node ids are ``(robot, index)`` pairs so that multi-robot merging never
renumbers anything. Mutation is expected to go through the back-end under a
single-writer discipline; readers work on snapshots (``PoseGraph.copy``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable

import numpy as np

from .geometry import PointCloud, Pose3

NodeId = tuple[int, int]  # (robot, index)

# g2o files want integer vertex ids; fold (robot, index) into one int.
_G2O_ROBOT_STRIDE = 1_000_000


class EdgeKind(Enum):
    ODOMETRY = "odometry"
    INTRA_LOOP = "intra_loop"
    INTER_LOOP = "inter_loop"


@dataclass(frozen=True)
class KeyNode:
    """A reduced-graph node: pose estimate, its key-scan, and degeneracy state."""

    node_id: NodeId
    pose: Pose3
    scan: PointCloud
    log_kappa: float = 0.0
    degenerate: bool = False


@dataclass(frozen=True)
class GraphEdge:
    from_id: NodeId
    to_id: NodeId
    kind: EdgeKind
    transform: Pose3              # u: pose(to) = pose(from) o u
    information: np.ndarray       # 6x6 SPD, tangent order [rho, phi]

    def __post_init__(self):
        info = np.asarray(self.information, dtype=np.float64).reshape(6, 6)
        if not np.allclose(info, info.T, atol=1e-9):
            raise ValueError("information matrix must be symmetric")
        if np.any(np.linalg.eigvalsh(info) <= 0):
            raise ValueError("information matrix must be positive definite")
        info = 0.5 * (info + info.T)
        info.setflags(write=False)
        object.__setattr__(self, "information", info)


@dataclass
class PoseGraph:
    """Ordered key-nodes plus odometry/loop edges."""

    nodes: dict[NodeId, KeyNode] = field(default_factory=dict)
    edges: list[GraphEdge] = field(default_factory=list)

    # -- construction --------------------------------------------------------

    def add_node(self, node: KeyNode) -> None:
        if node.node_id in self.nodes:
            raise ValueError(f"duplicate node id {node.node_id}")
        self.nodes[node.node_id] = node

    def add_edge(self, edge: GraphEdge) -> None:
        if edge.from_id not in self.nodes or edge.to_id not in self.nodes:
            raise ValueError(f"edge endpoints {edge.from_id}->{edge.to_id} not in graph")
        if edge.kind is EdgeKind.ODOMETRY:
            ra, ia = edge.from_id
            rb, ib = edge.to_id
            if ra != rb or ib != ia + 1:
                raise ValueError("odometry edges must connect consecutive indices of one robot")
            if any(e.kind is EdgeKind.ODOMETRY and e.from_id == edge.from_id for e in self.edges):
                raise ValueError(f"duplicate odometry edge from {edge.from_id}")
        self.edges.append(edge)

    def set_pose(self, node_id: NodeId, pose: Pose3) -> None:
        self.nodes[node_id] = replace(self.nodes[node_id], pose=pose)

    # -- queries --------------------------------------------------------------

    def robots(self) -> list[int]:
        return sorted({r for r, _ in self.nodes})

    def nodes_of(self, robot: int) -> list[KeyNode]:
        return [n for (r, _), n in sorted(self.nodes.items()) if r == robot]

    def odometry_edges(self, robot: int) -> list[GraphEdge]:
        out = [e for e in self.edges if e.kind is EdgeKind.ODOMETRY and e.from_id[0] == robot]
        return sorted(out, key=lambda e: e.from_id[1])

    def loop_edges(self) -> list[GraphEdge]:
        return [e for e in self.edges if e.kind is not EdgeKind.ODOMETRY]

    def __len__(self) -> int:
        return len(self.nodes)

    def copy(self) -> "PoseGraph":
        return PoseGraph(dict(self.nodes), list(self.edges))

    def validate(self) -> None:
        """Raise if structural invariants are broken."""
        for e in self.edges:
            if e.from_id not in self.nodes or e.to_id not in self.nodes:
                raise ValueError(f"dangling edge {e.from_id}->{e.to_id}")
        for robot in self.robots():
            indices = sorted(i for r, i in self.nodes if r == robot)
            odo = {(e.from_id[1], e.to_id[1]) for e in self.odometry_edges(robot)}
            expected = {(i, j) for i, j in zip(indices[:-1], indices[1:]) if j == i + 1}
            if odo != expected:
                raise ValueError(f"robot {robot} odometry chain broken: {sorted(odo)} != {sorted(expected)}")


def merge_disjoint(graphs: Iterable[PoseGraph]) -> PoseGraph:
    """Union of graphs over disjoint robot id sets."""
    out = PoseGraph()
    seen: set[int] = set()
    for g in graphs:
        robots = set(g.robots())
        if robots & seen:
            raise ValueError(f"robot ids {robots & seen} appear in more than one graph")
        seen |= robots
        for node in g.nodes.values():
            out.add_node(node)
        out.edges.extend(g.edges)
    return out


# ---------------------------------------------------------------------------
# g2o-style plain-text serialization
# ---------------------------------------------------------------------------
# VERTEX_SE3:QUAT id tx ty tz qx qy qz qw
# EDGE_SE3:QUAT from to tx ty tz qx qy qz qw <21 upper-triangular info entries>
# Floats are written with repr() so a load/save round trip is bit-exact.

_KIND_TAG = {EdgeKind.ODOMETRY: "ODOMETRY", EdgeKind.INTRA_LOOP: "INTRA_LOOP",
             EdgeKind.INTER_LOOP: "INTER_LOOP"}
_TAG_KIND = {v: k for k, v in _KIND_TAG.items()}


def _pack_id(node_id: NodeId) -> int:
    robot, index = node_id
    return robot * _G2O_ROBOT_STRIDE + index


def _unpack_id(packed: int) -> NodeId:
    return divmod(packed, _G2O_ROBOT_STRIDE)


def _fmt(values: Iterable[float]) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_graph(path, graph: PoseGraph) -> None:
    lines = []
    for node_id, node in sorted(graph.nodes.items()):
        q, t = node.pose.q, node.pose.t
        lines.append(f"VERTEX_SE3:QUAT {_pack_id(node_id)} "
                     f"{_fmt([t[0], t[1], t[2], q[1], q[2], q[3], q[0]])}")
    for e in graph.edges:
        q, t = e.transform.q, e.transform.t
        upper = e.information[np.triu_indices(6)]
        lines.append(f"EDGE_SE3:QUAT {_pack_id(e.from_id)} {_pack_id(e.to_id)} "
                     f"{_fmt([t[0], t[1], t[2], q[1], q[2], q[3], q[0]])} {_fmt(upper)} "
                     f"# KIND {_KIND_TAG[e.kind]}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_graph(path) -> PoseGraph:
    """Load poses and edges; scans are not stored in graph files."""
    graph = PoseGraph()
    edges: list[GraphEdge] = []
    with open(path) as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            comment = ""
            if "#" in line:
                line, comment = line.split("#", 1)
            tok = line.split()
            if tok[0] == "VERTEX_SE3:QUAT":
                node_id = _unpack_id(int(tok[1]))
                tx, ty, tz, qx, qy, qz, qw = (float(v) for v in tok[2:9])
                pose = Pose3(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz]))
                graph.add_node(KeyNode(node_id, pose, PointCloud.empty()))
            elif tok[0] == "EDGE_SE3:QUAT":
                from_id = _unpack_id(int(tok[1]))
                to_id = _unpack_id(int(tok[2]))
                tx, ty, tz, qx, qy, qz, qw = (float(v) for v in tok[3:10])
                upper = np.array([float(v) for v in tok[10:31]])
                info = np.zeros((6, 6))
                info[np.triu_indices(6)] = upper
                info = info + np.triu(info, 1).T
                kind = EdgeKind.ODOMETRY
                ctok = comment.split()
                if len(ctok) == 2 and ctok[0] == "KIND":
                    kind = _TAG_KIND[ctok[1]]
                edges.append(GraphEdge(from_id, to_id, kind,
                                       Pose3(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz])),
                                       info))
            else:
                raise ValueError(f"unrecognized graph record: {tok[0]}")
    for e in edges:
        graph.add_edge(e)
    return graph
