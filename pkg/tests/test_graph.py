import numpy as np
import pytest

import tunnelslam as ts
from tunnelslam.graph import (EdgeKind, GraphEdge, KeyNode, PoseGraph,
                              load_graph, merge_disjoint, save_graph)
from conftest import make_pose


def info_matrix(rng=None):
    if rng is None:
        return np.diag([100.0, 100.0, 100.0, 400.0, 400.0, 400.0])
    A = rng.normal(size=(6, 6))
    return A @ A.T + 6 * np.eye(6)


def chain_graph(n=4, robot=0):
    g = PoseGraph()
    for i in range(n):
        g.add_node(KeyNode((robot, i), ts.Pose3.from_yaw(0.0, (float(i), 0, 0)),
                           ts.PointCloud.empty()))
    for i in range(n - 1):
        g.add_edge(GraphEdge((robot, i), (robot, i + 1), EdgeKind.ODOMETRY,
                             ts.Pose3.from_yaw(0.0, (1.0, 0, 0)), info_matrix()))
    return g


class TestStructure:
    def test_edges_need_existing_nodes(self):
        g = chain_graph(2)
        with pytest.raises(ValueError):
            g.add_edge(GraphEdge((0, 0), (0, 9), EdgeKind.INTRA_LOOP,
                                 ts.Pose3.identity(), info_matrix()))

    def test_odometry_must_be_consecutive_same_robot(self):
        g = chain_graph(3)
        with pytest.raises(ValueError):
            g.add_edge(GraphEdge((0, 0), (0, 2), EdgeKind.ODOMETRY,
                                 ts.Pose3.identity(), info_matrix()))

    def test_no_duplicate_odometry(self):
        g = chain_graph(3)
        with pytest.raises(ValueError):
            g.add_edge(GraphEdge((0, 0), (0, 1), EdgeKind.ODOMETRY,
                                 ts.Pose3.identity(), info_matrix()))

    def test_information_must_be_spd(self):
        g = chain_graph(2)
        with pytest.raises(ValueError):
            GraphEdge((0, 0), (0, 1), EdgeKind.INTRA_LOOP,
                      ts.Pose3.identity(), -np.eye(6))
        bad = np.eye(6)
        bad[0, 5] = 0.5  # asymmetric
        with pytest.raises(ValueError):
            GraphEdge((0, 0), (0, 1), EdgeKind.INTRA_LOOP, ts.Pose3.identity(), bad)

    def test_validate_detects_broken_chain(self):
        g = chain_graph(3)
        g.validate()
        g.edges.pop(0)
        with pytest.raises(ValueError):
            g.validate()

    def test_merge_disjoint_rejects_shared_robots(self):
        with pytest.raises(ValueError):
            merge_disjoint([chain_graph(2, robot=0), chain_graph(2, robot=0)])
        merged = merge_disjoint([chain_graph(2, robot=0), chain_graph(3, robot=1)])
        assert len(merged) == 5
        merged.validate()


class TestSerialization:
    def test_g2o_roundtrip_bitexact(self, tmp_path):
        rng = np.random.default_rng(11)
        g = PoseGraph()
        for i in range(5):
            g.add_node(KeyNode((0, i), make_pose(rng), ts.PointCloud.empty()))
        g.add_node(KeyNode((1, 0), make_pose(rng), ts.PointCloud.empty()))
        for i in range(4):
            g.add_edge(GraphEdge((0, i), (0, i + 1), EdgeKind.ODOMETRY,
                                 make_pose(rng), info_matrix(rng)))
        g.add_edge(GraphEdge((0, 4), (0, 0), EdgeKind.INTRA_LOOP,
                             make_pose(rng), info_matrix(rng)))
        g.add_edge(GraphEdge((0, 2), (1, 0), EdgeKind.INTER_LOOP,
                             make_pose(rng), info_matrix(rng)))
        path = tmp_path / "graph.g2o"
        save_graph(path, g)
        loaded = load_graph(path)

        assert sorted(loaded.nodes) == sorted(g.nodes)
        for nid in g.nodes:
            assert np.array_equal(loaded.nodes[nid].pose.q, g.nodes[nid].pose.q)
            assert np.array_equal(loaded.nodes[nid].pose.t, g.nodes[nid].pose.t)
        assert len(loaded.edges) == len(g.edges)
        for a, b in zip(loaded.edges, g.edges):
            assert a.kind is b.kind
            assert (a.from_id, a.to_id) == (b.from_id, b.to_id)
            # information must survive bit for bit
            assert np.array_equal(a.information, b.information)
            assert np.array_equal(a.transform.q, b.transform.q)
            assert np.array_equal(a.transform.t, b.transform.t)

        # and a second save is byte-identical
        path2 = tmp_path / "again.g2o"
        save_graph(path2, loaded)
        assert path.read_bytes() == path2.read_bytes()
