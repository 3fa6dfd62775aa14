import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphward.graph import (AttributedGraph, GraphFormatError, PoisonRecord,
                             TriggerSubgraph, attach_trigger,
                             build_propagation_operator, k_hop_neighborhood,
                             load_graph, load_poison_record, mask_nodes,
                             remove_nodes, save_graph, save_poison_record)

from conftest import build_graph


def write_graph_dir(tmp_path, manifest, nodes, edges, features):
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    (tmp_path / "nodes.tsv").write_text(nodes)
    (tmp_path / "edges.tsv").write_text(edges)
    (tmp_path / "features.csv").write_text(features)
    return tmp_path


class TestLoadGraph:
    def test_three_node_path(self, tmp_path):
        path = write_graph_dir(
            tmp_path,
            {"num_nodes": 3, "feature_dim": 2, "num_classes": 2},
            "0\t0\ttrain\n1\t1\ttrain\n2\t-\tnone\n",
            "0\t1\n1\t2\n",
            "1.0,0.0\n0.5,0.5\n0.0,1.0\n")
        g = load_graph(path)
        assert g.num_nodes == 3 and g.num_edges == 2 and g.feature_dim == 2
        assert g.labels.tolist() == [0, 1, -1]
        assert g.train_mask.tolist() == [True, True, False]

    def test_dangling_edge_endpoint(self, tmp_path):
        path = write_graph_dir(
            tmp_path,
            {"num_nodes": 2, "feature_dim": 1, "num_classes": 2},
            "0\t0\ttrain\n1\t1\ttrain\n",
            "0\t99\n",
            "1.0\n2.0\n")
        with pytest.raises(GraphFormatError, match=r"dangling.*99.*edges\.tsv:1"):
            load_graph(path)

    def test_label_out_of_range(self, tmp_path):
        path = write_graph_dir(
            tmp_path,
            {"num_nodes": 1, "feature_dim": 1, "num_classes": 2},
            "0\t7\ttrain\n", "", "1.0\n")
        with pytest.raises(GraphFormatError, match=r"label 7.*nodes\.tsv:1"):
            load_graph(path)

    def test_feature_dimension_mismatch(self, tmp_path):
        path = write_graph_dir(
            tmp_path,
            {"num_nodes": 2, "feature_dim": 3, "num_classes": 2},
            "0\t0\ttrain\n1\t1\ttrain\n",
            "",
            "1.0,2.0,3.0\n1.0,2.0\n")
        with pytest.raises(GraphFormatError, match=r"features\.csv"):
            load_graph(path)

    def test_missing_file(self, tmp_path):
        (tmp_path / "manifest.json").write_text(
            json.dumps({"num_nodes": 1, "feature_dim": 1, "num_classes": 2}))
        with pytest.raises(GraphFormatError, match="nodes.tsv"):
            load_graph(tmp_path)

    def test_benchmark_scale_counts(self, tmp_path):
        # mirrors the citation benchmark shape: 2708 nodes, 1443 dims, 7 classes
        from graphward.synth import make_benchmark_graph
        g = make_benchmark_graph(num_nodes=2708, feature_dim=1443, num_classes=7,
                                 num_edges=500, seed=1)
        save_graph(g, tmp_path / "g")
        loaded = load_graph(tmp_path / "g")
        assert loaded.num_nodes == 2708
        assert loaded.feature_dim == 1443
        assert loaded.num_classes == 7

    def test_round_trip(self, tmp_path):
        g = build_graph(6, [[0, 1], [2, 3], [1, 4]], d=3,
                        labels=[0, 1, 2, -1, 1, 0], train=[1, 1, 0, 0, 1, 0])
        save_graph(g, tmp_path / "g")
        h = load_graph(tmp_path / "g")
        assert np.array_equal(g.features, h.features)
        assert np.array_equal(g.edges, h.edges)
        assert np.array_equal(g.labels, h.labels)
        assert np.array_equal(g.train_mask, h.train_mask)


class TestAttachTrigger:
    def trigger(self, d=4, ts=3):
        return TriggerSubgraph(features=np.ones((ts, d)),
                               internal_edges=((0, 1), (1, 2)))

    def test_all_edges_degree(self, star5):
        g2 = attach_trigger(star5, 0, self.trigger(), "all-edges")
        assert g2.degree(0) == star5.degree(0) + 3
        assert g2.num_nodes == star5.num_nodes + 3

    def test_single_edge_degree(self, star5):
        g2 = attach_trigger(star5, 0, self.trigger(), "single-edge")
        assert g2.degree(0) == star5.degree(0) + 1
        assert g2.neighbors(5).tolist() == [0, 6]   # attach index 0 links the victim

    def test_ts1_modes_coincide(self, star5):
        t = TriggerSubgraph(features=np.ones((1, 4)))
        a = attach_trigger(star5, 2, t, "all-edges")
        b = attach_trigger(star5, 2, t, "single-edge")
        assert a.edge_set() == b.edge_set()
        assert np.array_equal(a.features, b.features)

    def test_round_trip_removal(self, star5):
        g2 = attach_trigger(star5, 0, self.trigger(), "all-edges")
        g3, _ = remove_nodes(g2, [5, 6, 7])
        assert g3.edge_set() == star5.edge_set()
        assert np.array_equal(g3.features, star5.features)

    def test_unknown_victim(self, star5):
        with pytest.raises(KeyError):
            attach_trigger(star5, 17, self.trigger())

    def test_appended_nodes_unlabeled(self, star5):
        g2 = attach_trigger(star5, 0, self.trigger())
        assert (g2.labels[5:] == -1).all()
        assert not g2.train_mask[5:].any()


class TestKHop:
    def test_zero_hops(self, path3):
        assert k_hop_neighborhood(path3, [0, 2], 0) == {0, 2}

    def test_one_hop_path(self, path3):
        assert k_hop_neighborhood(path3, [0], 1) == {0, 1}

    def test_star_two_hops_from_leaf(self, star5):
        assert k_hop_neighborhood(star5, [1], 2) == {0, 1, 2, 3, 4}

    def test_unknown_seed(self, path3):
        with pytest.raises(KeyError):
            k_hop_neighborhood(path3, [9], 1)

    @given(hops=st.integers(0, 4), seed=st.integers(0, 10))
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_hops(self, hops, seed):
        from graphward.synth import make_small_graph
        g = make_small_graph(12, seed=seed, feature_dim=3)
        seeds = [seed % 12]
        assert k_hop_neighborhood(g, seeds, hops) <= k_hop_neighborhood(g, seeds, hops + 1)


class TestMaskNodes:
    def test_empty_mask_is_identity(self, path3):
        assert mask_nodes(path3, [], np.zeros(2)) is path3

    def test_mask_all_zero_token(self, path3):
        g2 = mask_nodes(path3, [0, 1, 2], np.zeros(2))
        assert (g2.features == 0).all()

    def test_locality(self, path3):
        g2 = mask_nodes(path3, [2], np.array([7.0, 7.0]))
        assert np.array_equal(g2.features[:2], path3.features[:2])
        assert g2.features[2].tolist() == [7.0, 7.0]

    def test_idempotent(self, path3):
        token = np.array([1.0, 2.0])
        once = mask_nodes(path3, [1], token)
        twice = mask_nodes(once, [1], token)
        assert np.array_equal(once.features, twice.features)

    def test_dimension_mismatch(self, path3):
        with pytest.raises(ValueError):
            mask_nodes(path3, [0], np.zeros(5))


class TestPropagationOperator:
    def test_isolated_node_fixed_point(self):
        g = build_graph(1, np.zeros((0, 2)))
        op = build_propagation_operator(g, [0])
        s = np.array([3.5])
        assert op.apply(s).tolist() == [3.5]

    def test_train_train_edge_removed(self):
        g = build_graph(2, [[0, 1]])
        op = build_propagation_operator(g, [0, 1])
        dense = op.matrix.toarray()
        assert np.array_equal(dense, np.eye(2))

    def test_triangle_uniform_preserved(self):
        # one training node: no edges removed; all degrees equal (2+selfloop)
        g = build_graph(3, [[0, 1], [1, 2], [0, 2]])
        op = build_propagation_operator(g, [0])
        # independent dense oracle: D^-1/2 (A+I) D^-1/2 with every degree 3
        a = np.array([[1, 1, 1], [1, 1, 1], [1, 1, 1]], dtype=float) / 3.0
        s = np.array([2.0, 2.0, 2.0])
        assert np.allclose(op.apply(s), a @ s)
        assert np.allclose(op.apply(s), s)

    def test_symmetric_nonnegative(self):
        from graphward.synth import make_small_graph
        g = make_small_graph(15, seed=4)
        op = build_propagation_operator(g, range(0, 8))
        dense = op.matrix.toarray()
        assert np.allclose(dense, dense.T)
        assert (dense >= 0).all()
        s = np.abs(np.random.default_rng(0).normal(size=15))
        assert (op.apply(s) >= 0).all()


class TestPoisonRecord:
    def make(self):
        return PoisonRecord(victims=(1, 2), triggers={1: (10, 11), 2: (12,)},
                            target_labels={"0": 3}, victim_groups={"0": (1, 2)})

    def test_round_trip(self, tmp_path):
        rec = self.make()
        save_poison_record(rec, tmp_path / "r.json")
        back = load_poison_record(tmp_path / "r.json")
        assert back == rec

    def test_overlapping_triggers_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            PoisonRecord(victims=(1, 2), triggers={1: (10,), 2: (10,)},
                         target_labels={"0": 3}, victim_groups={"0": (1, 2)})

    def test_victim_in_trigger_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            PoisonRecord(victims=(1,), triggers={1: (1, 5)},
                         target_labels={"0": 3}, victim_groups={"0": (1,)})

    def test_poisoned_nodes(self):
        assert self.make().poisoned_nodes() == (1, 2, 10, 11, 12)
