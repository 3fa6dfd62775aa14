import numpy as np
import pytest

from graphward.graph import AttributedGraph


def build_graph(n, edges, d=4, labels=None, train=None, num_classes=3, features=None, seed=0):
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(n, d)) if features is None else np.asarray(features, dtype=float)
    lab = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    mask = np.ones(n, dtype=bool) if train is None else np.asarray(train, dtype=bool)
    return AttributedGraph(feats, np.asarray(edges, dtype=np.int64).reshape(-1, 2),
                           lab, mask, num_classes)


@pytest.fixture
def path3():
    """3-node path a-b-c with 2-dim features."""
    return build_graph(3, [[0, 1], [1, 2]], d=2)


@pytest.fixture
def star5():
    """Star: center 0 with leaves 1..4."""
    return build_graph(5, [[0, i] for i in range(1, 5)])
