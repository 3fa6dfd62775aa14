"""Seeded synthetic citation-style benchmark graphs.

Nodes carry sparse binary bag-of-words features drawn mostly from a per-class
topic pool; edges are homophilous with heterogeneous degree propensities.
The default size mirrors a classic citation benchmark (2708 nodes, 1443
feature dims, 7 classes, ~5278 undirected edges).
"""

from __future__ import annotations

import numpy as np

from .graph import AttributedGraph

CLASS_WEIGHTS = (0.13, 0.08, 0.15, 0.30, 0.16, 0.11, 0.07)


def make_benchmark_graph(num_nodes: int = 2708, feature_dim: int = 1443,
                         num_classes: int = 7, num_edges: int = 5278,
                         seed: int = 0, homophily: float = 0.83,
                         words_per_class: int = 160, mean_words: float = 16.0,
                         topic_fidelity: float = 0.82) -> AttributedGraph:
    rng = np.random.default_rng(seed)

    if num_classes == len(CLASS_WEIGHTS):
        probs = np.asarray(CLASS_WEIGHTS)
    else:
        probs = np.full(num_classes, 1.0 / num_classes)
    labels = rng.choice(num_classes, size=num_nodes, p=probs)

    pools = [rng.choice(feature_dim, size=words_per_class, replace=False)
             for _ in range(num_classes)]
    features = np.zeros((num_nodes, feature_dim), dtype=np.float64)
    for i in range(num_nodes):
        k = max(4, rng.poisson(mean_words))
        on_topic = rng.random(k) < topic_fidelity
        words = np.where(on_topic,
                         rng.choice(pools[labels[i]], size=k),
                         rng.integers(0, feature_dim, size=k))
        features[i, words] = 1.0

    propensity = rng.pareto(2.0, size=num_nodes) + 0.25
    by_class = [np.flatnonzero(labels == c) for c in range(num_classes)]
    class_w = [propensity[idx] / propensity[idx].sum() for idx in by_class]
    total_w = propensity / propensity.sum()

    edges: set[tuple[int, int]] = set()
    guard = 0
    while len(edges) < num_edges and guard < num_edges * 60:
        guard += 1
        u = int(rng.choice(num_nodes, p=total_w))
        if rng.random() < homophily:
            cls = labels[u]
            v = int(rng.choice(by_class[cls], p=class_w[cls]))
        else:
            v = int(rng.choice(num_nodes, p=total_w))
        if u == v:
            continue
        edges.add((min(u, v), max(u, v)))

    return AttributedGraph(
        features=features,
        edges=np.asarray(sorted(edges), dtype=np.int64),
        labels=labels.astype(np.int64),
        train_mask=np.zeros(num_nodes, dtype=bool),
        num_classes=num_classes,
    )


def make_small_graph(num_nodes: int, seed: int = 0, feature_dim: int = 8,
                     num_classes: int = 3, edge_prob: float | None = None,
                     all_labeled: bool = True) -> AttributedGraph:
    """Small random attributed graph for oracles and property tests."""
    rng = np.random.default_rng(seed)
    p = edge_prob if edge_prob is not None else min(1.0, 3.0 / max(num_nodes - 1, 1))
    pairs = [(u, v) for u in range(num_nodes) for v in range(u + 1, num_nodes)
             if rng.random() < p]
    labels = rng.integers(0, num_classes, size=num_nodes)
    features = rng.normal(size=(num_nodes, feature_dim)) + labels[:, None]
    mask = np.ones(num_nodes, dtype=bool) if all_labeled else rng.random(num_nodes) < 0.5
    return AttributedGraph(
        features=features,
        edges=np.asarray(pairs, dtype=np.int64).reshape(-1, 2),
        labels=labels.astype(np.int64),
        train_mask=mask,
        num_classes=num_classes,
    )
