"""Score-to-node conversion: adaptive fusion, deviation propagation, the
bimodality-gated valley cutoff, label grouping, and trigger recovery.

The converter abstains whenever the propagated training scores show no
bimodal separation or no label group has minimum support; an abstained result
carries empty sets and downstream training falls back to standard training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .graph import AttributedGraph, build_propagation_operator, k_hop_neighborhood
from .scoring import ScoreTable

BIMODALITY_THRESHOLD = 5.0 / 9.0   # uniform-distribution boundary of Sarle's coefficient


@dataclass(frozen=True)
class LocalizationParams:
    emphasis: int = 3              # score exponent before propagation
    hops: int = 2                  # propagation steps = classifier depth
    cutoff_fraction: float = 0.10  # top region searched for the valley
    support: int = 5               # minimum label-group size
    stop_run: int = 2              # consecutive off-label run that stops the victim scan
    bimodality_threshold: float = BIMODALITY_THRESHOLD

    def __post_init__(self):
        if self.emphasis < 3:
            raise ValueError("emphasis exponent must be >= 3")
        if self.hops < 1:
            raise ValueError("hop count must be >= 1")
        if not 0.0 < self.cutoff_fraction <= 1.0:
            raise ValueError("cutoff fraction must lie in (0, 1]")
        if self.support < 1 or self.stop_run < 1:
            raise ValueError("support and stop run length must be >= 1")


@dataclass(frozen=True)
class DetectionResult:
    """Suspicious label groups with their victims and recovered triggers."""

    abstained: bool
    group_labels: tuple[int, ...] = ()
    victims: tuple[tuple[int, ...], ...] = ()
    triggers: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.abstained and (self.group_labels or self.victims or self.triggers):
            raise ValueError("abstained result must carry empty sets")
        if not (len(self.group_labels) == len(self.victims) == len(self.triggers)):
            raise ValueError("group arrays must align")
        all_vic = [v for grp in self.victims for v in grp]
        if len(all_vic) != len(set(all_vic)):
            raise ValueError("victim groups must be disjoint")
        if set(all_vic) & {t for grp in self.triggers for t in grp}:
            raise ValueError("trigger sets must exclude identified victims")

    def all_victims(self) -> tuple[int, ...]:
        return tuple(sorted(v for grp in self.victims for v in grp))

    def all_triggers(self) -> tuple[int, ...]:
        return tuple(sorted({t for grp in self.triggers for t in grp}))

    def victim_count(self) -> int:
        return sum(len(grp) for grp in self.victims)

    def trigger_count(self) -> int:
        return len(self.all_triggers())

    def to_json(self) -> dict:
        return {"abstained": self.abstained,
                "groups": [{"label": int(l), "victims": [int(v) for v in vs],
                            "triggers": [int(t) for t in ts]}
                           for l, vs, ts in zip(self.group_labels, self.victims, self.triggers)]}

    @classmethod
    def from_json(cls, obj: dict) -> "DetectionResult":
        groups = obj.get("groups", [])
        return cls(abstained=bool(obj["abstained"]),
                   group_labels=tuple(int(grp["label"]) for grp in groups),
                   victims=tuple(tuple(int(v) for v in grp["victims"]) for grp in groups),
                   triggers=tuple(tuple(int(t) for t in grp["triggers"]) for grp in groups))


def save_detection(det: DetectionResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(det.to_json(), indent=2))


def load_detection(path: str | Path) -> DetectionResult:
    return DetectionResult.from_json(json.loads(Path(path).read_text()))


ABSTAIN = DetectionResult(abstained=True)


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------

def propagate_scores(fused: np.ndarray, g: AttributedGraph, train_set,
                     params: LocalizationParams) -> tuple[np.ndarray, np.ndarray]:
    """Emphasize (s^r) and diffuse scores through the train-edge-removed,
    self-looped normalized adjacency.

    Returns (scores restricted to ``train_set`` order, full propagated vector).
    """
    s = np.asarray(fused, dtype=np.float64)
    if s.shape != (g.num_nodes,):
        raise ValueError("fused scores must cover every node")
    op = build_propagation_operator(g, train_set)
    full = op.apply_n(s ** params.emphasis, params.hops)
    train_idx = np.asarray([int(v) for v in train_set], dtype=np.int64)
    return full[train_idx], full


def bimodality_gate(scores: np.ndarray, threshold: float = BIMODALITY_THRESHOLD) -> bool:
    """Sarle's bimodality coefficient test; False means downstream abstains.

    BC = (g1^2 + 1) / (g2 + 3(n-1)^2 / ((n-2)(n-3))) with bias-corrected
    sample skewness g1 and excess kurtosis g2. Needs at least 4 samples.
    """
    x = np.asarray(scores, dtype=np.float64)
    n = x.size
    if n < 4:
        return False
    if np.allclose(x, x[0]):
        return False   # degenerate: no variance, no separation
    g1 = stats.skew(x, bias=False)
    g2 = stats.kurtosis(x, fisher=True, bias=False)
    denom = g2 + 3.0 * (n - 1) ** 2 / ((n - 2) * (n - 3))
    if denom <= 0:
        return False
    bc = (g1 * g1 + 1.0) / denom
    return bool(bc > threshold)


def valley_cutoff(sorted_scores: np.ndarray, params: LocalizationParams
                  ) -> tuple[int, float, int]:
    """Largest adjacent gap within the top region of descending scores.

    Returns (k_star, theta_val, region_size). The seed set is the top k_star
    ranks; theta_val is the midpoint of the gap. Ties break toward smaller k.
    """
    s = np.asarray(sorted_scores, dtype=np.float64)
    m = s.size
    if np.any(np.diff(s) > 0):
        raise ValueError("scores must be sorted in descending order")
    region = int(np.ceil(params.cutoff_fraction * m))
    if region < 2:
        raise ValueError("top region has fewer than 2 nodes")
    gaps = s[:region - 1] - s[1:region]
    k_star = int(np.argmax(gaps)) + 1          # argmax returns the first (smallest k) tie
    theta = 0.5 * (s[k_star - 1] + s[k_star])
    return k_star, float(theta), region


def form_victim_groups(seed_nodes: np.ndarray, sorted_nodes: np.ndarray,
                       labels: np.ndarray, params: LocalizationParams
                       ) -> tuple[tuple[int, ...], tuple[tuple[int, ...], ...]]:
    """Label grouping with minimum support, then the single-target scan or the
    group-wise multi-target rule.

    ``seed_nodes``: the valley seed set; ``sorted_nodes``: all training nodes in
    descending propagated-score order. Returns (group labels, victim groups);
    empty when no group reaches support.
    """
    seed_labels = labels[seed_nodes]
    kept: dict[int, np.ndarray] = {}
    for lab in np.unique(seed_labels):
        members = seed_nodes[seed_labels == lab]
        if lab >= 0 and members.size >= params.support:
            kept[int(lab)] = members
    if not kept:
        return (), ()
    if len(kept) > 1:
        order = sorted(kept)
        return tuple(order), tuple(tuple(int(v) for v in kept[lab]) for lab in order)

    # single target: extend down the sorted list until a run of off-label nodes
    target = next(iter(kept))
    run = 0
    stop = None
    for j, node in enumerate(sorted_nodes):
        if labels[node] != target:
            run += 1
            if run == params.stop_run:
                stop = j + 1    # position of the run's last element, 1-based
                break
        else:
            run = 0
    scan = sorted_nodes if stop is None else sorted_nodes[:stop - 1]
    victims = [int(v) for v in scan if labels[v] == target]
    return (target,), (tuple(victims),)


def recover_triggers(victim_groups: tuple[tuple[int, ...], ...], g: AttributedGraph,
                     propagated_full: np.ndarray, params: LocalizationParams
                     ) -> tuple[tuple[int, ...], ...]:
    """Per group: candidates are the hop-neighborhood in the original poisoned
    graph minus all identified victims; keep those whose propagated score
    reaches the group's minimum victim score."""
    all_victims = {v for grp in victim_groups for v in grp}
    out = []
    for grp in victim_groups:
        if not grp:
            out.append(())
            continue
        hood = k_hop_neighborhood(g, grp, params.hops)
        candidates = sorted(hood - all_victims)
        floor = min(propagated_full[v] for v in grp)
        out.append(tuple(int(v) for v in candidates if propagated_full[v] >= floor))
    return tuple(out)


def identify(table: ScoreTable, g: AttributedGraph, params: LocalizationParams,
             view: str = "s_fused") -> DetectionResult:
    """Full conversion for one score column: propagate, gate, cut, group, recover."""
    scores = table.dense_column(view, g.num_nodes)
    train = g.train_nodes()
    if train.size < 4:
        return ABSTAIN
    prop_train, prop_full = propagate_scores(scores, g, train, params)
    if not bimodality_gate(prop_train, params.bimodality_threshold):
        return ABSTAIN
    order = np.argsort(-prop_train, kind="stable")
    sorted_nodes = train[order]
    sorted_scores = prop_train[order]
    try:
        k_star, theta, _ = valley_cutoff(sorted_scores, params)
    except ValueError:
        return ABSTAIN
    seeds = sorted_nodes[:k_star]
    labels_arr = np.asarray(g.labels)
    group_labels, victim_groups = form_victim_groups(seeds, sorted_nodes, labels_arr, params)
    if not group_labels:
        return ABSTAIN
    trigger_groups = recover_triggers(victim_groups, g, prop_full, params)
    return DetectionResult(abstained=False, group_labels=group_labels,
                           victims=victim_groups, triggers=trigger_groups)


def fuse_scores(table: ScoreTable, g: AttributedGraph, params: LocalizationParams
                ) -> tuple[np.ndarray, dict]:
    """Reliability-weighted fusion of the two views.

    Each view runs the full identification alone; its weight is (detected
    victims x detected triggers), zero on abstention. Both zero falls back to
    equal weights. Fills the table's fused column in place.
    """
    det_int = identify(table, g, params, view="s_int")
    det_ext = identify(table, g, params, view="s_ext")
    w_int = float(det_int.victim_count() * det_int.trigger_count())
    w_ext = float(det_ext.victim_count() * det_ext.trigger_count())
    if w_int == 0.0 and w_ext == 0.0:
        w_int = w_ext = 1.0
    fused = w_int * np.nan_to_num(table.s_int) + w_ext * np.nan_to_num(table.s_ext)
    table.s_fused = fused
    diag = {"weight_internal": w_int, "weight_external": w_ext,
            "internal_only": det_int, "external_only": det_ext}
    return fused, diag
