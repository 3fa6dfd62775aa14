"""Reproducible poisoning generators: random-subgraph triggers plus the
clean-label, noise-disruption, and asymmetric-weakening variants.

All generators are pure functions of their inputs and an explicit RNG, so a
fixed seed reproduces a poisoning bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import AttributedGraph, PoisonRecord, TriggerSubgraph, attach_trigger

ATTACK_KINDS = ("sba", "clean-label-one-node", "noise-disruption", "asymmetric")


@dataclass(frozen=True)
class AttackSpec:
    """Parameters of one poisoning campaign.

    ``target_labels`` may hold several labels; victims are then selected per
    group (``vs`` each) and the groups are disjoint. ``noise_multiplier``,
    ``removal_p`` and ``strength_q`` only apply to their respective kinds.
    """

    kind: str = "sba"
    ts: int = 3
    vs: int = 10
    target_labels: tuple[int, ...] = (0,)
    er_p: float = 0.5
    noise_multiplier: float = 30.0
    removal_p: float = 0.0
    strength_q: float = 0.0
    attach_mode: str = "all-edges"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.ts < 1 or self.vs < 1:
            raise ValueError("trigger size and victim size must be >= 1")
        if not 0.0 <= self.er_p <= 1.0:
            raise ValueError("edge probability must lie in [0, 1]")
        if not 0.0 <= self.removal_p <= 1.0:
            raise ValueError("removal probability must lie in [0, 1]")
        if self.strength_q < 0.0:
            raise ValueError("strength exponent must be >= 0")
        if self.noise_multiplier <= 0.0:
            raise ValueError("noise multiplier must be > 0")
        if len(self.target_labels) < 1:
            raise ValueError("at least one target label required")
        if len(set(self.target_labels)) != len(self.target_labels):
            raise ValueError("target labels must be distinct")
        object.__setattr__(self, "target_labels", tuple(int(t) for t in self.target_labels))

    @property
    def effective_ts(self) -> int:
        return 1 if self.kind == "clean-label-one-node" else self.ts

    @property
    def clean_label(self) -> bool:
        return self.kind == "clean-label-one-node"

    def to_json(self) -> dict:
        return {
            "kind": self.kind, "ts": self.ts, "vs": self.vs,
            "target_labels": list(self.target_labels), "er_p": self.er_p,
            "noise_multiplier": self.noise_multiplier, "removal_p": self.removal_p,
            "strength_q": self.strength_q, "attach_mode": self.attach_mode,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AttackSpec":
        obj = dict(obj)
        labels = obj.pop("target_labels", obj.pop("target_label", 0))
        if isinstance(labels, int):
            labels = (labels,)
        return cls(target_labels=tuple(int(t) for t in labels), **obj)


def feature_stats(g: AttributedGraph) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and std of the host graph's features."""
    mean = g.features.mean(axis=0)
    std = g.features.std(axis=0)
    return mean, std


def _host_bounds(g: AttributedGraph) -> tuple[np.ndarray, np.ndarray] | None:
    """Clip range for generated features, but only for bounded host data.

    Binary/bounded hosts (all features within a narrow global range) get their
    per-dimension min/max as clip bounds; unbounded hosts get none.
    """
    lo, hi = float(g.features.min()), float(g.features.max())
    if hi - lo <= 2.0 and lo >= -1.0 and hi <= 1.5:
        return g.features.min(axis=0), g.features.max(axis=0)
    return None


def generate_sba_trigger(ts: int, stats: tuple[np.ndarray, np.ndarray], er_p: float,
                         rng: np.random.Generator,
                         clip: tuple[np.ndarray, np.ndarray] | None = None) -> TriggerSubgraph:
    """Random trigger: edges ~ Bernoulli(er_p) among the ts nodes, features
    Gaussian with the host graph's per-dimension moments."""
    if ts < 1:
        raise ValueError("trigger size must be >= 1")
    mean, std = stats
    feats = rng.normal(loc=mean, scale=np.maximum(std, 1e-12), size=(ts, len(mean)))
    if clip is not None:
        feats = np.clip(feats, clip[0], clip[1])
    edges = []
    for u in range(ts):
        for v in range(u + 1, ts):
            if rng.random() < er_p:
                edges.append((u, v))
    return TriggerSubgraph(features=feats, internal_edges=tuple(edges))


def select_victims(g: AttributedGraph, vs: int, rng: np.random.Generator,
                   target_label: int | None = None,
                   exclude=()) -> np.ndarray:
    """Pick ``vs`` distinct labeled training nodes; clean-label mode
    (``target_label`` given) restricts to nodes already carrying that label."""
    pool = np.flatnonzero(g.train_mask & (g.labels >= 0))
    if target_label is not None:
        pool = pool[g.labels[pool] == target_label]
    if exclude:
        banned = np.asarray(sorted(set(int(v) for v in exclude)), dtype=np.int64)
        pool = pool[~np.isin(pool, banned)]
    if len(pool) < vs:
        raise ValueError(f"only {len(pool)} eligible nodes for {vs} victims")
    pick = rng.choice(pool, size=vs, replace=False)
    return np.sort(pick).astype(np.int64)


def apply_noise_disruption(t: TriggerSubgraph, sigma_multiplier: float,
                           host_std: np.ndarray, rng: np.random.Generator) -> TriggerSubgraph:
    """Add zero-mean Gaussian noise with per-dimension std = multiplier * host std."""
    if sigma_multiplier <= 0:
        raise ValueError("noise multiplier must be > 0")
    noise = rng.normal(0.0, 1.0, size=t.features.shape) * (sigma_multiplier * host_std)
    return TriggerSubgraph(features=t.features + noise,
                           internal_edges=t.internal_edges,
                           single_attach_index=t.single_attach_index)


def apply_asymmetric_weakening(t: TriggerSubgraph, removal_p: float, strength_q: float,
                               rng: np.random.Generator) -> TriggerSubgraph:
    """Training-time weakening: drop each node w.p. p, scale survivors' features
    by U^q with U ~ Uniform(0,1) per node. Test-time triggers stay full strength."""
    if not 0.0 <= removal_p <= 1.0:
        raise ValueError("removal probability must lie in [0, 1]")
    if strength_q < 0.0:
        raise ValueError("strength exponent must be >= 0")
    keep = rng.random(t.size) >= removal_p
    alpha = rng.random(t.size) ** strength_q
    kept = np.flatnonzero(keep)
    if kept.size == 0:
        return None
    remap = {int(old): new for new, old in enumerate(kept)}
    feats = t.features[kept] * alpha[kept, None]
    edges = tuple((remap[u], remap[v]) for u, v in t.internal_edges if keep[u] and keep[v])
    attach = remap.get(t.single_attach_index, 0)
    return TriggerSubgraph(features=feats, internal_edges=edges, single_attach_index=attach)


def make_trigger(g: AttributedGraph, spec: AttackSpec, rng: np.random.Generator,
                 train_time: bool) -> TriggerSubgraph | None:
    """One fresh trigger per the spec; None when asymmetric removal empties it."""
    stats = feature_stats(g)
    trig = generate_sba_trigger(spec.effective_ts, stats, spec.er_p, rng, clip=_host_bounds(g))
    if spec.kind == "noise-disruption":
        trig = apply_noise_disruption(trig, spec.noise_multiplier, stats[1], rng)
    if spec.kind == "asymmetric" and train_time:
        trig = apply_asymmetric_weakening(trig, spec.removal_p, spec.strength_q, rng)
    return trig


def poison_graph(g: AttributedGraph, spec: AttackSpec) -> tuple[AttributedGraph, PoisonRecord]:
    """Attach a fresh trigger to each victim and force victim labels to the
    group's target (clean-label victims already carry it)."""
    rng = np.random.default_rng(spec.seed)
    groups: dict[str, np.ndarray] = {}
    taken: set[int] = set()
    for gi, label in enumerate(spec.target_labels):
        victims = select_victims(
            g, spec.vs, rng,
            target_label=label if spec.clean_label else None,
            exclude=taken)
        groups[str(gi)] = victims
        taken |= set(int(v) for v in victims)

    poisoned = g
    triggers: dict[int, tuple[int, ...]] = {}
    for gi in groups:
        for victim in groups[gi]:
            trig = make_trigger(g, spec, rng, train_time=True)
            base = poisoned.num_nodes
            if trig is None:          # asymmetric removal emptied the trigger
                triggers[int(victim)] = ()
            else:
                poisoned = attach_trigger(poisoned, int(victim), trig, spec.attach_mode)
                triggers[int(victim)] = tuple(range(base, base + trig.size))
    if not spec.clean_label:
        new_labels = poisoned.labels.copy()
        for gi, label in enumerate(spec.target_labels):
            new_labels[list(groups[str(gi)])] = label
        poisoned = poisoned.with_labels(new_labels)

    record = PoisonRecord(
        victims=tuple(int(v) for vs in groups.values() for v in vs),
        triggers=triggers,
        target_labels={k: int(spec.target_labels[int(k)]) for k in groups},
        victim_groups={k: tuple(int(v) for v in vs) for k, vs in groups.items()},
        attach_mode=spec.attach_mode,
    )
    return poisoned, record


def poison_test_graph(g: AttributedGraph, victims, spec: AttackSpec,
                      seed: int) -> tuple[AttributedGraph, PoisonRecord]:
    """Inference-time poisoning: attach a full-strength trigger to every given
    victim. Labels are never touched; ground truth labels stay in place."""
    rng = np.random.default_rng(seed)
    victims = [int(v) for v in victims]
    n_groups = len(spec.target_labels)
    groups = {str(gi): tuple(victims[gi::n_groups]) for gi in range(n_groups)}
    poisoned = g
    triggers: dict[int, tuple[int, ...]] = {}
    for gi in range(n_groups):
        for victim in groups[str(gi)]:
            trig = make_trigger(g, spec, rng, train_time=False)
            base = poisoned.num_nodes
            poisoned = attach_trigger(poisoned, victim, trig, spec.attach_mode)
            triggers[victim] = tuple(range(base, base + trig.size))
    record = PoisonRecord(
        victims=tuple(victims),
        triggers=triggers,
        target_labels={str(gi): int(spec.target_labels[gi]) for gi in range(n_groups)},
        victim_groups=groups,
        attach_mode=spec.attach_mode,
    )
    return poisoned, record
