"""Brute-force interaction decomposition of a trigger's influence on a
victim's logits.

The influence of an edit set S is the logit shift it causes at the victim.
Enumerating all subsets yields the unique dividend decomposition by Möbius
recursion; first-order dividends sum to the additive component (EI), all
higher orders to the synergistic component (IC), and EI + IC reconstructs the
full shift exactly. Theorem-level dichotomy: whenever the full shift has norm
at least Theta, one of the two components has norm at least Theta/2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import AttributedGraph, TriggerSubgraph, attach_trigger
from .models import Classifier

MAX_ATOMS = 20


@dataclass(frozen=True)
class NodeAtom:
    """One insertable node with its feature row and links into the base graph."""

    features: np.ndarray
    base_links: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "base_links", tuple(int(v) for v in self.base_links))


@dataclass(frozen=True)
class EdgeAtom:
    """One toggleable edge between existing nodes: added if absent, removed if present."""

    u: int
    v: int


@dataclass(frozen=True)
class Perturbation:
    """A set of independent atomic edits around a victim node.

    ``pair_edges`` are edges between two node atoms, materialized only when
    both atoms are applied, so every subset of atoms is well-defined.
    """

    base: AttributedGraph
    victim: int
    atoms: tuple
    pair_edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if len(self.atoms) > MAX_ATOMS:
            raise ValueError(f"at most {MAX_ATOMS} atoms supported, got {len(self.atoms)}")
        if not 0 <= self.victim < self.base.num_nodes:
            raise KeyError(f"unknown victim id {self.victim}")
        for i, j in self.pair_edges:
            k = len(self.atoms)
            if not (0 <= i < k and 0 <= j < k):
                raise ValueError("pair edge references unknown atom")
            if not (isinstance(self.atoms[i], NodeAtom) and isinstance(self.atoms[j], NodeAtom)):
                raise ValueError("pair edges must join node atoms")

    @property
    def size(self) -> int:
        return len(self.atoms)

    def apply(self, mask: int) -> AttributedGraph:
        """Graph with exactly the atoms selected by the bitmask applied."""
        if mask == 0:
            return self.base
        g = self.base
        n0 = g.num_nodes
        new_feats, new_edges = [], []
        toggles = []
        node_pos: dict[int, int] = {}
        for i, atom in enumerate(self.atoms):
            if not mask >> i & 1:
                continue
            if isinstance(atom, NodeAtom):
                node_pos[i] = n0 + len(new_feats)
                new_feats.append(atom.features)
                new_edges += [(node_pos[i], b) for b in atom.base_links]
            else:
                toggles.append((atom.u, atom.v))
        for i, j in self.pair_edges:
            if mask >> i & 1 and mask >> j & 1:
                new_edges.append((node_pos[i], node_pos[j]))

        edges = [(int(a), int(b)) for a, b in g.edges]
        if toggles:
            present = set(edges)
            for u, v in toggles:
                key = (min(int(u), int(v)), max(int(u), int(v)))
                if key in present:
                    present.discard(key)
                else:
                    present.add(key)
            edges = sorted(present)
        edges = np.asarray(edges + new_edges, dtype=np.int64).reshape(-1, 2)

        if new_feats:
            features = np.vstack([g.features, np.asarray(new_feats)])
            labels = np.concatenate([g.labels, np.full(len(new_feats), -1, dtype=np.int64)])
            train = np.concatenate([g.train_mask, np.zeros(len(new_feats), dtype=bool)])
        else:
            features, labels, train = g.features, g.labels, g.train_mask
        return AttributedGraph(features, edges, labels, train, g.num_classes)


def perturbation_from_trigger(g_clean: AttributedGraph, victim: int,
                              trigger: TriggerSubgraph, mode: str = "all-edges"
                              ) -> Perturbation:
    """Node-level atoms: one per trigger node with its victim link; internal
    trigger edges become pair edges."""
    if mode == "all-edges":
        linked = set(range(trigger.size))
    elif mode == "single-edge":
        linked = {trigger.single_attach_index}
    else:
        raise ValueError(f"unknown attachment mode {mode!r}")
    atoms = tuple(NodeAtom(features=trigger.features[k],
                           base_links=(victim,) if k in linked else ())
                  for k in range(trigger.size))
    return Perturbation(base=g_clean, victim=victim, atoms=atoms,
                        pair_edges=tuple(trigger.internal_edges))


def poisoned_counterpart(pert: Perturbation, mode: str = "all-edges") -> AttributedGraph:
    """The fully-applied graph via the standard attachment operator (handy for
    checking apply(full mask) against attach_trigger)."""
    feats = np.asarray([a.features for a in pert.atoms])
    trig = TriggerSubgraph(features=feats, internal_edges=pert.pair_edges)
    return attach_trigger(pert.base, pert.victim, trig, mode)


def influence_delta(model: Classifier, pert: Perturbation, mask: int) -> np.ndarray:
    """Victim logit shift caused by applying exactly the atoms in the mask."""
    if mask >> pert.size:
        raise ValueError("mask selects unknown atoms")
    base_logits = model.predict_logits(pert.base)[pert.victim]
    if mask == 0:
        return np.zeros_like(base_logits)
    shifted = model.predict_logits(pert.apply(mask))[pert.victim]
    return shifted - base_logits


@dataclass
class DividendMap:
    """Dividend vectors per nonempty atom subset plus the split aggregates."""

    size: int
    dividends: dict[int, np.ndarray]
    deltas: dict[int, np.ndarray]
    first_order: np.ndarray        # EI: sum of singleton dividends
    synergy: np.ndarray            # IC: sum of dividends of |S| >= 2

    @property
    def total(self) -> np.ndarray:
        return self.deltas[(1 << self.size) - 1]

    def to_json(self) -> dict:
        return {"num_atoms": self.size,
                "dividends": {str(m): v.tolist() for m, v in sorted(self.dividends.items())},
                "first_order": self.first_order.tolist(),
                "synergy": self.synergy.tolist(),
                "total": self.total.tolist()}


def harsanyi_decomposition(model: Classifier, pert: Perturbation) -> DividendMap:
    """Exact dividends over all nonempty atom subsets, by size-ordered Möbius
    recursion; verifies that they reconstruct the full influence."""
    k = pert.size
    if k < 1:
        raise ValueError("perturbation has no atoms")
    full = (1 << k) - 1
    deltas = {mask: influence_delta(model, pert, mask) for mask in range(full + 1)}
    dividends: dict[int, np.ndarray] = {}
    for mask in sorted(range(1, full + 1), key=lambda m: (m.bit_count(), m)):
        acc = deltas[mask].copy()
        sub = (mask - 1) & mask
        while sub:
            acc -= dividends[sub]
            sub = (sub - 1) & mask
        dividends[mask] = acc

    total = deltas[full]
    recon = np.sum(list(dividends.values()), axis=0)
    tol = 1e-9 * (1.0 + float(np.linalg.norm(total)))
    if not np.allclose(recon, total, rtol=0.0, atol=tol):
        raise ArithmeticError("dividends fail to reconstruct the full influence")

    first = np.sum([dividends[1 << i] for i in range(k)], axis=0)
    if k > 1:
        synergy = np.sum([v for m, v in dividends.items() if m.bit_count() >= 2], axis=0)
    else:
        synergy = np.zeros_like(first)
    return DividendMap(size=k, dividends=dividends, deltas=deltas,
                       first_order=first, synergy=synergy)


def dichotomy_check(dm: DividendMap, theta: float) -> str:
    """Classify which influence component clears theta/2.

    Returns 'premise-unmet' when the full shift itself is below theta;
    otherwise 'EI-dominant', 'IC-dominant', or 'both'. At least one component
    always clears theta/2 when the premise holds; a violation would falsify
    the decomposition and raises.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    if np.linalg.norm(dm.total) < theta:
        return "premise-unmet"
    ei = np.linalg.norm(dm.first_order) >= theta / 2.0
    ic = np.linalg.norm(dm.synergy) >= theta / 2.0
    if ei and ic:
        return "both"
    if ei:
        return "EI-dominant"
    if ic:
        return "IC-dominant"
    raise ArithmeticError(
        "internal-consistency error: neither component reaches theta/2 "
        "although the full influence meets theta")


def save_dividends(dm: DividendMap, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dm.to_json(), indent=2))
