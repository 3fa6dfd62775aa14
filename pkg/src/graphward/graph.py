"""Attributed-graph data model, directory I/O, trigger attachment, and the
score-propagation operator.

Graphs are undirected and simple. Node ids are dense integers in file order;
nodes appended later (e.g. trigger nodes) take the next free ids. All values
are immutable after construction: every operation returns a new graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.sparse as sp


class GraphFormatError(ValueError):
    """Raised on malformed graph directories, with file and line context."""

    def __init__(self, message: str, file: str | Path | None = None, line: int | None = None):
        self.file = str(file) if file is not None else None
        self.line = line
        where = ""
        if self.file is not None:
            where = f" [{self.file}" + (f":{self.line}" if line is not None else "") + "]"
        super().__init__(message + where)


UNLABELED = -1


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Undirected attributed graph with a partial label map and a train mask.

    ``edges`` is canonical: shape (E, 2), each row (u, v) with u < v, sorted,
    no duplicates, no self-loops. ``labels`` uses -1 for unlabeled nodes.
    """

    features: np.ndarray            # (N, d) float64
    edges: np.ndarray               # (E, 2) int64, canonical
    labels: np.ndarray              # (N,) int64, -1 = unlabeled
    train_mask: np.ndarray          # (N,) bool
    num_classes: int

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        edges = canonical_edges(self.edges)
        labels = np.asarray(self.labels, dtype=np.int64)
        mask = np.asarray(self.train_mask, dtype=bool)
        n = feats.shape[0]
        if feats.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if labels.shape != (n,) or mask.shape != (n,):
            raise ValueError("labels/train_mask length must equal node count")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            bad = int(edges.max() if edges.max() >= n else edges.min())
            raise ValueError(f"edge references unknown node id {bad}")
        labeled = labels[labels != UNLABELED]
        if labeled.size and (labeled.min() < 0 or labeled.max() >= self.num_classes):
            raise ValueError("label out of range [0, num_classes)")
        for arr in (feats, edges, labels, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "train_mask", mask)

    # -- basic accessors ----------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def node_ids(self) -> np.ndarray:
        return np.arange(self.num_nodes, dtype=np.int64)

    def train_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.train_mask).astype(np.int64)

    def labeled_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.labels != UNLABELED).astype(np.int64)

    def _adjacency_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) neighbor lists, built lazily and memoized."""
        cached = self.__dict__.get("_adj")
        if cached is None:
            n = self.num_nodes
            if self.num_edges:
                src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
                dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
            else:
                src = dst = np.zeros(0, dtype=np.int64)
            order = np.lexsort((dst, src))
            src, dst = src[order], dst[order]
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.add.at(indptr, src + 1, 1)
            np.cumsum(indptr, out=indptr)
            cached = (indptr, dst)
            object.__setattr__(self, "_adj", cached)
        return cached

    def neighbors(self, i: int) -> np.ndarray:
        if not 0 <= i < self.num_nodes:
            raise KeyError(f"unknown node id {i}")
        indptr, indices = self._adjacency_csr()
        return indices[indptr[i]:indptr[i + 1]]

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    # -- derived graphs -----------------------------------------------------

    def with_features(self, features: np.ndarray) -> "AttributedGraph":
        return AttributedGraph(features, self.edges, self.labels, self.train_mask, self.num_classes)

    def with_labels(self, labels: np.ndarray) -> "AttributedGraph":
        return AttributedGraph(self.features, self.edges, labels, self.train_mask, self.num_classes)


def canonical_edges(edges: np.ndarray) -> np.ndarray:
    """Symmetrize, drop self-loops and duplicates, sort rows as (min, max)."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    keep = lo != hi
    pairs = np.unique(np.stack([lo[keep], hi[keep]], axis=1), axis=0)
    return pairs


@dataclass(frozen=True, eq=False)
class TriggerSubgraph:
    """A trigger: local node features, internal edges, and attachment spec.

    ``single_attach_index`` is the local node connected to the victim in
    single-edge mode; all-edges mode connects every local node.
    """

    features: np.ndarray                 # (TS, d)
    internal_edges: tuple[tuple[int, int], ...] = ()
    single_attach_index: int = 0

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ValueError("trigger needs a (TS, d) feature matrix with TS >= 1")
        ts = feats.shape[0]
        for u, v in self.internal_edges:
            if not (0 <= u < ts and 0 <= v < ts):
                raise ValueError(f"internal edge ({u},{v}) references non-local index")
        if not 0 <= self.single_attach_index < ts:
            raise ValueError("single_attach_index out of range")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "internal_edges", tuple((int(u), int(v)) for u, v in self.internal_edges))

    @property
    def size(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class PoisonRecord:
    """Ground truth of an attack; consumed by evaluation only, never by the defense.

    ``victim_groups`` maps a group key to its victim ids; ``target_labels``
    maps the same keys to that group's target label. Single-target attacks
    have one group "0".
    """

    victims: tuple[int, ...]
    triggers: dict[int, tuple[int, ...]]          # victim id -> trigger node ids
    target_labels: dict[str, int]                 # group key -> label
    victim_groups: dict[str, tuple[int, ...]]     # group key -> victim ids
    attach_mode: str = "all-edges"

    def __post_init__(self):
        vic = set(self.victims)
        seen: set[int] = set()
        for ids in self.triggers.values():
            tri = set(ids)
            if tri & vic:
                raise ValueError("victim and trigger sets overlap")
            if tri & seen:
                raise ValueError("trigger sets of different victims overlap")
            seen |= tri
        grouped = [v for ids in self.victim_groups.values() for v in ids]
        if len(grouped) != len(set(grouped)):
            raise ValueError("victim groups overlap")
        if set(grouped) != vic:
            raise ValueError("victim_groups must partition the victim set")
        if set(self.victim_groups) != set(self.target_labels):
            raise ValueError("victim_groups and target_labels must share keys")

    @property
    def victim_size(self) -> int:
        return len(self.victims)

    def trigger_nodes(self) -> tuple[int, ...]:
        return tuple(sorted({t for ids in self.triggers.values() for t in ids}))

    def poisoned_nodes(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.victims) | set(self.trigger_nodes())))

    def to_json(self) -> dict:
        return {
            "victims": list(self.victims),
            "triggers": {str(v): list(ids) for v, ids in self.triggers.items()},
            "target_labels": {k: int(v) for k, v in self.target_labels.items()},
            "victim_groups": {k: list(v) for k, v in self.victim_groups.items()},
            "attach_mode": self.attach_mode,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PoisonRecord":
        victims = tuple(int(v) for v in obj["victims"])
        groups = obj.get("victim_groups")
        if groups is None:
            # Minimal files without the group map: all victims form group "0".
            groups = {next(iter(obj["target_labels"])): list(victims)}
        return cls(
            victims=victims,
            triggers={int(k): tuple(int(x) for x in v) for k, v in obj["triggers"].items()},
            target_labels={str(k): int(v) for k, v in obj["target_labels"].items()},
            victim_groups={str(k): tuple(int(x) for x in v) for k, v in groups.items()},
            attach_mode=obj.get("attach_mode", "all-edges"),
        )


def save_poison_record(record: PoisonRecord, path: str | Path) -> None:
    Path(path).write_text(json.dumps(record.to_json(), indent=2))


def load_poison_record(path: str | Path) -> PoisonRecord:
    return PoisonRecord.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Directory format I/O
# ---------------------------------------------------------------------------

def load_graph(path: str | Path) -> AttributedGraph:
    """Load a graph directory: manifest.json, nodes.tsv, edges.tsv, features.csv."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise GraphFormatError("missing manifest.json", manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise GraphFormatError(f"invalid JSON: {e}", manifest_path) from e
    try:
        n = int(manifest["num_nodes"])
        d = int(manifest["feature_dim"])
        c = int(manifest["num_classes"])
    except (KeyError, TypeError, ValueError) as e:
        raise GraphFormatError(f"manifest needs integer num_nodes/feature_dim/num_classes ({e})",
                               manifest_path) from e

    labels, train_mask = _load_nodes(root / "nodes.tsv", n, c)
    edges = _load_edges(root / "edges.tsv", n)
    features = _load_features(root / "features.csv", n, d)
    return AttributedGraph(features, edges, labels, train_mask, num_classes=c)


def _load_nodes(path: Path, n: int, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    if not path.exists():
        raise GraphFormatError("missing nodes.tsv", path)
    labels = np.full(n, UNLABELED, dtype=np.int64)
    train_mask = np.zeros(n, dtype=bool)
    rows = 0
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise GraphFormatError(f"expected 3 tab-separated fields, got {len(parts)}", path, lineno)
            ident, label, split = parts
            try:
                node = int(ident)
            except ValueError:
                raise GraphFormatError(f"non-integer node id {ident!r}", path, lineno) from None
            if node != rows:
                raise GraphFormatError(f"node ids must be dense in file order; expected {rows}, got {node}",
                                       path, lineno)
            if node >= n:
                raise GraphFormatError(f"node id {node} exceeds manifest num_nodes {n}", path, lineno)
            if label != "-":
                try:
                    val = int(label)
                except ValueError:
                    raise GraphFormatError(f"label must be an integer or '-', got {label!r}", path, lineno) from None
                if not 0 <= val < num_classes:
                    raise GraphFormatError(f"label {val} out of range [0, {num_classes})", path, lineno)
                labels[node] = val
            if split not in ("train", "test", "none"):
                raise GraphFormatError(f"split must be train/test/none, got {split!r}", path, lineno)
            train_mask[node] = split == "train"
            rows += 1
    if rows != n:
        raise GraphFormatError(f"nodes.tsv has {rows} rows but manifest says {n}", path)
    return labels, train_mask


def _load_edges(path: Path, n: int) -> np.ndarray:
    if not path.exists():
        raise GraphFormatError("missing edges.tsv", path)
    pairs = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise GraphFormatError(f"expected 2 tab-separated fields, got {len(parts)}", path, lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"non-integer endpoint in {line!r}", path, lineno) from None
            if not (0 <= u < n and 0 <= v < n):
                bad = u if not 0 <= u < n else v
                raise GraphFormatError(f"dangling edge endpoint {bad}", path, lineno)
            pairs.append((u, v))
    return np.array(pairs, dtype=np.int64) if pairs else np.zeros((0, 2), dtype=np.int64)


def _load_features(path: Path, n: int, d: int) -> np.ndarray:
    if not path.exists():
        raise GraphFormatError("missing features.csv", path)
    try:
        frame = pd.read_csv(path, header=None, dtype=np.float64,
                            float_precision="round_trip")
    except Exception:
        _diagnose_features(path, d)   # raises with file:line
        raise
    arr = frame.to_numpy(dtype=np.float64)
    if arr.shape[0] != n:
        raise GraphFormatError(f"features.csv has {arr.shape[0]} rows but manifest says {n}", path)
    if arr.shape[1] != d:
        _diagnose_features(path, d)
        raise GraphFormatError(f"feature rows have {arr.shape[1]} columns, expected {d}", path)
    if not np.isfinite(arr).all():
        bad = int(np.argwhere(~np.isfinite(arr).all(axis=1))[0, 0]) + 1
        raise GraphFormatError("non-finite feature value", path, bad)
    return arr


def _diagnose_features(path: Path, d: int) -> None:
    """Slow line scan to attribute a parse/shape failure to a specific line."""
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.strip().split(",")
            if len(parts) != d:
                raise GraphFormatError(f"row has {len(parts)} values, expected {d}", path, lineno)
            for p in parts:
                try:
                    float(p)
                except ValueError:
                    raise GraphFormatError(f"non-numeric feature value {p!r}", path, lineno) from None


def save_graph(g: AttributedGraph, path: str | Path) -> None:
    """Write a graph in the directory format read by :func:`load_graph`."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    (root / "manifest.json").write_text(json.dumps(
        {"num_nodes": g.num_nodes, "feature_dim": g.feature_dim, "num_classes": g.num_classes},
        indent=2))
    with (root / "nodes.tsv").open("w") as fh:
        for i in range(g.num_nodes):
            label = "-" if g.labels[i] == UNLABELED else str(int(g.labels[i]))
            split = "train" if g.train_mask[i] else "none"
            fh.write(f"{i}\t{label}\t{split}\n")
    with (root / "edges.tsv").open("w") as fh:
        for u, v in g.edges:
            fh.write(f"{u}\t{v}\n")
    pd.DataFrame(g.features).to_csv(root / "features.csv", header=False, index=False,
                                    float_format="%.17g")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def attach_trigger(g: AttributedGraph, victim: int, trigger: TriggerSubgraph,
                   mode: str = "all-edges") -> AttributedGraph:
    """Append the trigger's nodes and wire them to the victim.

    all-edges connects the victim to every trigger node; single-edge connects
    it only to ``trigger.single_attach_index``. Appended nodes are unlabeled
    and outside the train mask.
    """
    if not 0 <= victim < g.num_nodes:
        raise KeyError(f"unknown victim id {victim}")
    if mode not in ("all-edges", "single-edge"):
        raise ValueError(f"unknown attachment mode {mode!r}")
    if trigger.features.shape[1] != g.feature_dim:
        raise ValueError("trigger feature dimension does not match host graph")
    base = g.num_nodes
    ts = trigger.size
    features = np.vstack([g.features, trigger.features])
    labels = np.concatenate([g.labels, np.full(ts, UNLABELED, dtype=np.int64)])
    mask = np.concatenate([g.train_mask, np.zeros(ts, dtype=bool)])
    new_edges = [(base + u, base + v) for u, v in trigger.internal_edges]
    if mode == "all-edges":
        new_edges += [(victim, base + k) for k in range(ts)]
    else:
        new_edges.append((victim, base + trigger.single_attach_index))
    edges = np.vstack([g.edges, np.array(new_edges, dtype=np.int64)]) if new_edges else g.edges
    return AttributedGraph(features, edges, labels, mask, g.num_classes)


def remove_nodes(g: AttributedGraph, nodes) -> tuple[AttributedGraph, np.ndarray]:
    """Drop nodes (and incident edges); return the new graph and an old->new id
    map with -1 for removed ids."""
    drop = np.zeros(g.num_nodes, dtype=bool)
    idx = np.asarray(sorted(set(int(v) for v in nodes)), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= g.num_nodes):
        raise KeyError("remove_nodes: unknown node id")
    drop[idx] = True
    keep = ~drop
    old_to_new = np.full(g.num_nodes, -1, dtype=np.int64)
    old_to_new[keep] = np.arange(int(keep.sum()), dtype=np.int64)
    if g.num_edges:
        e = g.edges
        kept_rows = keep[e[:, 0]] & keep[e[:, 1]]
        edges = old_to_new[e[kept_rows]]
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    out = AttributedGraph(g.features[keep], edges, g.labels[keep], g.train_mask[keep], g.num_classes)
    return out, old_to_new


def k_hop_neighborhood(g: AttributedGraph, seeds, hops: int) -> set[int]:
    """All nodes within ``hops`` edges of any seed, seeds included."""
    if hops < 0:
        raise ValueError("hop count must be >= 0")
    seed_list = [int(s) for s in seeds]
    for s in seed_list:
        if not 0 <= s < g.num_nodes:
            raise KeyError(f"unknown seed id {s}")
    indptr, indices = g._adjacency_csr()
    visited = np.zeros(g.num_nodes, dtype=bool)
    frontier = np.array(sorted(set(seed_list)), dtype=np.int64)
    visited[frontier] = True
    for _ in range(hops):
        if frontier.size == 0:
            break
        nxt = []
        for u in frontier:
            nxt.append(indices[indptr[u]:indptr[u + 1]])
        cand = np.unique(np.concatenate(nxt)) if nxt else np.zeros(0, dtype=np.int64)
        fresh = cand[~visited[cand]]
        visited[fresh] = True
        frontier = fresh
    return set(np.flatnonzero(visited).tolist())


def mask_nodes(g: AttributedGraph, to_mask, token: np.ndarray) -> AttributedGraph:
    """Replace the feature rows of ``to_mask`` with ``token``; structure unchanged."""
    token = np.asarray(token, dtype=np.float64).ravel()
    if token.shape[0] != g.feature_dim:
        raise ValueError(f"token has dimension {token.shape[0]}, expected {g.feature_dim}")
    idx = np.asarray(sorted(set(int(v) for v in to_mask)), dtype=np.int64)
    if idx.size == 0:
        return g
    if idx.min() < 0 or idx.max() >= g.num_nodes:
        raise KeyError("mask_nodes: unknown node id")
    features = g.features.copy()
    features[idx] = token
    return g.with_features(features)


@dataclass(frozen=True)
class PropagationOperator:
    """Symmetric-normalized operator of A' = A - A_train + I.

    A_train holds edges whose two endpoints are both in the given training
    set; every node gets a self-loop. Application computes D'^-1/2 A' D'^-1/2 s.
    """

    matrix: sp.csr_matrix = field(repr=False)

    def apply(self, scores: np.ndarray) -> np.ndarray:
        s = np.asarray(scores, dtype=np.float64)
        return self.matrix @ s

    def apply_n(self, scores: np.ndarray, times: int) -> np.ndarray:
        s = np.asarray(scores, dtype=np.float64)
        for _ in range(times):
            s = self.matrix @ s
        return s


def build_propagation_operator(g: AttributedGraph, train_set) -> PropagationOperator:
    train = np.zeros(g.num_nodes, dtype=bool)
    idx = np.asarray([int(v) for v in train_set], dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= g.num_nodes):
        raise KeyError("build_propagation_operator: unknown node id")
    train[idx] = True
    n = g.num_nodes
    if g.num_edges:
        e = g.edges
        keep = ~(train[e[:, 0]] & train[e[:, 1]])
        kept = e[keep]
        src = np.concatenate([kept[:, 0], kept[:, 1], np.arange(n)])
        dst = np.concatenate([kept[:, 1], kept[:, 0], np.arange(n)])
    else:
        src = dst = np.arange(n)
    data = np.ones(src.shape[0], dtype=np.float64)
    a = sp.csr_matrix((data, (src, dst)), shape=(n, n))
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    norm = sp.diags(inv_sqrt) @ a @ sp.diags(inv_sqrt)
    return PropagationOperator(matrix=norm.tocsr())
