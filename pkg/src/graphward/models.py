"""Two-layer message-passing models and their training loops.

Both the node classifier and the masked autoencoder are 2-layer networks with
either attention aggregation (GAT-style, default for the autoencoder) or
degree-normalized mean aggregation (GCN-style, default for the classifier).
Layers are written directly on edge lists so that single-node masking can be
re-evaluated incrementally from a cached full pass: masking one node only
changes layer-1 activations of the node and its neighbors, and layer-2
outputs within two hops, so a query touches just that subgraph while
returning values that match a full recomputation.

Everything runs in float64 on CPU. Training is seeded and single-threaded
deterministic: the same seed yields bitwise-identical parameters.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from weakref import WeakKeyDictionary

import numpy as np
import torch
import torch.nn.functional as F

from .graph import AttributedGraph, mask_nodes

log = logging.getLogger(__name__)

warnings.filterwarnings("ignore", message="index_reduce\\(\\) is in beta")

DTYPE = torch.float64
LEAKY_SLOPE = 0.2
NUM_LAYERS = 2  # receptive field of every model in this package


class TrainingError(RuntimeError):
    """Raised when a training loop produces a non-finite or non-decreasing loss."""

    def __init__(self, message: str, epoch: int | None = None):
        self.epoch = epoch
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters shared by both model kinds.

    ``mask_rate`` and ``gamma`` only matter for the autoencoder.
    """

    arch: str = "attention"          # "attention" (GAT-like) or "mean" (GCN-like)
    hidden: int = 64
    lr: float = 1e-4
    epochs: int = 400
    mask_rate: float = 0.1
    gamma: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ("attention", "mean"):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be > 0")
        if not 0.0 < self.mask_rate < 1.0:
            raise ValueError("mask rate must lie in (0, 1)")
        if self.gamma <= 1.0:
            raise ValueError("sensitivity exponent gamma must be > 1")
        if self.hidden < 1 or self.epochs < 1:
            raise ValueError("hidden width and epochs must be >= 1")


def default_autoencoder_config(seed: int = 0) -> ModelConfig:
    return ModelConfig(arch="attention", hidden=64, lr=1e-4, epochs=400,
                       mask_rate=0.1, gamma=3.0, seed=seed)


def default_classifier_config(seed: int = 0) -> ModelConfig:
    return ModelConfig(arch="mean", hidden=64, lr=0.01, epochs=200, seed=seed)


# ---------------------------------------------------------------------------
# Graph tensors
# ---------------------------------------------------------------------------

class GraphTensors:
    """Edge-list view of a graph for message passing.

    Directed edges in both directions plus one self-loop per node, sorted by
    (dst, src); ``dst_ptr`` slices the arrays per destination node.
    """

    def __init__(self, g: AttributedGraph):
        n = g.num_nodes
        if g.num_edges:
            e = g.edges
            src = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
            dst = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
        else:
            src = dst = np.arange(n)
        order = np.lexsort((src, dst))
        src, dst = src[order], dst[order]
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(ptr, dst + 1, 1)
        np.cumsum(ptr, out=ptr)
        deg_tilde = np.diff(ptr).astype(np.float64)   # degree + self-loop
        coef = 1.0 / np.sqrt(deg_tilde[src] * deg_tilde[dst])

        self.n = n
        self.edge_src = torch.from_numpy(np.ascontiguousarray(src))
        self.edge_dst = torch.from_numpy(np.ascontiguousarray(dst))
        self.dst_ptr = torch.from_numpy(ptr)
        self.gcn_coef = torch.from_numpy(coef).to(DTYPE)
        self.x = torch.from_numpy(np.array(g.features, copy=True)).to(DTYPE)

    def in_edges(self, node: int) -> tuple[torch.Tensor, torch.Tensor]:
        """(edge positions, source ids) of the node's incoming slice."""
        lo, hi = int(self.dst_ptr[node]), int(self.dst_ptr[node + 1])
        pos = torch.arange(lo, hi, dtype=torch.int64)
        return pos, self.edge_src[lo:hi]

    def in_edges_many(self, nodes: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Concatenated incoming slices for several nodes.

        Returns (edge positions, source ids, segment index into ``nodes``).
        """
        lo = self.dst_ptr[nodes]
        hi = self.dst_ptr[nodes + 1]
        counts = hi - lo
        pos = torch.cat([torch.arange(int(a), int(b), dtype=torch.int64) for a, b in zip(lo, hi)])
        seg = torch.repeat_interleave(torch.arange(len(nodes), dtype=torch.int64), counts)
        return pos, self.edge_src[pos], seg


_graph_tensor_cache: "WeakKeyDictionary[AttributedGraph, GraphTensors]" = WeakKeyDictionary()


def graph_tensors(g: AttributedGraph) -> GraphTensors:
    gt = _graph_tensor_cache.get(g)
    if gt is None:
        gt = GraphTensors(g)
        _graph_tensor_cache[g] = gt
    return gt


def _segment_softmax(logits: torch.Tensor, seg: torch.Tensor, num_seg: int) -> torch.Tensor:
    with torch.no_grad():
        seg_max = torch.full((num_seg,), -math.inf, dtype=logits.dtype)
        seg_max = seg_max.index_reduce(0, seg, logits.detach(), "amax", include_self=False)
    w = torch.exp(logits - seg_max[seg])
    denom = torch.zeros(num_seg, dtype=logits.dtype).index_add(0, seg, w)
    return w / denom[seg]


def _segment_sum(values: torch.Tensor, seg: torch.Tensor, num_seg: int) -> torch.Tensor:
    out = torch.zeros((num_seg, values.shape[1]), dtype=values.dtype)
    return out.index_add(0, seg, values)


# ---------------------------------------------------------------------------
# The network
# ---------------------------------------------------------------------------

@dataclass
class LayerCache:
    """Per-node reusable values of one layer's unmasked pass.

    ``vals`` is what gets aggregated along edges: the projected features for
    narrow outputs, the raw inputs for wide ones (the projection then happens
    after aggregation, which is the same linear map at a fraction of the edge
    traffic). Attention scalars are cached per node.
    """

    vals: torch.Tensor
    s_ctr: torch.Tensor | None = None
    s_nbr: torch.Tensor | None = None


class MPLayer:
    """One message-passing layer over (w, b) with optional edge attention.

    Aggregation order is chosen by shape: project-then-aggregate when the
    output is the narrower side, aggregate-then-project otherwise.
    """

    def __init__(self, arch: str, w: torch.Tensor, b: torch.Tensor,
                 a_ctr: torch.Tensor | None, a_nbr: torch.Tensor | None):
        self.arch = arch
        self.w, self.b = w, b
        self.a_ctr, self.a_nbr = a_ctr, a_nbr
        self.project_first = w.shape[1] <= w.shape[0]

    def _vals_and_scores(self, h: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor | None, torch.Tensor | None]:
        if self.project_first:
            vals = h @ self.w
            if self.arch == "attention":
                return vals, vals @ self.a_ctr, vals @ self.a_nbr
            return vals, None, None
        if self.arch == "attention":
            # fold the projection into the attention vectors: (hW)a == h(Wa)
            return h, h @ (self.w @ self.a_ctr), h @ (self.w @ self.a_nbr)
        return h, None, None

    def forward(self, h: torch.Tensor, gt: GraphTensors) -> torch.Tensor:
        src, dst = gt.edge_src, gt.edge_dst
        vals, s_ctr, s_nbr = self._vals_and_scores(h)
        if self.arch == "mean":
            agg = _segment_sum(gt.gcn_coef.unsqueeze(1) * vals[src], dst, gt.n)
        else:
            e = F.leaky_relu(s_ctr[dst] + s_nbr[src], LEAKY_SLOPE)
            alpha = _segment_softmax(e, dst, gt.n)
            agg = _segment_sum(alpha.unsqueeze(1) * vals[src], dst, gt.n)
        return agg + self.b if self.project_first else agg @ self.w + self.b

    def forward_cached(self, h: torch.Tensor, gt: GraphTensors) -> tuple[torch.Tensor, LayerCache]:
        vals, s_ctr, s_nbr = self._vals_and_scores(h)
        cache = LayerCache(vals=vals, s_ctr=s_ctr, s_nbr=s_nbr)
        src, dst = gt.edge_src, gt.edge_dst
        if self.arch == "mean":
            agg = _segment_sum(gt.gcn_coef.unsqueeze(1) * vals[src], dst, gt.n)
        else:
            e = F.leaky_relu(s_ctr[dst] + s_nbr[src], LEAKY_SLOPE)
            alpha = _segment_softmax(e, dst, gt.n)
            agg = _segment_sum(alpha.unsqueeze(1) * vals[src], dst, gt.n)
        out = agg + self.b if self.project_first else agg @ self.w + self.b
        return out, cache

    def output_rows(self, cache: LayerCache, gt: GraphTensors, query: torch.Tensor,
                    changed: torch.Tensor, changed_inputs: torch.Tensor) -> torch.Tensor:
        """Outputs at ``query`` given replacement input rows for ``changed``.

        Reads every other value from the cache, so the rows equal a full
        recomputation with those inputs substituted.
        """
        repl_vals, repl_ctr, repl_nbr = self._vals_and_scores(changed_inputs)
        pos, srcs, seg = gt.in_edges_many(query)
        vals = cache.vals.index_select(0, srcs)
        hit = srcs.unsqueeze(1) == changed.unsqueeze(0)
        has = hit.any(dim=1)
        which = hit.to(torch.int64).argmax(dim=1)
        vals[has] = repl_vals[which[has]]
        if self.arch == "mean":
            agg = _segment_sum(gt.gcn_coef[pos].unsqueeze(1) * vals, seg, len(query))
        else:
            s_ctr = cache.s_ctr.index_select(0, query)
            q_hit = query.unsqueeze(1) == changed.unsqueeze(0)
            q_has = q_hit.any(dim=1)
            q_which = q_hit.to(torch.int64).argmax(dim=1)
            s_ctr[q_has] = repl_ctr[q_which[q_has]]
            s_nbr = cache.s_nbr.index_select(0, srcs)
            s_nbr[has] = repl_nbr[which[has]]
            e = F.leaky_relu(s_ctr[seg] + s_nbr, LEAKY_SLOPE)
            alpha = _segment_softmax(e, seg, len(query))
            agg = _segment_sum(alpha.unsqueeze(1) * vals, seg, len(query))
        return agg + self.b if self.project_first else agg @ self.w + self.b


class TwoLayerNet:
    """Dense parameters of a 2-layer message-passing network."""

    def __init__(self, arch: str, in_dim: int, hidden: int, out_dim: int,
                 gen: torch.Generator | None = None):
        self.arch = arch
        self.in_dim, self.hidden, self.out_dim = in_dim, hidden, out_dim

        def glorot(rows, cols):
            limit = math.sqrt(6.0 / (rows + cols))
            t = torch.empty(rows, cols, dtype=DTYPE)
            t.uniform_(-limit, limit, generator=gen)
            return t.requires_grad_(True)

        def att_vec(dim):
            limit = 1.0 / math.sqrt(dim)
            t = torch.empty(dim, dtype=DTYPE)
            t.uniform_(-limit, limit, generator=gen)
            return t.requires_grad_(True)

        self.w1 = glorot(in_dim, hidden)
        self.b1 = torch.zeros(hidden, dtype=DTYPE, requires_grad=True)
        self.w2 = glorot(hidden, out_dim)
        self.b2 = torch.zeros(out_dim, dtype=DTYPE, requires_grad=True)
        if arch == "attention":
            self.a1_ctr, self.a1_nbr = att_vec(hidden), att_vec(hidden)
            self.a2_ctr, self.a2_nbr = att_vec(out_dim), att_vec(out_dim)
        else:
            self.a1_ctr = self.a1_nbr = self.a2_ctr = self.a2_nbr = None

    def parameters(self) -> list[torch.Tensor]:
        ps = [self.w1, self.b1, self.w2, self.b2]
        if self.arch == "attention":
            ps += [self.a1_ctr, self.a1_nbr, self.a2_ctr, self.a2_nbr]
        return ps

    def layer1(self) -> MPLayer:
        return MPLayer(self.arch, self.w1, self.b1, self.a1_ctr, self.a1_nbr)

    def layer2(self) -> MPLayer:
        return MPLayer(self.arch, self.w2, self.b2, self.a2_ctr, self.a2_nbr)

    def forward(self, x: torch.Tensor, gt: GraphTensors) -> torch.Tensor:
        h1 = F.elu(self.layer1().forward(x, gt))
        return self.layer2().forward(h1, gt)

    # -- cached/incremental inference ------------------------------------

    def full_pass(self, g: AttributedGraph) -> "PassCache":
        gt = graph_tensors(g)
        with torch.no_grad():
            out1, c1 = self.layer1().forward_cached(gt.x, gt)
            h1 = F.elu(out1)
            out, c2 = self.layer2().forward_cached(h1, gt)
        return PassCache(net=self, gt=gt, h1=h1, out=out, c1=c1, c2=c2)


@dataclass
class PassCache:
    """Per-node intermediates of one unmasked forward pass."""

    net: TwoLayerNet
    gt: GraphTensors
    h1: torch.Tensor
    out: torch.Tensor
    c1: LayerCache
    c2: LayerCache

    def masked_outputs(self, node: int, mask_vec: torch.Tensor, query: torch.Tensor) -> torch.Tensor:
        """Layer-2 outputs at ``query`` after replacing ``node``'s features.

        Only activations inside the masked node's 2-hop subgraph are
        recomputed; all other values come from the cache, so the result
        matches a full pass on the masked graph.
        """
        net, gt = self.net, self.gt
        with torch.no_grad():
            _, srcs_of_node = gt.in_edges(int(node))
            touched = srcs_of_node.clone()   # N(node) plus node's own self-loop
            changed = torch.tensor([int(node)], dtype=torch.int64)
            h1_new = F.elu(net.layer1().output_rows(
                self.c1, gt, query=touched, changed=changed,
                changed_inputs=mask_vec.unsqueeze(0)))
            return net.layer2().output_rows(
                self.c2, gt, query=query, changed=touched, changed_inputs=h1_new)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def cosine_reconstruction_terms(x_true: torch.Tensor, x_rec: torch.Tensor,
                                gamma: float) -> torch.Tensor:
    """Per-row (1 - cos)^gamma; rows with zero-norm targets score the 2^gamma worst case."""
    norms = torch.linalg.norm(x_true, dim=1) * torch.linalg.norm(x_rec, dim=1)
    cos = (x_true * x_rec).sum(dim=1) / torch.clamp(norms, min=1e-30)
    terms = (1.0 - cos) ** gamma
    zero_rows = torch.linalg.norm(x_true, dim=1) == 0
    if bool(zero_rows.any()):
        terms = torch.where(zero_rows, torch.full_like(terms, 2.0 ** gamma), terms)
    return terms


def autoencoder_loss(net: TwoLayerNet, mask_token: torch.Tensor, g: AttributedGraph,
                     mask_idx: torch.Tensor, gamma: float) -> torch.Tensor:
    """Masked cosine reconstruction loss, averaged over the mask set."""
    gt = graph_tensors(g)
    x_hat = gt.x.clone()
    x_hat[mask_idx] = mask_token
    rec = net.forward(x_hat, gt)
    terms = cosine_reconstruction_terms(gt.x[mask_idx], rec[mask_idx], gamma)
    return terms.mean()


def classification_loss(net: TwoLayerNet, g: AttributedGraph,
                        labeled: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    gt = graph_tensors(g)
    logits = net.forward(gt.x, gt)
    return F.cross_entropy(logits[labeled], y)


# ---------------------------------------------------------------------------
# Trained model wrappers
# ---------------------------------------------------------------------------

@dataclass
class Classifier:
    """A trained node classifier: graph in, per-node logits out."""

    net: TwoLayerNet
    num_classes: int
    config: ModelConfig
    loss_trace: list[float] = field(default_factory=list, repr=False)
    _caches: WeakKeyDictionary = field(default_factory=WeakKeyDictionary, repr=False)

    def predict_logits(self, g: AttributedGraph) -> np.ndarray:
        if g.feature_dim != self.net.in_dim:
            raise ValueError(f"graph has {g.feature_dim}-dim features, model expects {self.net.in_dim}")
        return self.pass_cache(g).out.numpy().copy()

    def pass_cache(self, g: AttributedGraph) -> PassCache:
        cache = self._caches.get(g)
        if cache is None:
            cache = self.net.full_pass(g)
            self._caches[g] = cache
        return cache


@dataclass
class MaskedAutoencoder:
    """A trained masked feature autoencoder with its learned mask token."""

    net: TwoLayerNet
    mask_token: torch.Tensor
    gamma: float
    config: ModelConfig
    loss_trace: list[float] = field(default_factory=list, repr=False)
    _caches: WeakKeyDictionary = field(default_factory=WeakKeyDictionary, repr=False)

    def pass_cache(self, g: AttributedGraph) -> PassCache:
        cache = self._caches.get(g)
        if cache is None:
            cache = self.net.full_pass(g)
            self._caches[g] = cache
        return cache

    def reconstruction_loss(self, g: AttributedGraph, node: int, fast: bool = True) -> float:
        """Mask exactly {node}, reconstruct, return (1 - cos)^gamma at the node."""
        if not 0 <= node < g.num_nodes:
            raise KeyError(f"unknown node id {node}")
        x_true = torch.from_numpy(np.array(g.features[node], copy=True)).to(DTYPE).unsqueeze(0)
        if fast:
            cache = self.pass_cache(g)
            query = torch.tensor([node], dtype=torch.int64)
            rec = cache.masked_outputs(node, self.mask_token.detach(), query)
        else:
            masked = mask_nodes(g, [node], self.mask_token.detach().numpy())
            gt = graph_tensors(masked)
            with torch.no_grad():
                rec = self.net.forward(gt.x, gt)[node].unsqueeze(0)
        return float(cosine_reconstruction_terms(x_true, rec, self.gamma)[0])

    def reconstruct(self, g: AttributedGraph, mask_set) -> np.ndarray:
        """Full reconstruction matrix with ``mask_set`` replaced by the token."""
        masked = mask_nodes(g, mask_set, self.mask_token.detach().numpy())
        gt = graph_tensors(masked)
        with torch.no_grad():
            return self.net.forward(gt.x, gt).numpy()


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train_classifier(g: AttributedGraph, labeled, cfg: ModelConfig) -> Classifier:
    """Fit a 2-layer classifier with cross-entropy on the labeled nodes."""
    labeled_idx = np.asarray(sorted(int(v) for v in labeled), dtype=np.int64)
    if labeled_idx.size == 0:
        raise ValueError("train_classifier: empty labeled set")
    if (g.labels[labeled_idx] < 0).any():
        raise ValueError("train_classifier: labeled set contains unlabeled nodes")
    gen = torch.Generator().manual_seed(cfg.seed)
    net = TwoLayerNet(cfg.arch, g.feature_dim, cfg.hidden, g.num_classes, gen)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    idx = torch.from_numpy(labeled_idx)
    y = torch.from_numpy(np.asarray(g.labels[labeled_idx]))
    trace: list[float] = []
    for epoch in range(cfg.epochs):
        opt.zero_grad()
        loss = classification_loss(net, g, idx, y)
        val = float(loss.detach())
        if not math.isfinite(val):
            raise TrainingError("non-finite classifier loss", epoch)
        trace.append(val)
        loss.backward()
        opt.step()
    if trace[-1] > trace[0]:
        raise TrainingError(f"classifier loss increased: {trace[0]:.6g} -> {trace[-1]:.6g}",
                            cfg.epochs - 1)
    for p in net.parameters():
        p.requires_grad_(False)
    return Classifier(net=net, num_classes=g.num_classes, config=cfg, loss_trace=trace)


def train_masked_autoencoder(g: AttributedGraph, cfg: ModelConfig) -> MaskedAutoencoder:
    """Train the masked feature autoencoder with a fresh mask set each epoch."""
    n = g.num_nodes
    k = math.ceil(cfg.mask_rate * n)
    if k < 1:
        raise ValueError("mask set would be empty")
    if (np.linalg.norm(g.features, axis=1) == 0).any():
        log.warning("graph has zero-norm feature rows; their reconstruction terms "
                    "are pinned to the worst case 2^gamma")
    gen = torch.Generator().manual_seed(cfg.seed)
    net = TwoLayerNet(cfg.arch, g.feature_dim, cfg.hidden, g.feature_dim, gen)
    token = torch.zeros(g.feature_dim, dtype=DTYPE, requires_grad=True)
    opt = torch.optim.Adam(net.parameters() + [token], lr=cfg.lr)

    # progress is judged on one fixed probe mask: per-epoch masks are resampled,
    # so raw first/last epoch losses are not comparable
    probe_idx = torch.randperm(n, generator=gen)[:k]

    def probe_loss() -> float:
        with torch.no_grad():
            return float(autoencoder_loss(net, token, g, probe_idx, cfg.gamma))

    start = probe_loss()
    trace: list[float] = []
    for epoch in range(cfg.epochs):
        mask_idx = torch.randperm(n, generator=gen)[:k]
        opt.zero_grad()
        loss = autoencoder_loss(net, token, g, mask_idx, cfg.gamma)
        val = float(loss.detach())
        if not math.isfinite(val):
            raise TrainingError("non-finite reconstruction loss", epoch)
        trace.append(val)
        loss.backward()
        opt.step()
    end = probe_loss()
    if end > start:
        raise TrainingError(f"autoencoder made no progress: probe loss {start:.6g} -> {end:.6g}",
                            cfg.epochs - 1)
    for p in net.parameters():
        p.requires_grad_(False)
    token.requires_grad_(False)
    return MaskedAutoencoder(net=net, mask_token=token, gamma=cfg.gamma, config=cfg, loss_trace=trace)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _net_state(net: TwoLayerNet) -> dict:
    names = ["w1", "b1", "w2", "b2"] + (
        ["a1_ctr", "a1_nbr", "a2_ctr", "a2_nbr"] if net.arch == "attention" else [])
    return {name: getattr(net, name).detach().numpy().tolist() for name in names}


def _net_from_state(arch: str, in_dim: int, hidden: int, out_dim: int, state: dict) -> TwoLayerNet:
    net = TwoLayerNet(arch, in_dim, hidden, out_dim, gen=None)
    for name, value in state.items():
        setattr(net, name, torch.tensor(value, dtype=DTYPE))
    return net


def save_checkpoint(model: Classifier | MaskedAutoencoder, path: str | Path) -> None:
    net = model.net
    payload = {
        "arch": net.arch,
        "in_dim": net.in_dim,
        "hidden": net.hidden,
        "out_dim": net.out_dim,
        "seed": model.config.seed,
        "config": {"arch": model.config.arch, "hidden": model.config.hidden,
                   "lr": model.config.lr, "epochs": model.config.epochs,
                   "mask_rate": model.config.mask_rate, "gamma": model.config.gamma,
                   "seed": model.config.seed},
        "params": _net_state(net),
    }
    if isinstance(model, Classifier):
        payload["kind"] = "classifier"
        payload["num_classes"] = model.num_classes
    else:
        payload["kind"] = "autoencoder"
        payload["gamma"] = model.gamma
        payload["mask_token"] = model.mask_token.detach().numpy().tolist()
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path: str | Path) -> Classifier | MaskedAutoencoder:
    payload = json.loads(Path(path).read_text())
    cfg = ModelConfig(**payload["config"])
    net = _net_from_state(payload["arch"], payload["in_dim"], payload["hidden"],
                          payload["out_dim"], payload["params"])
    if payload["kind"] == "classifier":
        return Classifier(net=net, num_classes=payload["num_classes"], config=cfg)
    token = torch.tensor(payload["mask_token"], dtype=DTYPE)
    return MaskedAutoencoder(net=net, mask_token=token, gamma=payload["gamma"], config=cfg)
