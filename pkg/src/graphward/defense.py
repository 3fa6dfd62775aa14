"""Defended training: filter identified trigger nodes out of the graph, drop
identified victims from the labeled pool, and jointly unlearn each group's
trigger-target association on the original poisoned graph.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .graph import AttributedGraph, remove_nodes
from .localize import DetectionResult
from .models import (Classifier, ModelConfig, TrainingError, TwoLayerNet,
                     graph_tensors, train_classifier)


@dataclass
class DefenseOutcome:
    classifier: Classifier
    detection: DetectionResult
    unlearning_ran: bool
    clean_loss_trace: list[float] = field(default_factory=list, repr=False)
    unlearn_loss_trace: list[float] = field(default_factory=list, repr=False)
    target_prob_trace: list[float] = field(default_factory=list, repr=False)

    def training_log(self) -> dict:
        return {"unlearning_ran": self.unlearning_ran,
                "clean_loss": self.clean_loss_trace,
                "unlearn_loss": self.unlearn_loss_trace,
                "mean_target_prob_on_identified": self.target_prob_trace}

    def save_training_log(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.training_log()))


def filter_graph(g_t: AttributedGraph, det: DetectionResult
                 ) -> tuple[AttributedGraph, np.ndarray, np.ndarray]:
    """Remove identified trigger nodes; drop identified victims from the
    labeled pool but keep them as unlabeled structure.

    Returns (filtered graph, labeled pool in filtered-graph ids, old->new map).
    """
    if det.abstained:
        raise ValueError("filter_graph requires a non-abstained detection")
    trigger_ids = det.all_triggers()
    filtered, old_to_new = remove_nodes(g_t, trigger_ids)
    excluded = set(det.all_victims())
    keep_old = [v for v in np.flatnonzero(g_t.train_mask & (g_t.labels >= 0))
                if int(v) not in excluded and old_to_new[v] >= 0]
    pool = np.asarray(sorted(int(old_to_new[v]) for v in keep_old), dtype=np.int64)
    return filtered, pool, old_to_new


def joint_defense_loss(net: TwoLayerNet, g_f: AttributedGraph, pool: torch.Tensor,
                       pool_labels: torch.Tensor, g_t: AttributedGraph,
                       unlearn_nodes: torch.Tensor, unlearn_targets: torch.Tensor,
                       num_classes: int
                       ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, float]:
    """Summed cross-entropy on the filtered graph plus the negated, capped
    cross-entropy toward each group's target on the poisoned graph.

    Returns (total, clean term, unlearn term, mean target prob on identified
    nodes). Each unlearn summand is the node's log-probability of its group
    target, clamped below at -ln(5C) so the push stops once p(target) < 1/(5C).
    """
    gt_f = graph_tensors(g_f)
    logits_f = net.forward(gt_f.x, gt_f)
    clean = F.cross_entropy(logits_f[pool], pool_labels, reduction="sum")

    if len(unlearn_nodes):
        gt_t = graph_tensors(g_t)
        logits_t = net.forward(gt_t.x, gt_t)
        logp = F.log_softmax(logits_t[unlearn_nodes], dim=1)
        picked = logp.gather(1, unlearn_targets.unsqueeze(1)).squeeze(1)
        unlearn = torch.clamp_min(picked, -math.log(5.0 * num_classes)).sum()
        mean_prob = float(picked.detach().exp().mean())
    else:
        unlearn = torch.zeros((), dtype=clean.dtype)
        mean_prob = float("nan")
    return clean + unlearn, clean, unlearn, mean_prob


def removal_only_train(g_t: AttributedGraph, det: DetectionResult, cfg: ModelConfig
                       ) -> DefenseOutcome:
    """Ablation path: drop identified nodes and retrain normally, no unlearning."""
    if det.abstained:
        return robust_train(g_t, det, cfg)
    g_f, pool, _ = filter_graph(g_t, det)
    if pool.size == 0:
        raise ValueError("removal_only_train: filtering removed every labeled node")
    clf = train_classifier(g_f, pool, cfg)
    return DefenseOutcome(classifier=clf, detection=det, unlearning_ran=False,
                          clean_loss_trace=list(clf.loss_trace))


def robust_train(g_t: AttributedGraph, det: DetectionResult, cfg: ModelConfig
                 ) -> DefenseOutcome:
    """Train the defended classifier.

    Abstained detection degenerates to standard training on the poisoned
    graph (same seed, bit-identical). Otherwise each step evaluates the clean
    term on the filtered graph and the unlearn term on the original one.
    """
    if det.abstained:
        labeled = np.flatnonzero(g_t.train_mask & (g_t.labels >= 0))
        clf = train_classifier(g_t, labeled, cfg)
        return DefenseOutcome(classifier=clf, detection=det, unlearning_ran=False,
                              clean_loss_trace=list(clf.loss_trace))

    g_f, pool, _ = filter_graph(g_t, det)
    if pool.size == 0:
        raise ValueError("robust_train: filtering removed every labeled node")
    unlearn_pairs = [(v, lab) for lab, vics, trigs in
                     zip(det.group_labels, det.victims, det.triggers)
                     for v in (*vics, *trigs)]
    unlearn_nodes = torch.tensor([p[0] for p in unlearn_pairs], dtype=torch.int64)
    unlearn_targets = torch.tensor([p[1] for p in unlearn_pairs], dtype=torch.int64)

    gen = torch.Generator().manual_seed(cfg.seed)
    net = TwoLayerNet(cfg.arch, g_t.feature_dim, cfg.hidden, g_t.num_classes, gen)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    pool_t = torch.from_numpy(pool)
    pool_labels = torch.from_numpy(np.asarray(g_f.labels[pool]))

    clean_trace, unlearn_trace, prob_trace = [], [], []
    for epoch in range(cfg.epochs):
        opt.zero_grad()
        total, clean, unlearn, mean_prob = joint_defense_loss(
            net, g_f, pool_t, pool_labels, g_t, unlearn_nodes, unlearn_targets,
            g_t.num_classes)
        if not math.isfinite(float(total)):
            raise TrainingError("non-finite defense loss", epoch)
        clean_trace.append(float(clean))
        unlearn_trace.append(float(unlearn))
        prob_trace.append(mean_prob)
        total.backward()
        opt.step()
    for p in net.parameters():
        p.requires_grad_(False)
    clf = Classifier(net=net, num_classes=g_t.num_classes, config=cfg,
                     loss_trace=[c + u for c, u in zip(clean_trace, unlearn_trace)])
    return DefenseOutcome(classifier=clf, detection=det, unlearning_ran=True,
                          clean_loss_trace=clean_trace, unlearn_loss_trace=unlearn_trace,
                          target_prob_trace=prob_trace)
