"""End-to-end experiment orchestration: split, poison, train, score, localize,
defend, and evaluate, with seeded determinism and reportable metrics."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attacks import AttackSpec, poison_graph, poison_test_graph
from .defense import DefenseOutcome, removal_only_train, robust_train
from .graph import AttributedGraph, PoisonRecord, load_graph
from .localize import (DetectionResult, LocalizationParams, fuse_scores,
                       identify, propagate_scores)
from .models import (Classifier, ModelConfig, default_autoencoder_config,
                     default_classifier_config, train_classifier,
                     train_masked_autoencoder)
from .scoring import ScoreTable, score_all


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class StageError(RuntimeError):
    """A pipeline stage failed (CLI exit code 3)."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"stage {stage!r} failed: {cause}")


_STAGE_IDS = {"split": 0, "attack": 1, "autoencoder": 2, "classifier": 3,
              "defense": 4, "test_split": 5, "test_poison": 6, "run": 7}


def stage_seed(base: int, stage: str) -> int:
    return int(np.random.SeedSequence([base, _STAGE_IDS[stage]]).generate_state(1)[0] & 0x7FFFFFFF)


def run_seed(base: int, repeat: int) -> int:
    if repeat == 0:
        return base
    return int(np.random.SeedSequence([base, _STAGE_IDS["run"], repeat]).generate_state(1)[0] & 0x7FFFFFFF)


@dataclass(frozen=True)
class ExperimentConfig:
    graph: str
    out: str | None = None
    seed: int = 0
    fractions: tuple[float, float] = (0.8, 0.2)
    repeats: int = 1
    fast: bool = True
    unlearn: bool = True
    compute_clean_baseline: bool = True
    attack: AttackSpec | None = AttackSpec()
    autoencoder: ModelConfig = default_autoencoder_config()
    classifier: ModelConfig = default_classifier_config()
    localization: LocalizationParams = LocalizationParams()

    def __post_init__(self):
        if len(self.fractions) != 2 or any(f < 0 for f in self.fractions):
            raise ConfigError("fractions must be two nonnegative numbers")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError("fractions must sum to 1")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")

    @classmethod
    def from_json(cls, obj: dict, base_dir: str | Path | None = None) -> "ExperimentConfig":
        obj = dict(obj)
        try:
            graph = obj.pop("graph")
        except KeyError:
            raise ConfigError("config needs a 'graph' path") from None
        if base_dir is not None and not Path(graph).is_absolute():
            graph = str(Path(base_dir) / graph)
        kwargs: dict = {"graph": graph}
        for key in ("out", "seed", "repeats", "fast", "unlearn", "compute_clean_baseline"):
            if key in obj:
                kwargs[key] = obj.pop(key)
        if "fractions" in obj:
            kwargs["fractions"] = tuple(obj.pop("fractions"))
        try:
            if "attack" in obj:
                block = obj.pop("attack")
                kwargs["attack"] = AttackSpec.from_json(block) if block else None
            for key, builder, default in (
                    ("autoencoder", ModelConfig, default_autoencoder_config()),
                    ("classifier", ModelConfig, default_classifier_config())):
                if key in obj:
                    merged = {**dataclasses.asdict(default), **obj.pop(key)}
                    kwargs[key] = builder(**merged)
            if "localization" in obj:
                merged = {**dataclasses.asdict(LocalizationParams()), **obj.pop("localization")}
                kwargs["localization"] = LocalizationParams(**merged)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        if obj:
            raise ConfigError(f"unknown config keys: {sorted(obj)}")
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid config JSON: {e}") from e
        return cls.from_json(obj, base_dir=path.parent)

    def echo(self) -> dict:
        out = {
            "graph": str(self.graph), "seed": self.seed, "fractions": list(self.fractions),
            "repeats": self.repeats, "fast": self.fast, "unlearn": self.unlearn,
            "attack": self.attack.to_json() if self.attack else None,
            "autoencoder": dataclasses.asdict(self.autoencoder),
            "classifier": dataclasses.asdict(self.classifier),
            "localization": dataclasses.asdict(self.localization),
        }
        return out


# ---------------------------------------------------------------------------
# Splits and metrics
# ---------------------------------------------------------------------------

def split_indices(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    cut = int(round(train_fraction * n))
    return np.sort(perm[:cut]), np.sort(perm[cut:])


def induced_subgraph(g: AttributedGraph, nodes: np.ndarray, train: bool) -> AttributedGraph:
    nodes = np.asarray(sorted(int(v) for v in nodes), dtype=np.int64)
    keep = np.zeros(g.num_nodes, dtype=bool)
    keep[nodes] = True
    old_to_new = np.full(g.num_nodes, -1, dtype=np.int64)
    old_to_new[nodes] = np.arange(len(nodes))
    if g.num_edges:
        rows = keep[g.edges[:, 0]] & keep[g.edges[:, 1]]
        edges = old_to_new[g.edges[rows]]
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    mask = np.full(len(nodes), train, dtype=bool)
    return AttributedGraph(g.features[nodes], edges, g.labels[nodes], mask, g.num_classes)


def split_graph(g: AttributedGraph, fractions: tuple[float, float],
                seed: int) -> tuple[AttributedGraph, AttributedGraph]:
    """Seeded inductive node split; cross-partition edges are dropped.

    Training-side nodes form the labeled pool (train mask on); test-side
    nodes keep their labels for evaluation but are outside the mask.
    """
    if len(fractions) != 2 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be two numbers summing to 1")
    train_ids, test_ids = split_indices(g.num_nodes, fractions[0], seed)
    return induced_subgraph(g, train_ids, True), induced_subgraph(g, test_ids, False)


def compute_asr(c: Classifier, g_triggered: AttributedGraph,
                record: PoisonRecord) -> float | None:
    """Share of triggered victims (excluding those truly labeled the target)
    predicted as the target class; macro-averaged over groups."""
    preds = np.argmax(c.predict_logits(g_triggered), axis=1)
    per_group = []
    for key, victims in record.victim_groups.items():
        target = record.target_labels[key]
        filtered = [v for v in victims if g_triggered.labels[v] != target]
        if not filtered:
            continue
        per_group.append(100.0 * float(np.mean(preds[list(filtered)] == target)))
    if not per_group:
        return None
    return float(np.mean(per_group))


def compute_ca(c: Classifier, g: AttributedGraph, nodes) -> float:
    idx = np.asarray([int(v) for v in nodes], dtype=np.int64)
    idx = idx[g.labels[idx] >= 0]
    if idx.size == 0:
        raise ValueError("compute_ca: no labeled nodes to evaluate")
    preds = np.argmax(c.predict_logits(g), axis=1)
    return 100.0 * float(np.mean(preds[idx] == g.labels[idx]))


def _precision_recall(pred: set[int], truth: set[int]) -> tuple[float | None, float]:
    recall = 100.0 * len(pred & truth) / len(truth) if truth else 0.0
    precision = 100.0 * len(pred & truth) / len(pred) if pred else None
    return precision, recall


def detection_metrics(det: DetectionResult, record: PoisonRecord) -> dict:
    """Victim and trigger precision/recall against ground truth; abstention
    reports missing precision and zero recall."""
    if det.abstained:
        return {"victim_precision": None, "victim_recall": 0.0,
                "trigger_precision": None, "trigger_recall": 0.0}
    vp, vr = _precision_recall(set(det.all_victims()), set(record.victims))
    tp, tr = _precision_recall(set(det.all_triggers()), set(record.trigger_nodes()))
    return {"victim_precision": vp, "victim_recall": vr,
            "trigger_precision": tp, "trigger_recall": tr}


def evaluate_on_test(clf_pre: Classifier, clf_post: Classifier,
                     g_test: AttributedGraph, spec: AttackSpec | None,
                     base_seed: int) -> tuple[dict, dict]:
    """ASR on the seeded triggered half, CA on the untouched clean half, for
    both the undefended and the defended model."""
    trig_half, clean_half = split_indices(g_test.num_nodes, 0.5,
                                          stage_seed(base_seed, "test_split"))
    pre = {"asr": None, "ca": compute_ca(clf_pre, g_test, clean_half)}
    post = {"asr": None, "ca": compute_ca(clf_post, g_test, clean_half)}
    if spec is not None and trig_half.size:
        g_u, test_record = poison_test_graph(
            g_test, trig_half, spec, stage_seed(base_seed, "test_poison"))
        pre["asr"] = compute_asr(clf_pre, g_u, test_record)
        post["asr"] = compute_asr(clf_post, g_u, test_record)
    return pre, post


# ---------------------------------------------------------------------------
# The pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    """Everything a run produced, for the report and for stage artifacts."""

    report: dict
    train_graph: AttributedGraph
    test_graph: AttributedGraph
    poisoned_graph: AttributedGraph
    record: PoisonRecord | None
    autoencoder: object
    classifier: Classifier
    table: ScoreTable
    detection: DetectionResult
    outcome: DefenseOutcome


def run_pipeline(cfg: ExperimentConfig, seed: int | None = None) -> PipelineResult:
    """One seeded end-to-end run; ``seed`` overrides the config's base seed."""
    base = cfg.seed if seed is None else seed
    timings: dict[str, float] = {}

    def timed(stage, fn):
        t0 = time.perf_counter()
        try:
            value = fn()
        except (ConfigError, StageError):
            raise
        except Exception as e:
            raise StageError(stage, e) from e
        timings[stage] = time.perf_counter() - t0
        return value

    g = timed("load", lambda: load_graph(cfg.graph))
    g_train, g_test = timed("split", lambda: split_graph(
        g, cfg.fractions, stage_seed(base, "split")))

    if cfg.attack is not None:
        spec = dataclasses.replace(cfg.attack, seed=stage_seed(base, "attack"))
        g_t, record = timed("attack", lambda: poison_graph(g_train, spec))
    else:
        spec, g_t, record = None, g_train, None

    ae_cfg = dataclasses.replace(cfg.autoencoder, seed=stage_seed(base, "autoencoder"))
    clf_cfg = dataclasses.replace(cfg.classifier, seed=stage_seed(base, "classifier"))
    ae = timed("autoencoder", lambda: train_masked_autoencoder(g_t, ae_cfg))
    labeled = np.flatnonzero(g_t.train_mask & (g_t.labels >= 0))
    clf = timed("classifier", lambda: train_classifier(g_t, labeled, clf_cfg))

    table = timed("scoring", lambda: score_all(ae, clf, g_t, fast=cfg.fast))

    def localize():
        fused, diag = fuse_scores(table, g_t, cfg.localization)
        det = identify(table, g_t, cfg.localization, view="s_fused")
        _, full = propagate_scores(table.dense_column("s_fused", g_t.num_nodes),
                                   g_t, g_t.train_nodes(), cfg.localization)
        table.s_prop = full[table.node_ids]
        return det, diag

    det, diag = timed("localization", lambda: localize())

    defense_cfg = dataclasses.replace(cfg.classifier, seed=stage_seed(base, "defense"))
    trainer = robust_train if cfg.unlearn else removal_only_train
    outcome = timed("defense", lambda: trainer(g_t, det, defense_cfg))

    pre, post = timed("evaluation", lambda: evaluate_on_test(
        clf, outcome.classifier, g_test, spec, base))

    clean_ca = None
    if cfg.compute_clean_baseline:
        def baseline():
            clean_pool = np.flatnonzero(g_train.train_mask & (g_train.labels >= 0))
            clean_clf = train_classifier(g_train, clean_pool, clf_cfg)
            _, clean_half = split_indices(g_test.num_nodes, 0.5, stage_seed(base, "test_split"))
            return compute_ca(clean_clf, g_test, clean_half)
        clean_ca = timed("clean_baseline", baseline)

    detection = detection_metrics(det, record) if record is not None else {
        "victim_precision": None, "victim_recall": None,
        "trigger_precision": None, "trigger_recall": None}

    report = {
        "schema_version": 1,
        "seed": base,
        "abstained": det.abstained,
        "unlearning_ran": outcome.unlearning_ran,
        "pre_defense": pre,
        "post_defense": post,
        "clean_baseline_ca": clean_ca,
        "detection": detection,
        "fusion_weights": {"internal": diag["weight_internal"],
                           "external": diag["weight_external"]},
        "timings_sec": timings,
        "config": cfg.echo(),
    }
    return PipelineResult(report=report, train_graph=g_train, test_graph=g_test,
                          poisoned_graph=g_t, record=record, autoencoder=ae,
                          classifier=clf, table=table, detection=det, outcome=outcome)


def run_repeats(cfg: ExperimentConfig) -> tuple[list[PipelineResult], dict]:
    """Independent repeats under derived seeds plus a mean-aggregated report."""
    results = [run_pipeline(cfg, seed=run_seed(cfg.seed, i)) for i in range(cfg.repeats)]
    summary = aggregate_reports([r.report for r in results])
    return results, summary


def _mean_or_none(values) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def aggregate_reports(reports: list[dict]) -> dict:
    agg = {
        "schema_version": 1,
        "runs": len(reports),
        "seeds": [r["seed"] for r in reports],
        "abstained_runs": sum(1 for r in reports if r["abstained"]),
        "pre_defense": {k: _mean_or_none(r["pre_defense"][k] for r in reports) for k in ("asr", "ca")},
        "post_defense": {k: _mean_or_none(r["post_defense"][k] for r in reports) for k in ("asr", "ca")},
        "clean_baseline_ca": _mean_or_none(r.get("clean_baseline_ca") for r in reports),
        "detection": {k: _mean_or_none(r["detection"][k] for r in reports)
                      for k in ("victim_precision", "victim_recall",
                                "trigger_precision", "trigger_recall")},
    }
    return agg
