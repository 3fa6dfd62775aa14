"""Command-line harness.

Stage subcommands share an output directory: ``attack`` writes the poisoned
train graph and the held-out test graph, ``score`` the model checkpoints and
score table, ``localize`` the detection, ``defend`` the defended checkpoint,
and ``evaluate`` the final report with figures. ``run`` does all of it in one
process. Exit codes: 0 success, 2 config error, 3 stage failure.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import pipeline as pl
from .attacks import AttackSpec
from .defense import removal_only_train, robust_train
from .graph import load_graph, load_poison_record, save_graph, save_poison_record
from .interactions import (dichotomy_check, harsanyi_decomposition,
                           perturbation_from_trigger, save_dividends)
from .localize import fuse_scores, identify, load_detection, save_detection
from .models import (load_checkpoint, save_checkpoint, train_classifier,
                     train_masked_autoencoder)
from .report import render_defense_summary, write_report, write_score_artifacts
from .scoring import ScoreTable, score_all
from .synth import make_benchmark_graph, make_small_graph


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except pl.ConfigError as e:
            click.echo(f"config error: {e}", err=True)
            sys.exit(2)
        except Exception as e:
            click.echo(f"stage failure: {e}", err=True)
            sys.exit(3)
    return wrapper


def load_config(config_path: str, seed: int | None, out: str | None,
                fast: bool | None, repeats: int | None) -> pl.ExperimentConfig:
    cfg = pl.ExperimentConfig.from_file(config_path)
    updates: dict = {}
    if seed is not None:
        updates["seed"] = seed
    if out is not None:
        updates["out"] = out
    if fast is not None:
        updates["fast"] = fast
    if repeats is not None:
        updates["repeats"] = repeats
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    if cfg.out is None:
        raise pl.ConfigError("no output directory (set 'out' in the config or pass --out)")
    return cfg


def common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(), help="experiment config JSON")(fn)
    fn = click.option("--seed", type=int, default=None, help="override the base seed")(fn)
    fn = click.option("--out", type=click.Path(), default=None, help="output directory")(fn)
    fn = click.option("--fast/--no-fast", "fast", default=None,
                      help="subgraph-restricted scoring (default on)")(fn)
    return fn


@click.group()
def main():
    """Graph backdoor defense harness."""


@main.command()
@common_options
@handle_errors
def attack(config_path, seed, out, fast):
    """Split the graph and poison the training side."""
    cfg = load_config(config_path, seed, out, fast, None)
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    g = load_graph(cfg.graph)
    g_train, g_test = pl.split_graph(g, cfg.fractions, pl.stage_seed(cfg.seed, "split"))
    if cfg.attack is not None:
        spec = dataclasses.replace(cfg.attack, seed=pl.stage_seed(cfg.seed, "attack"))
        g_t, record = pl.poison_graph(g_train, spec)
        save_poison_record(record, outdir / "poison_record.json")
    else:
        g_t = g_train
    save_graph(g_t, outdir / "train_graph")
    save_graph(g_test, outdir / "test_graph")
    (outdir / "effective_config.json").write_text(json.dumps(cfg.echo(), indent=2))
    click.echo(f"wrote poisoned train graph ({g_t.num_nodes} nodes) to {outdir}")


@main.command()
@common_options
@handle_errors
def score(config_path, seed, out, fast):
    """Train the probe models on the poisoned graph and score every candidate."""
    cfg = load_config(config_path, seed, out, fast, None)
    outdir = Path(cfg.out)
    g_t = load_graph(outdir / "train_graph")
    ae_cfg = dataclasses.replace(cfg.autoencoder, seed=pl.stage_seed(cfg.seed, "autoencoder"))
    clf_cfg = dataclasses.replace(cfg.classifier, seed=pl.stage_seed(cfg.seed, "classifier"))
    ae = train_masked_autoencoder(g_t, ae_cfg)
    labeled = np.flatnonzero(g_t.train_mask & (g_t.labels >= 0))
    clf = train_classifier(g_t, labeled, clf_cfg)
    save_checkpoint(ae, outdir / "autoencoder.json")
    save_checkpoint(clf, outdir / "classifier.json")
    table = score_all(ae, clf, g_t, fast=cfg.fast)
    record = None
    if (outdir / "poison_record.json").exists():
        record = load_poison_record(outdir / "poison_record.json")
    write_score_artifacts(table, outdir, record)
    click.echo(f"scored {len(table.node_ids)} candidates; artifacts in {outdir}")


@main.command()
@common_options
@handle_errors
def localize(config_path, seed, out, fast):
    """Fuse scores and convert them into suspicious victim/trigger groups."""
    cfg = load_config(config_path, seed, out, fast, None)
    outdir = Path(cfg.out)
    g_t = load_graph(outdir / "train_graph")
    table = ScoreTable.from_csv(outdir / "scores.csv")
    fuse_scores(table, g_t, cfg.localization)
    det = identify(table, g_t, cfg.localization, view="s_fused")
    save_detection(det, outdir / "detection.json")
    record = None
    if (outdir / "poison_record.json").exists():
        record = load_poison_record(outdir / "poison_record.json")
    write_score_artifacts(table, outdir, record)
    if det.abstained:
        click.echo("no bimodal separation: abstained")
    else:
        click.echo(f"groups={list(det.group_labels)} victims={det.victim_count()} "
                   f"triggers={det.trigger_count()}")


@main.command()
@common_options
@handle_errors
def defend(config_path, seed, out, fast):
    """Retrain with filtering plus group-wise unlearning."""
    cfg = load_config(config_path, seed, out, fast, None)
    outdir = Path(cfg.out)
    g_t = load_graph(outdir / "train_graph")
    det = load_detection(outdir / "detection.json")
    defense_cfg = dataclasses.replace(cfg.classifier, seed=pl.stage_seed(cfg.seed, "defense"))
    trainer = robust_train if cfg.unlearn else removal_only_train
    outcome = trainer(g_t, det, defense_cfg)
    save_checkpoint(outcome.classifier, outdir / "defended_classifier.json")
    outcome.save_training_log(outdir / "training_log.json")
    click.echo(f"defended model written (unlearning_ran={outcome.unlearning_ran})")


@main.command()
@common_options
@handle_errors
def evaluate(config_path, seed, out, fast):
    """Compute ASR/CA and detection metrics; write the report and figures."""
    cfg = load_config(config_path, seed, out, fast, None)
    outdir = Path(cfg.out)
    g_test = load_graph(outdir / "test_graph")
    clf = load_checkpoint(outdir / "classifier.json")
    defended = load_checkpoint(outdir / "defended_classifier.json")
    det = load_detection(outdir / "detection.json")
    spec = None
    if cfg.attack is not None:
        spec = dataclasses.replace(cfg.attack, seed=pl.stage_seed(cfg.seed, "attack"))
    pre, post = pl.evaluate_on_test(clf, defended, g_test, spec, cfg.seed)
    detection = {"victim_precision": None, "victim_recall": None,
                 "trigger_precision": None, "trigger_recall": None}
    if (outdir / "poison_record.json").exists():
        record = load_poison_record(outdir / "poison_record.json")
        detection = pl.detection_metrics(det, record)
    report = {
        "schema_version": 1, "seed": cfg.seed, "abstained": det.abstained,
        "pre_defense": pre, "post_defense": post, "clean_baseline_ca": None,
        "detection": detection, "timings_sec": {}, "config": cfg.echo(),
    }
    write_report(report, outdir / "report.json")
    render_defense_summary(report, outdir / "summary.png")
    click.echo(json.dumps({"pre": pre, "post": post, "detection": detection}, indent=2))


@main.command()
@common_options
@click.option("--repeats", type=int, default=None, help="number of seeded repeats")
@handle_errors
def run(config_path, seed, out, fast, repeats):
    """Full pipeline: attack, score, localize, defend, evaluate."""
    cfg = load_config(config_path, seed, out, fast, repeats)
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    results, summary = pl.run_repeats(cfg)
    for i, res in enumerate(results):
        rundir = outdir if cfg.repeats == 1 else outdir / f"run_{i:02d}"
        rundir.mkdir(parents=True, exist_ok=True)
        write_report(res.report, rundir / "report.json")
        write_score_artifacts(res.table, rundir, res.record)
        render_defense_summary(res.report, rundir / "summary.png")
        save_checkpoint(res.classifier, rundir / "classifier.json")
        save_checkpoint(res.outcome.classifier, rundir / "defended_classifier.json")
        save_detection(res.detection, rundir / "detection.json")
        if res.record is not None:
            save_poison_record(res.record, rundir / "poison_record.json")
        res.outcome.save_training_log(rundir / "training_log.json")
    if cfg.repeats > 1:
        (outdir / "summary.json").write_text(json.dumps(summary, indent=2))
    click.echo(json.dumps(summary, indent=2))


@main.command()
@click.option("--out", type=click.Path(), required=True)
@click.option("--graph", "graph_path", type=click.Path(), default=None,
              help="clean host graph; a small synthetic one is used if omitted")
@click.option("--max-atoms", type=int, default=6, show_default=True)
@click.option("--theta", type=float, default=1.0, show_default=True,
              help="detectability threshold for the dichotomy check")
@click.option("--seed", type=int, default=0, show_default=True)
@handle_errors
def oracle(out, graph_path, max_atoms, theta, seed):
    """Brute-force influence decomposition of one attached trigger."""
    from .attacks import feature_stats, generate_sba_trigger

    rng = np.random.default_rng(seed)
    if graph_path is None:
        g = make_small_graph(30, seed=seed, feature_dim=8, num_classes=3)
    else:
        g = load_graph(graph_path)
    labeled = np.flatnonzero(g.labels >= 0)
    from .models import default_classifier_config
    cfg = dataclasses.replace(default_classifier_config(seed), epochs=150)
    clf = train_classifier(g, labeled, cfg)

    ts = min(max_atoms, 4)
    trig = generate_sba_trigger(ts, feature_stats(g), 0.5, rng)
    victim = int(rng.choice(g.num_nodes))
    pert = perturbation_from_trigger(g, victim, trig)
    if pert.size > max_atoms:
        raise pl.ConfigError(f"{pert.size} atoms exceed --max-atoms {max_atoms}")
    dm = harsanyi_decomposition(clf, pert)
    verdict = dichotomy_check(dm, theta)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    save_dividends(dm, outdir / "dividends.json")
    click.echo(json.dumps({
        "victim": victim, "atoms": pert.size, "theta": theta, "verdict": verdict,
        "norm_total": float(np.linalg.norm(dm.total)),
        "norm_first_order": float(np.linalg.norm(dm.first_order)),
        "norm_synergy": float(np.linalg.norm(dm.synergy)),
    }, indent=2))


@main.command()
@click.option("--out", type=click.Path(), required=True)
@click.option("--nodes", type=int, default=2708, show_default=True)
@click.option("--dim", type=int, default=1443, show_default=True)
@click.option("--classes", type=int, default=7, show_default=True)
@click.option("--edges", type=int, default=5278, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@handle_errors
def synth(out, nodes, dim, classes, edges, seed):
    """Write a synthetic citation-style benchmark graph."""
    g = make_benchmark_graph(num_nodes=nodes, feature_dim=dim, num_classes=classes,
                             num_edges=edges, seed=seed)
    save_graph(g, out)
    click.echo(f"wrote {g.num_nodes} nodes / {g.num_edges} edges / "
               f"{g.feature_dim} dims to {out}")


if __name__ == "__main__":
    main()
