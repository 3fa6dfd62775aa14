"""Report emission: score CSV + histogram-bin JSONs, matplotlib figures, and
schema-validated defense reports."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema
import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .graph import PoisonRecord  # noqa: E402
from .scoring import ScoreTable  # noqa: E402

SCORE_COLUMNS = ("s_int", "s_ext", "s_fused", "s_prop")
HIST_BINS = 50


def _report_schema() -> dict:
    text = resources.files("graphward.schemas").joinpath("report.schema.json").read_text()
    return json.loads(text)


def validate_report(report: dict) -> None:
    jsonschema.validate(report, _report_schema())


def write_report(report: dict, path: str | Path) -> None:
    validate_report(report)
    Path(path).write_text(json.dumps(report, indent=2))


def score_histogram(table: ScoreTable, column: str,
                    record: PoisonRecord | None = None) -> dict | None:
    """50 equal-width bins; separate poisoned/benign series when ground truth
    is available (evaluation side only)."""
    col = table.column(column)
    filled = ~np.isnan(col)
    if not filled.any():
        return None
    vals = col[filled]
    ids = table.node_ids[filled]
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, HIST_BINS + 1)
    out = {"column": column, "bin_edges": edges.tolist(),
           "series": {"all": np.histogram(vals, bins=edges)[0].tolist()}}
    if record is not None:
        poisoned = np.isin(ids, np.asarray(record.poisoned_nodes(), dtype=np.int64))
        out["series"]["poisoned"] = np.histogram(vals[poisoned], bins=edges)[0].tolist()
        out["series"]["benign"] = np.histogram(vals[~poisoned], bins=edges)[0].tolist()
    return out


def write_score_artifacts(table: ScoreTable, outdir: str | Path,
                          record: PoisonRecord | None = None,
                          figures: bool = True) -> None:
    """CSV, per-column histogram JSONs, and matching PNG charts."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    table.to_csv(outdir / "scores.csv")
    hist_dir = outdir / "score_histograms"
    hist_dir.mkdir(exist_ok=True)
    for column in SCORE_COLUMNS:
        hist = score_histogram(table, column, record)
        if hist is None:
            continue
        (hist_dir / f"{column}.json").write_text(json.dumps(hist))
        if figures:
            _render_histogram(hist, hist_dir / f"{column}.png")


def _render_histogram(hist: dict, path: Path) -> None:
    edges = np.asarray(hist["bin_edges"])
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    series = hist["series"]
    if "poisoned" in series:
        ax.bar(centers, series["benign"], width=width, alpha=0.6, label="benign")
        ax.bar(centers, series["poisoned"], width=width, alpha=0.6, label="poisoned")
        ax.legend(frameon=False)
    else:
        ax.bar(centers, series["all"], width=width, alpha=0.8)
    ax.set_yscale("symlog")
    ax.set_xlabel(hist["column"])
    ax.set_ylabel("nodes")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_defense_summary(report: dict, path: str | Path) -> None:
    """Pre/post ASR and CA bars next to the clean baseline, if present."""
    labels, asr, ca = [], [], []
    for phase in ("pre_defense", "post_defense"):
        block = report.get(phase) or {}
        labels.append(phase.replace("_", " "))
        asr.append(block.get("asr"))
        ca.append(block.get("ca"))
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    xs = np.arange(len(labels))
    ax.bar(xs - 0.18, [v if v is not None else 0.0 for v in asr], width=0.36, label="ASR %")
    ax.bar(xs + 0.18, [v if v is not None else 0.0 for v in ca], width=0.36, label="CA %")
    baseline = report.get("clean_baseline_ca")
    if baseline is not None:
        ax.axhline(baseline, color="gray", linestyle="--", linewidth=1, label="clean CA")
    ax.set_xticks(xs, labels)
    ax.set_ylim(0, 105)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
