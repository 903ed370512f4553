"""Matplotlib figures rendered alongside the delimited report output.

Every CLI report path accepts a ``--figures-dir``; when given, the
relevant charts land there as PNG files next to the JSON/JSONL output.
All rendering uses the Agg backend so it works headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .core import LABEL_ORDER
from .metrics import DatasetStats, EvalReport

_BAR_COLOR = "#4878a8"


def _finish(fig, path: "str | Path") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_label_distribution(stats: DatasetStats, path: "str | Path") -> Path:
    """Bar chart of example counts per label."""
    labels = [c.value for c in LABEL_ORDER]
    counts = [stats.n_per_label.get(name, 0) for name in labels]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(labels, counts, color=_BAR_COLOR)
    ax.set_ylabel("examples")
    ax.set_title(f"Label distribution (n={stats.n_examples})")
    return _finish(fig, path)


def save_top_topics(pairs: Sequence[tuple[str, int]], path: "str | Path") -> Path:
    """Horizontal bar chart of the most frequent topics."""
    topics = [t for t, _ in pairs][::-1]
    counts = [c for _, c in pairs][::-1]
    fig, ax = plt.subplots(figsize=(6, 0.4 * max(len(topics), 4) + 1.2))
    ax.barh(topics, counts, color=_BAR_COLOR)
    ax.set_xlabel("frequency")
    ax.set_title("Most frequent topics")
    return _finish(fig, path)


def save_per_class_f1(report: EvalReport, path: "str | Path") -> Path:
    """Per-class F1 bars with both macro aggregates as reference lines."""
    labels = [c.value for c in LABEL_ORDER]
    scores = [report.per_class[c].f1 for c in LABEL_ORDER]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(labels, scores, color=_BAR_COLOR)
    ax.axhline(report.macro_f1_pro_con, color="#a84848", linestyle="--",
               label=f"macro(pro,con) = {report.macro_f1_pro_con:.3f}")
    ax.axhline(report.macro_f1_all, color="#48a868", linestyle=":",
               label=f"macro(all) = {report.macro_f1_all:.3f}")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("F1")
    ax.set_title(f"Per-class F1 (n={report.n_scored})")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def save_per_topic_f1(per_topic: Mapping[str, float], path: "str | Path") -> Path:
    """Horizontal bar chart of Pro/Con macro-F1 per topic."""
    items = sorted(per_topic.items(), key=lambda kv: kv[1])
    topics = [t for t, _ in items]
    scores = [s for _, s in items]
    fig, ax = plt.subplots(figsize=(6, 0.4 * max(len(topics), 4) + 1.2))
    ax.barh(topics, scores, color=_BAR_COLOR)
    ax.set_xlim(0.0, 1.05)
    ax.set_xlabel("macro F1 (pro, con)")
    ax.set_title("Per-topic score")
    return _finish(fig, path)
