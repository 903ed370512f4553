"""Confusion-matrix metrics, macro-F1 aggregates, and dataset statistics.

The headline aggregate is ``macro_f1_pro_con``: the unweighted mean of the
F1 scores of the Pro and Con classes. ``macro_f1_all`` (mean over all three
classes) is always reported alongside it. Every 0/0 in precision, recall,
or F1 is defined as 0; the convention matters for tiny per-topic groups.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Sequence

from .core import (
    LABEL_ORDER,
    Dataset,
    StanceLabel,
    group_by_topic,
    normalize_topic,
)

if TYPE_CHECKING:
    from .adapt import PredictionSet


class LengthMismatch(Exception):
    def __init__(self, n_gold: int, n_pred: int):
        super().__init__(f"gold has {n_gold} labels but pred has {n_pred}")


class MissingPrediction(Exception):
    def __init__(self, example_id: str):
        self.example_id = example_id
        super().__init__(f"no prediction for example {example_id!r}")


@dataclass(frozen=True)
class ClassCounts:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def confusion_counts(
    gold: Sequence[StanceLabel], pred: Sequence[StanceLabel]
) -> dict[StanceLabel, ClassCounts]:
    """Per-class true positives, false positives, and false negatives."""
    if len(gold) != len(pred):
        raise LengthMismatch(len(gold), len(pred))
    tp = {c: 0 for c in LABEL_ORDER}
    fp = {c: 0 for c in LABEL_ORDER}
    fn = {c: 0 for c in LABEL_ORDER}
    for g, p in zip(gold, pred):
        if g is p:
            tp[g] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    return {c: ClassCounts(tp[c], fp[c], fn[c]) for c in LABEL_ORDER}


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def f1_per_class(
    gold: Sequence[StanceLabel], pred: Sequence[StanceLabel]
) -> dict[StanceLabel, PRF]:
    """Precision, recall, and F1 for each of the three classes."""
    if not gold:
        raise ValueError("gold must be non-empty")
    counts = confusion_counts(gold, pred)
    out = {}
    for c, cc in counts.items():
        precision = _safe_div(cc.tp, cc.tp + cc.fp)
        recall = _safe_div(cc.tp, cc.tp + cc.fn)
        f1 = _safe_div(2 * precision * recall, precision + recall)
        out[c] = PRF(precision, recall, f1)
    return out


DEFAULT_MACRO_CLASSES: tuple[StanceLabel, ...] = (StanceLabel.PRO, StanceLabel.CON)


def f1_macro(
    gold: Sequence[StanceLabel],
    pred: Sequence[StanceLabel],
    class_set: Iterable[StanceLabel] = DEFAULT_MACRO_CLASSES,
) -> float:
    """Unweighted mean of per-class F1 over ``class_set`` (default Pro/Con)."""
    classes = tuple(class_set)
    if not classes:
        raise ValueError("class_set must be non-empty")
    per_class = f1_per_class(gold, pred)
    return sum(per_class[c].f1 for c in classes) / len(classes)


@dataclass(frozen=True)
class EvalReport:
    """Per-class scores plus both macro aggregates and per-topic breakdown."""

    per_class: Mapping[StanceLabel, PRF]
    macro_f1_pro_con: float
    macro_f1_all: float
    n_scored: int
    per_topic: Optional[Mapping[str, float]] = None

    def to_dict(self) -> dict:
        return {
            "per_class": {
                c.value: {
                    "precision": prf.precision,
                    "recall": prf.recall,
                    "f1": prf.f1,
                }
                for c, prf in self.per_class.items()
            },
            "macro_f1_pro_con": self.macro_f1_pro_con,
            "macro_f1_all": self.macro_f1_all,
            "n_scored": self.n_scored,
            "per_topic": dict(self.per_topic) if self.per_topic is not None else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _paired_labels(
    test: Dataset, preds: "PredictionSet"
) -> tuple[list[StanceLabel], list[StanceLabel]]:
    by_id = {r.example_id: r for r in preds.records}
    gold, pred = [], []
    for ex in test:
        if ex.label is None:
            continue
        record = by_id.get(ex.id)
        if record is None:
            raise MissingPrediction(ex.id)
        gold.append(ex.label)
        pred.append(record.predicted)
    return gold, pred


def per_topic_report(test: Dataset, preds: "PredictionSet") -> dict[str, float]:
    """Pro/Con macro-F1 per normalized topic.

    Topics whose gold labels include no Pro or Con example are absent from
    the report rather than scored as zero.
    """
    by_id = {r.example_id: r for r in preds.records}
    report: dict[str, float] = {}
    for topic, group in group_by_topic(test).items():
        gold, pred = [], []
        for ex in group:
            if ex.label is None:
                continue
            record = by_id.get(ex.id)
            if record is None:
                raise MissingPrediction(ex.id)
            gold.append(ex.label)
            pred.append(record.predicted)
        if not any(g in DEFAULT_MACRO_CLASSES for g in gold):
            continue
        report[topic] = f1_macro(gold, pred)
    return report


def evaluate(test: Dataset, preds: "PredictionSet", per_topic: bool = False) -> EvalReport:
    """Score a prediction set against gold labels."""
    gold, pred = _paired_labels(test, preds)
    if not gold:
        raise ValueError("no gold-labeled examples to score")
    per_class = f1_per_class(gold, pred)
    return EvalReport(
        per_class=per_class,
        macro_f1_pro_con=sum(per_class[c].f1 for c in DEFAULT_MACRO_CLASSES) / 2,
        macro_f1_all=sum(per_class[c].f1 for c in LABEL_ORDER) / 3,
        n_scored=len(gold),
        per_topic=per_topic_report(test, preds) if per_topic else None,
    )


@dataclass(frozen=True)
class DatasetStats:
    """Corpus-level counts over examples, posts, and topic vocabulary."""

    n_examples: int
    n_per_label: Mapping[str, int]
    n_unique_posts: int
    n_unique_topics: int
    n_topic_words: int
    n_unique_topic_words: int
    avg_words_per_topic: float

    def to_dict(self) -> dict:
        return {
            "n_examples": self.n_examples,
            "n_per_label": dict(self.n_per_label),
            "n_unique_posts": self.n_unique_posts,
            "n_unique_topics": self.n_unique_topics,
            "n_topic_words": self.n_topic_words,
            "n_unique_topic_words": self.n_unique_topic_words,
            "avg_words_per_topic": self.avg_words_per_topic,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def dataset_stats(dataset: Dataset) -> DatasetStats:
    """Compute corpus statistics.

    Topic uniqueness is by exact string after topic normalization; topic
    words are whitespace tokens, counted per example; unique topic words
    are counted case-insensitively. ``avg_words_per_topic`` is defined as
    topic words / examples (0 for an empty dataset).
    """
    per_label = {c.value: 0 for c in LABEL_ORDER}
    per_label["unlabeled"] = 0
    posts: set[str] = set()
    topics: set[str] = set()
    topic_words = 0
    unique_words: set[str] = set()
    for ex in dataset:
        per_label[ex.label.value if ex.label is not None else "unlabeled"] += 1
        posts.add(ex.post)
        topic = normalize_topic(ex.topic)
        topics.add(topic)
        words = topic.split()
        topic_words += len(words)
        unique_words.update(w.lower() for w in words)
    n = len(dataset)
    return DatasetStats(
        n_examples=n,
        n_per_label=per_label,
        n_unique_posts=len(posts),
        n_unique_topics=len(topics),
        n_topic_words=topic_words,
        n_unique_topic_words=len(unique_words),
        avg_words_per_topic=topic_words / n if n else 0.0,
    )


def top_topics(dataset: Dataset, n: int) -> list[tuple[str, int]]:
    """The ``n`` most frequent normalized topics.

    Sorted by frequency descending, ties broken by topic ascending.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    freq: dict[str, int] = {}
    for ex in dataset:
        topic = normalize_topic(ex.topic)
        freq[topic] = freq.get(topic, 0) + 1
    ranked = sorted(freq.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:n]


def format_stats_table(stats: DatasetStats, title: str = "Dataset") -> str:
    """Plain-text statistics table, one metric per row."""
    rows = [
        ("# Examples", stats.n_examples),
        ("# Examples with Agree label", stats.n_per_label.get("pro", 0)),
        ("# Examples with Disagree label", stats.n_per_label.get("con", 0)),
        ("# Examples with Neutral label", stats.n_per_label.get("neutral", 0)),
        ("# Unique Posts", stats.n_unique_posts),
        ("# Unique Topics", stats.n_unique_topics),
        ("# of Words in Topics", stats.n_topic_words),
        ("# of Unique Words in Topics", stats.n_unique_topic_words),
        ("Average # of Words per Topic", f"{stats.avg_words_per_topic:.2f}"),
    ]
    width = max(len(name) for name, _ in rows)
    lines = [title, "-" * (width + 12)]
    lines += [f"{name:<{width}}  {value:>10}" for name, value in rows]
    return "\n".join(lines)


def format_top_topics_table(pairs: Sequence[tuple[str, int]]) -> str:
    """Plain-text topic/frequency table."""
    if not pairs:
        return "Topic  Frequency\n(empty)"
    width = max(len("Topic"), max(len(t) for t, _ in pairs))
    lines = [f"{'Topic':<{width}}  Frequency", "-" * (width + 11)]
    lines += [f"{topic:<{width}}  {count:>9}" for topic, count in pairs]
    return "\n".join(lines)


def format_eval_table(report: EvalReport) -> str:
    """Plain-text results table: per-class F1 plus both macro aggregates."""
    lines = [
        f"{'Class':<9} {'Precision':>9} {'Recall':>9} {'F1':>9}",
        "-" * 39,
    ]
    for c in LABEL_ORDER:
        prf = report.per_class[c]
        lines.append(
            f"{c.value:<9} {prf.precision:>9.4f} {prf.recall:>9.4f} {prf.f1:>9.4f}"
        )
    lines.append("-" * 39)
    lines.append(f"{'macro(pro,con)':<29} {report.macro_f1_pro_con:>9.4f}")
    lines.append(f"{'macro(all)':<29} {report.macro_f1_all:>9.4f}")
    lines.append(f"{'scored examples':<29} {report.n_scored:>9d}")
    if report.per_topic is not None:
        lines.append("")
        width = max([len("Topic")] + [len(t) for t in report.per_topic])
        lines.append(f"{'Topic':<{width}}  macro(pro,con)")
        lines.append("-" * (width + 16))
        for topic, score in report.per_topic.items():
            lines.append(f"{topic:<{width}}  {score:>14.4f}")
    return "\n".join(lines)
