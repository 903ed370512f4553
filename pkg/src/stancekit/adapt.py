"""Test-time adaptation loop and the no-adaptation baseline runner.

For each topic encountered in the test set the loop generates a small
balanced set of synthetic posts, fine-tunes the classifier on them,
predicts that topic's examples, and restores the classifier to its
pre-episode parameters. Episodes never accumulate: every one starts from
the same snapshot, so results are independent of topic processing order
and the base model ends the run byte-identical to how it started.
Generated examples are used for training only and never enter metric
computation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from .classifier import ClassifierBackend
from .core import Dataset, StanceExample, StanceLabel, derive_seed, group_by_topic, normalize_topic
from .datagen import GenSettings, generate_adaptation_set
from .gateway import LlmGateway

logger = logging.getLogger(__name__)


@dataclass
class AdaptConfig:
    """Settings for one adaptation run."""

    k: int = 3
    label_mode: str = "two"  # "two" | "three"
    grouping: str = "per_topic"  # "per_topic" | "per_input"
    finetune_hyper: dict = field(default_factory=dict)
    seed: int = 0
    generation: GenSettings = field(default_factory=GenSettings)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.label_mode not in ("two", "three"):
            raise ValueError(f"invalid label_mode {self.label_mode!r}")
        if self.grouping not in ("per_topic", "per_input"):
            raise ValueError(f"invalid grouping {self.grouping!r}")


@dataclass(frozen=True)
class PredictionRecord:
    example_id: str
    gold: Optional[StanceLabel]
    predicted: StanceLabel
    probabilities: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "gold": self.gold.value if self.gold is not None else None,
            "predicted": self.predicted.value,
            "probabilities": list(self.probabilities),
        }


@dataclass(frozen=True)
class PredictionSet:
    """Predictions in original dataset order, one record per example."""

    records: tuple[PredictionRecord, ...]

    def __iter__(self) -> Iterator[PredictionRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records
        )


@dataclass
class AdaptationEpisodeLog:
    topic: str
    generated_count: int
    dropped_count: int
    epochs_run: int
    pre_loss: Optional[float]
    post_loss: Optional[float]
    examples_predicted: int

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "generated_count": self.generated_count,
            "dropped_count": self.dropped_count,
            "epochs_run": self.epochs_run,
            "pre_loss": self.pre_loss,
            "post_loss": self.post_loss,
            "examples_predicted": self.examples_predicted,
        }


def episode_logs_json(logs: Sequence[AdaptationEpisodeLog]) -> str:
    return json.dumps([log.to_dict() for log in logs], sort_keys=True, indent=2)


def run_baseline(model: ClassifierBackend, test: Dataset) -> PredictionSet:
    """Predict every example with the model as-is; a pure read-only pass."""
    records = []
    for ex in test:
        label, probs = model.predict(ex.post, ex.topic)
        records.append(PredictionRecord(ex.id, ex.label, label, probs))
    return PredictionSet(tuple(records))


def _episodes(
    test: Dataset, grouping: str, topic_order: Optional[Sequence[str]]
) -> list[tuple[str, list[StanceExample]]]:
    if grouping == "per_input":
        return [(normalize_topic(ex.topic), [ex]) for ex in test]
    groups = group_by_topic(test)
    if topic_order is None:
        return list(groups.items())
    if sorted(topic_order) != sorted(groups):
        raise ValueError("topic_order must be a permutation of the test topics")
    return [(t, groups[t]) for t in topic_order]


def run_dymoadapt(
    base: ClassifierBackend,
    test: Dataset,
    gateway: LlmGateway,
    config: Optional[AdaptConfig] = None,
    topic_order: Optional[Sequence[str]] = None,
) -> tuple[PredictionSet, list[AdaptationEpisodeLog]]:
    """Adapt-and-predict over every topic group of the test set.

    Per episode: snapshot the base model, generate the topic's balanced
    training set, fine-tune, predict the group, restore the snapshot. A
    topic whose generation comes back empty is predicted with the
    unadapted model and logged. Predictions are returned in the original
    dataset order regardless of grouping or ``topic_order`` (a testing
    hook; the default processes topics in sorted order).
    """
    config = config or AdaptConfig()
    caps = base.capabilities
    if not (caps.trainable and caps.snapshotable):
        raise ValueError("adaptation requires a trainable, snapshotable backend")
    if len(test) == 0:
        raise ValueError("test dataset must be non-empty")
    class_set = (
        (StanceLabel.PRO, StanceLabel.CON)
        if config.label_mode == "two"
        else (StanceLabel.PRO, StanceLabel.CON, StanceLabel.NEUTRAL)
    )
    snapshot = base.snapshot()
    by_id: dict[str, PredictionRecord] = {}
    logs: list[AdaptationEpisodeLog] = []
    for topic, group in _episodes(test, config.grouping, topic_order):
        exemplar = group[0]
        adaptation = generate_adaptation_set(
            topic, exemplar, config.k, config.label_mode, gateway, config.generation
        )
        if adaptation.examples:
            hyper = dict(config.finetune_hyper)
            hyper.setdefault("seed", derive_seed(config.seed, f"adapt/{topic}"))
            report = base.train(
                adaptation.examples, class_set=class_set, hyper_overrides=hyper
            )
            epochs_run = len(report.epoch_losses)
            pre_loss: Optional[float] = report.initial_loss
            post_loss: Optional[float] = report.final_loss
        else:
            logger.warning(
                "empty adaptation set for topic %r; predicting unadapted", topic
            )
            epochs_run = 0
            pre_loss = post_loss = None
        for ex in group:
            label, probs = base.predict(ex.post, ex.topic)
            by_id[ex.id] = PredictionRecord(ex.id, ex.label, label, probs)
        base.restore(snapshot)
        logs.append(
            AdaptationEpisodeLog(
                topic=topic,
                generated_count=len(adaptation.examples),
                dropped_count=adaptation.dropped,
                epochs_run=epochs_run,
                pre_loss=pre_loss,
                post_loss=post_loss,
                examples_predicted=len(group),
            )
        )
    records = tuple(by_id[ex.id] for ex in test)
    return PredictionSet(records), logs
