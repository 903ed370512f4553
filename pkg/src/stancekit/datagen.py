"""Synthetic data generation through the LLM gateway.

Two protocols live here. The first proposes binary agree/disagree topics
for existing posts and assembles them into a multi-topic dataset. The
second generates balanced topic-conditioned posts (k per target label)
used as throwaway fine-tuning data by the adaptation loop.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import (
    MGT_SCHEME,
    Dataset,
    StanceExample,
    StanceLabel,
    UnknownLabel,
    normalize_topic,
)
from .gateway import GatewayError, LlmGateway, LlmRequest
from .prompts import render

logger = logging.getLogger(__name__)

#: Surface strings bound into the generation prompt's stance slot.
LABEL_SURFACE = {
    StanceLabel.PRO: "agree",
    StanceLabel.CON: "disagree",
    StanceLabel.NEUTRAL: "neutral",
}

TOPIC_WORDS_MIN = 2
TOPIC_WORDS_MAX = 4


class MalformedResponse(Exception):
    """No parsable JSON object found after all parse retries."""

    def __init__(self, attempts: int, last_text: Optional[str]):
        self.attempts = attempts
        self.last_text = last_text
        super().__init__(f"no parsable JSON object after {attempts} attempts")


@dataclass(frozen=True)
class SourcePost:
    """A bare post used as generation input before any topic exists."""

    id: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("post text must be non-empty")
        if not self.id:
            raise ValueError("post id must be non-empty")


@dataclass(frozen=True)
class TopicProposal:
    """One topic/label pair proposed for a source post."""

    topic: str
    label: StanceLabel
    source_post_id: str
    word_count: int

    def __post_init__(self):
        if self.label is StanceLabel.NEUTRAL:
            raise ValueError("topic proposals are binary: Pro or Con only")

    @property
    def length_flagged(self) -> bool:
        return not TOPIC_WORDS_MIN <= self.word_count <= TOPIC_WORDS_MAX


@dataclass
class GenerationReport:
    """Counters for one generation run.

    Reconciliation: every proposal parsed out of a response is either
    accepted or counted in ``proposals_rejected_malformed`` (plus, in
    strict-length runs, rejected via ``proposals_flagged_length``, which
    otherwise counts kept-but-flagged proposals).
    """

    posts_processed: int = 0
    posts_failed: int = 0
    proposals_accepted: int = 0
    proposals_rejected_malformed: int = 0
    proposals_flagged_length: int = 0
    llm_retries: int = 0

    def to_dict(self) -> dict:
        return {
            "posts_processed": self.posts_processed,
            "posts_failed": self.posts_failed,
            "proposals_accepted": self.proposals_accepted,
            "proposals_rejected_malformed": self.proposals_rejected_malformed,
            "proposals_flagged_length": self.proposals_flagged_length,
            "llm_retries": self.llm_retries,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


@dataclass(frozen=True)
class AdaptationSet:
    """Generated fine-tuning examples for one topic, balanced per label."""

    topic: str
    examples: tuple[StanceExample, ...]
    k: int
    intended: int
    dropped: int = 0

    @property
    def partial(self) -> bool:
        return len(self.examples) < self.intended


@dataclass
class GenSettings:
    """Knobs for the generation prompts and their parsing.

    ``salt_template`` is appended to each adaptation-set prompt with the
    generation index substituted, so distinct samples for one
    (topic, label) get distinct cache keys.
    """

    model_name: str = "gpt-3.5-turbo"
    temperature: float = 0.7
    max_tokens: int = 256
    parse_retries: int = 2
    strict_length: bool = False
    salt_template: str = "\n\n[sample {index}]"

    def __post_init__(self):
        if self.parse_retries < 0:
            raise ValueError("parse_retries must be >= 0")
        if "{index}" not in self.salt_template:
            raise ValueError("salt_template must contain {index}")


def extract_first_json_object(text: str) -> Optional[dict]:
    """First balanced JSON object in a response, or None.

    Chat models routinely wrap JSON in prose; scanning for the first
    decodable ``{...}`` block tolerates that.
    """
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text[i:])
        except ValueError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def generate_topics_for_post(
    post: SourcePost,
    gateway: LlmGateway,
    settings: Optional[GenSettings] = None,
    report: Optional[GenerationReport] = None,
) -> list[TopicProposal]:
    """Propose topic/label pairs for one post.

    The response must be a JSON object mapping topics to ``agree`` /
    ``disagree``. Malformed responses trigger fresh (cache-bypassed) calls
    up to ``parse_retries`` times. Topics are normalized and deduplicated
    keeping the first occurrence; out-of-range topic lengths are flagged,
    and rejected only in strict-length mode.
    """
    settings = settings or GenSettings()
    report = report if report is not None else GenerationReport()
    prompt = render("topic_generation", {"post": post.text})
    request = LlmRequest(
        settings.model_name, prompt, settings.temperature, settings.max_tokens
    )
    obj = None
    last_text: Optional[str] = None
    attempts_allowed = 1 + settings.parse_retries
    for attempt in range(attempts_allowed):
        response = gateway.complete(request, bypass_cache=attempt > 0)
        last_text = response.text
        obj = extract_first_json_object(response.text)
        if obj is not None:
            report.llm_retries += attempt
            break
    if obj is None:
        report.llm_retries += settings.parse_retries
        raise MalformedResponse(attempts_allowed, last_text)
    proposals: list[TopicProposal] = []
    seen: set[str] = set()
    for key, value in obj.items():
        topic = normalize_topic(str(key))
        if not topic or not isinstance(value, str):
            report.proposals_rejected_malformed += 1
            continue
        try:
            label = MGT_SCHEME.parse(value)
        except UnknownLabel as exc:
            logger.debug("dropping proposal %r: %s", topic, exc)
            report.proposals_rejected_malformed += 1
            continue
        if topic in seen:
            continue
        seen.add(topic)
        proposal = TopicProposal(topic, label, post.id, len(topic.split()))
        if proposal.length_flagged:
            report.proposals_flagged_length += 1
            if settings.strict_length:
                continue
        proposals.append(proposal)
        report.proposals_accepted += 1
    return proposals


def build_mgt_dataset(
    posts: Sequence[SourcePost],
    gateway: LlmGateway,
    settings: Optional[GenSettings] = None,
) -> tuple[Dataset, GenerationReport]:
    """Run topic generation over all posts and assemble the dataset.

    Per-post parse failures are logged and counted, never fatal; only an
    unusable gateway aborts the run. Example ids derive deterministically
    from (source post id, topic); processing order is input order.
    """
    settings = settings or GenSettings()
    report = GenerationReport()
    examples: list[StanceExample] = []
    for post in posts:
        report.posts_processed += 1
        try:
            proposals = generate_topics_for_post(post, gateway, settings, report)
        except MalformedResponse as exc:
            report.posts_failed += 1
            logger.warning("post %s produced no parsable proposals: %s", post.id, exc)
            continue
        for proposal in proposals:
            examples.append(
                StanceExample(
                    post=post.text,
                    topic=proposal.topic,
                    id=f"{proposal.source_post_id}::{proposal.topic}",
                    label=proposal.label,
                    source="generated",
                )
            )
    return Dataset(tuple(examples), "mgt"), report


def generate_adaptation_set(
    topic: str,
    exemplar: StanceExample,
    k: int,
    label_mode: str,
    gateway: LlmGateway,
    settings: Optional[GenSettings] = None,
) -> AdaptationSet:
    """Generate k posts per target label for one topic.

    Two-label mode targets Pro and Con; three-label mode adds Neutral.
    Each slot binds the topic, the label surface string, and the exemplar
    post; distinct slots for one (topic, label) differ by the generation
    index, mixed in as seed_hint and via the salt suffix. Failed or empty
    generations are dropped and counted, never fatal.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if label_mode not in ("two", "three"):
        raise ValueError(f"invalid label_mode {label_mode!r}")
    if normalize_topic(exemplar.topic) != normalize_topic(topic):
        raise ValueError(
            f"exemplar topic {exemplar.topic!r} does not normalize to {topic!r}"
        )
    settings = settings or GenSettings()
    targets = (
        (StanceLabel.PRO, StanceLabel.CON)
        if label_mode == "two"
        else (StanceLabel.PRO, StanceLabel.CON, StanceLabel.NEUTRAL)
    )
    examples: list[StanceExample] = []
    dropped = 0
    for label in targets:
        for index in range(k):
            body = render(
                "post_generation",
                {
                    "topic": topic,
                    "label": LABEL_SURFACE[label],
                    "post": exemplar.post,
                },
            )
            prompt = body + settings.salt_template.replace("{index}", str(index))
            request = LlmRequest(
                settings.model_name,
                prompt,
                settings.temperature,
                settings.max_tokens,
                seed_hint=index,
            )
            try:
                response = gateway.complete(request)
            except GatewayError as exc:
                logger.warning(
                    "generation failed for (%r, %s, %d): %r", topic, label.value, index, exc
                )
                dropped += 1
                continue
            text = response.text.strip()
            if not text:
                dropped += 1
                continue
            examples.append(
                StanceExample(
                    post=text,
                    topic=topic,
                    id=f"gen::{topic}::{label.value}::{index}",
                    label=label,
                    source="generated",
                )
            )
    return AdaptationSet(
        topic=topic,
        examples=tuple(examples),
        k=k,
        intended=len(targets) * k,
        dropped=dropped,
    )
