"""Canonical stance labels, label schemes, and dataset containers.

Every dataset vocabulary ("FAVOR", "1", "agree", ...) is mapped onto one
canonical three-way label space so the rest of the pipeline never sees
surface strings. All types here are immutable after construction and safe
to share across threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Mapping, Optional, Sequence


class UnknownLabel(Exception):
    """A surface string is not part of a scheme's vocabulary."""

    def __init__(self, text: str, scheme_name: str):
        self.text = text
        self.scheme_name = scheme_name
        super().__init__(f"unknown label {text!r} for scheme {scheme_name!r}")


class StanceLabel(Enum):
    """Three-way stance of a post toward a topic."""

    PRO = "pro"
    CON = "con"
    NEUTRAL = "neutral"

    @classmethod
    def from_name(cls, name: str) -> "StanceLabel":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise UnknownLabel(name, "canonical") from None


#: Fixed class order; used wherever a label maps to an index (argmax
#: tie-breaking, probability vectors, model rows).
LABEL_ORDER: tuple[StanceLabel, ...] = (
    StanceLabel.PRO,
    StanceLabel.CON,
    StanceLabel.NEUTRAL,
)


@dataclass(frozen=True)
class LabelScheme:
    """A dataset-specific label vocabulary mapped onto canonical labels.

    Matching is case-insensitive and trims surrounding whitespace. Strings
    outside the vocabulary are rejected, never coerced.
    """

    name: str
    mapping: Mapping[str, StanceLabel]

    def __post_init__(self):
        lowered = {k.lower(): v for k, v in self.mapping.items()}
        object.__setattr__(self, "mapping", lowered)

    def parse(self, text: str) -> StanceLabel:
        key = text.strip().lower()
        try:
            return self.mapping[key]
        except KeyError:
            raise UnknownLabel(text, self.name) from None

    def surface_for(self, label: StanceLabel) -> str:
        """First surface string mapping to ``label``; used when writing files."""
        for surface, mapped in self.mapping.items():
            if mapped is label:
                return surface
        raise UnknownLabel(label.value, self.name)

    @property
    def vocabulary(self) -> tuple[str, ...]:
        return tuple(self.mapping)


MGT_SCHEME = LabelScheme(
    "mgt", {"agree": StanceLabel.PRO, "disagree": StanceLabel.CON}
)
SEMEVAL_SCHEME = LabelScheme(
    "semeval",
    {
        "FAVOR": StanceLabel.PRO,
        "AGAINST": StanceLabel.CON,
        "NONE": StanceLabel.NEUTRAL,
    },
)
VAST_NUMERIC_SCHEME = LabelScheme(
    "vast-numeric",
    {"1": StanceLabel.PRO, "0": StanceLabel.CON, "2": StanceLabel.NEUTRAL},
)
LLM_ANSWER_SCHEME = LabelScheme(
    "llm-answer",
    {
        "agree": StanceLabel.PRO,
        "disagree": StanceLabel.CON,
        "neutral": StanceLabel.NEUTRAL,
    },
)

SCHEMES: dict[str, LabelScheme] = {
    s.name: s
    for s in (MGT_SCHEME, SEMEVAL_SCHEME, VAST_NUMERIC_SCHEME, LLM_ANSWER_SCHEME)
}


def get_scheme(name: str) -> LabelScheme:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown label scheme {name!r}") from None


def parse_label(text: str, scheme: "LabelScheme | str") -> StanceLabel:
    """Map a surface label string onto the canonical label space."""
    if isinstance(scheme, str):
        scheme = get_scheme(scheme)
    return scheme.parse(text)


@dataclass(frozen=True)
class StanceExample:
    """A (post, topic, label) triple — the atom of every dataset."""

    post: str
    topic: str
    id: str
    label: Optional[StanceLabel] = None
    source: str = "real"

    def __post_init__(self):
        if not self.post.strip():
            raise ValueError("post must be non-empty after trimming")
        if not self.topic.strip():
            raise ValueError("topic must be non-empty after trimming")
        if not self.id:
            raise ValueError("example id must be non-empty")
        if self.source not in ("real", "generated"):
            raise ValueError(f"invalid source {self.source!r}")
        if self.source == "generated" and self.label is None:
            raise ValueError("generated examples must carry a label")


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of examples.

    Iteration order is insertion order; ids are unique within a dataset.
    """

    examples: tuple[StanceExample, ...]
    format_tag: str

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        if self.format_tag not in ("vast", "semeval", "mgt"):
            raise ValueError(f"invalid format_tag {self.format_tag!r}")
        seen: set[str] = set()
        for ex in self.examples:
            if ex.id in seen:
                raise ValueError(f"duplicate example id {ex.id!r}")
            seen.add(ex.id)

    def __iter__(self) -> Iterator[StanceExample]:
        return iter(self.examples)

    def __len__(self) -> int:
        return len(self.examples)


def normalize_topic(topic: str) -> str:
    """Trim and collapse internal whitespace; case is preserved."""
    return " ".join(topic.split())


def group_by_topic(dataset: Dataset) -> "dict[str, list[StanceExample]]":
    """Group examples by normalized topic.

    Keys are sorted by UTF-8 byte order; within a group the original
    dataset order is preserved.
    """
    groups: dict[str, list[StanceExample]] = {}
    for ex in dataset:
        groups.setdefault(normalize_topic(ex.topic), []).append(ex)
    return {t: groups[t] for t in sorted(groups, key=lambda t: t.encode("utf-8"))}


def derive_seed(global_seed: int, name: str) -> int:
    """Expand one global seed into a per-module seed.

    Split rule: blake2b-64 digest of ``"{global_seed}/{name}"`` interpreted
    big-endian. A single integer therefore reproduces a full run.
    """
    digest = hashlib.blake2b(
        f"{global_seed}/{name}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")
