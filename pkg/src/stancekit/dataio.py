"""Dataset readers and writers for the three on-disk formats.

``vast``     comma-separated with header; column names configurable
             (defaults: post, new_topic, label); numeric labels
             (1 pro / 0 con / 2 neutral) unless a scheme override is given.
``semeval``  tab-separated with header columns Tweet, Target, Stance;
             FAVOR / AGAINST / NONE labels. Extra columns are ignored.
``mgt``      JSON lines with fields post, topic, label (agree / disagree /
             neutral) and source_post_id; UTF-8, LF line endings.

Row order is preserved on read and ids derive from the row index.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Optional, Sequence

from .core import (
    LLM_ANSWER_SCHEME,
    SEMEVAL_SCHEME,
    VAST_NUMERIC_SCHEME,
    Dataset,
    LabelScheme,
    StanceExample,
    UnknownLabel,
)
from .datagen import SourcePost

logger = logging.getLogger(__name__)

FORMATS = ("vast", "semeval", "mgt")

DEFAULT_VAST_COLUMNS = {"post": "post", "topic": "new_topic", "label": "label"}
SEMEVAL_COLUMNS = {"post": "Tweet", "topic": "Target", "label": "Stance"}


class ParseError(Exception):
    """A dataset file failed to parse; carries a 1-based line number."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


def _read_delimited(
    path: Path,
    delimiter: str,
    columns: dict[str, str],
    scheme: LabelScheme,
    format_tag: str,
) -> Dataset:
    examples = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle, delimiter=delimiter)
        if reader.fieldnames is None:
            raise ParseError(1, "missing header row")
        missing = [c for c in columns.values() if c not in reader.fieldnames]
        if missing:
            raise ParseError(1, f"missing columns: {missing}")
        for index, row in enumerate(reader):
            line = index + 2  # header occupies line 1
            post = row.get(columns["post"]) or ""
            topic = row.get(columns["topic"]) or ""
            raw_label = row.get(columns["label"]) or ""
            try:
                label = scheme.parse(raw_label)
            except UnknownLabel as exc:
                raise ParseError(line, str(exc)) from exc
            try:
                examples.append(
                    StanceExample(post=post, topic=topic, id=str(index), label=label)
                )
            except ValueError as exc:
                raise ParseError(line, str(exc)) from exc
    return Dataset(tuple(examples), format_tag)


def _read_mgt(path: Path, scheme: LabelScheme) -> Dataset:
    examples = []
    with path.open(encoding="utf-8") as handle:
        for index, raw in enumerate(handle):
            line = index + 1
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(line, f"invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ParseError(line, "expected a JSON object")
            for key in ("post", "topic", "label"):
                if key not in obj:
                    raise ParseError(line, f"missing field {key!r}")
            try:
                label = scheme.parse(str(obj["label"]))
            except UnknownLabel as exc:
                raise ParseError(line, str(exc)) from exc
            try:
                examples.append(
                    StanceExample(
                        post=str(obj["post"]),
                        topic=str(obj["topic"]),
                        id=str(index),
                        label=label,
                    )
                )
            except ValueError as exc:
                raise ParseError(line, str(exc)) from exc
    return Dataset(tuple(examples), "mgt")


def read_dataset(
    path: "str | Path",
    format: str,
    scheme_override: Optional[LabelScheme] = None,
    vast_columns: Optional[dict[str, str]] = None,
) -> Dataset:
    """Load a dataset file in one of the three formats."""
    path = Path(path)
    if format == "vast":
        scheme = scheme_override or VAST_NUMERIC_SCHEME
        return _read_delimited(
            path, ",", vast_columns or DEFAULT_VAST_COLUMNS, scheme, "vast"
        )
    if format == "semeval":
        return _read_delimited(
            path, "\t", SEMEVAL_COLUMNS, scheme_override or SEMEVAL_SCHEME, "semeval"
        )
    if format == "mgt":
        return _read_mgt(path, scheme_override or LLM_ANSWER_SCHEME)
    raise ValueError(f"unknown dataset format {format!r}")


def write_dataset(dataset: Dataset, path: "str | Path", format: str = "mgt") -> None:
    """Write a dataset; reading it back reproduces every (post, topic, label).

    Only the mgt JSONL format is written. The source_post_id field is the
    part of the example id before the first ``::`` (the convention used by
    generated ids), or the whole id otherwise.
    """
    if format != "mgt":
        raise ValueError(f"only the mgt format is written, got {format!r}")
    lines = []
    for ex in dataset:
        if ex.label is None:
            raise ValueError(f"example {ex.id!r} is unlabeled; cannot write")
        lines.append(
            json.dumps(
                {
                    "post": ex.post,
                    "topic": ex.topic,
                    "label": LLM_ANSWER_SCHEME.surface_for(ex.label),
                    "source_post_id": ex.id.split("::", 1)[0],
                },
                sort_keys=True,
                ensure_ascii=False,
            )
            + "\n"
        )
    Path(path).write_text("".join(lines), encoding="utf-8", newline="\n")


def read_source_posts(path: "str | Path", format: str = "lines") -> list[SourcePost]:
    """Load generation-input posts.

    ``lines`` treats each non-empty line as one post; ``jsonl`` expects a
    ``post`` field per line. Any dataset format also works: its unique
    posts are taken in first-appearance order, keeping the first example's
    id per post.
    """
    path = Path(path)
    posts: list[SourcePost] = []
    if format == "lines":
        with path.open(encoding="utf-8") as handle:
            for index, raw in enumerate(handle):
                text = raw.rstrip("\n")
                if text.strip():
                    posts.append(SourcePost(id=str(index), text=text))
        return posts
    if format == "jsonl":
        with path.open(encoding="utf-8") as handle:
            for index, raw in enumerate(handle):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    obj = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise ParseError(index + 1, f"invalid JSON: {exc}") from exc
                if not isinstance(obj, dict) or "post" not in obj:
                    raise ParseError(index + 1, "expected an object with a post field")
                posts.append(SourcePost(id=str(index), text=str(obj["post"])))
        return posts
    if format in FORMATS:
        dataset = read_dataset(path, format)
        seen: set[str] = set()
        for ex in dataset:
            if ex.post not in seen:
                seen.add(ex.post)
                posts.append(SourcePost(id=ex.id, text=ex.post))
        return posts
    raise ValueError(f"unknown posts format {format!r}")
