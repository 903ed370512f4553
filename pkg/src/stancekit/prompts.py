"""Bit-exact prompt rendering from checked-in template fixtures.

Templates live as plain-text files under ``templates/``; each one declares
a fixed placeholder set (see ``templates/NOTES.md``). Rendering replaces
``{name}`` for declared names only, in a single pass, so literal braces
elsewhere in a template — and in bound values — survive untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping

TEMPLATE_PLACEHOLDERS: dict[str, tuple[str, ...]] = {
    "topic_generation": ("post",),
    "post_generation": ("topic", "label", "post"),
    "stance_classification": ("topic", "post"),
}


class PromptError(Exception):
    """Base class for binding errors raised by :func:`render`."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"{type(self).__name__}: {name!r}")


class MissingBinding(PromptError):
    pass


class ExtraBinding(PromptError):
    pass


class EmptyBinding(PromptError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    placeholders: tuple[str, ...]


@lru_cache(maxsize=None)
def get_template(template_id: str) -> PromptTemplate:
    if template_id not in TEMPLATE_PLACEHOLDERS:
        raise ValueError(f"unknown template {template_id!r}")
    body = (
        resources.files(__package__)
        .joinpath("templates", f"{template_id}.txt")
        .read_text(encoding="utf-8")
    )
    return PromptTemplate(template_id, body, TEMPLATE_PLACEHOLDERS[template_id])


def render(template_id: str, bindings: Mapping[str, str]) -> str:
    """Substitute bindings into a template, verbatim.

    Bindings must supply exactly the declared placeholders and every value
    must be non-empty. Identical inputs yield byte-identical output.
    """
    template = get_template(template_id)
    declared = set(template.placeholders)
    for name in sorted(declared - bindings.keys()):
        raise MissingBinding(name)
    for name in sorted(bindings.keys() - declared):
        raise ExtraBinding(name)
    for name in template.placeholders:
        if not bindings[name].strip():
            raise EmptyBinding(name)
    pattern = re.compile(
        "|".join(r"\{%s\}" % re.escape(name) for name in template.placeholders)
    )
    return pattern.sub(lambda m: bindings[m.group(0)[1:-1]], template.body)
