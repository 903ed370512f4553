"""Shared test utilities: independent oracles, corpora, and mock builders."""

from __future__ import annotations

import random
import re

from stancekit import (
    Dataset,
    GenSettings,
    LlmGateway,
    ScriptedMockBackend,
    StanceExample,
    StanceLabel,
)
from stancekit.gateway import RetryPolicy

LABELS = (StanceLabel.PRO, StanceLabel.CON, StanceLabel.NEUTRAL)


# --- Independent brute-force metric oracle -------------------------------
# Deliberately written from the definitions, without touching the package's
# metric code: count tp/fp/fn by looping, apply the formulas with 0/0 -> 0.

def brute_force_prf(gold, pred):
    out = {}
    for c in LABELS:
        tp = sum(1 for g, p in zip(gold, pred) if g is c and p is c)
        fp = sum(1 for g, p in zip(gold, pred) if g is not c and p is c)
        fn = sum(1 for g, p in zip(gold, pred) if g is c and p is not c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out[c] = (precision, recall, f1)
    return out


def brute_force_macro(gold, pred, classes=(StanceLabel.PRO, StanceLabel.CON)):
    prf = brute_force_prf(gold, pred)
    return sum(prf[c][2] for c in classes) / len(classes)


def random_label_pairs(rng: random.Random, size: int):
    gold = [rng.choice(LABELS) for _ in range(size)]
    pred = [rng.choice(LABELS) for _ in range(size)]
    return gold, pred


# --- Prompt binding sets shared with the frozen rendered fixtures --------

RENDER_CASES = {
    "topic_generation": [
        {"post": "Without strong rules, companies will cut corners and pass the costs on to everyone else."},
        {"post": "Plug-in cars just move the pollution from the tailpipe to the power plant."},
        {"post": "Line one of the post.\nLine two of the post."},
    ],
    "post_generation": [
        {"topic": "dual citizenship", "label": "agree",
         "post": "I hold two passports and it has never been a problem."},
        {"topic": "Role of government", "label": "disagree",
         "post": "Markets sort most things out on their own."},
        {"topic": "charter schools", "label": "neutral",
         "post": "Our district opened two new schools last year.\nEnrollment is up."},
    ],
    "stance_classification": [
        {"topic": "Declawing cats", "post": "Declawing is banned in many countries for a reason."},
        {"topic": "Illegal Immigration", "post": "Border policy is more complicated than slogans."},
        {"topic": "city bike lanes", "post": "They repainted the lanes again.\nTraffic got worse."},
    ],
}


# --- Mock gateway builders ------------------------------------------------

_TOPIC_LINE = re.compile(r"^topic: (.*)$", re.MULTILINE)
_STANCE_LINE = re.compile(r"^stance: (.*)$", re.MULTILINE)


def parse_generation_prompt(prompt: str) -> tuple[str, str]:
    """Pull the bound topic and stance word back out of a generation prompt."""
    topic = _TOPIC_LINE.search(prompt)
    stance = _STANCE_LINE.search(prompt)
    assert topic and stance, "not a generation prompt"
    return topic.group(1), stance.group(1)


def compliant_generation_mock() -> ScriptedMockBackend:
    """Answers every generation prompt with a non-empty topical post."""

    def respond(prompt: str) -> str:
        topic, stance = parse_generation_prompt(prompt)
        return f"Honestly, when it comes to {topic}, I {stance} with the usual take."

    return ScriptedMockBackend([("stance: ", respond)])


def vocab_generation_mock(vocab: dict[tuple[str, str], str]) -> ScriptedMockBackend:
    """Generation mock emitting a topic-private marker word per (topic, stance)."""

    def respond(prompt: str) -> str:
        topic, stance = parse_generation_prompt(prompt)
        marker = vocab[(topic, stance)]
        return f"Thinking about {topic} again today and {marker} sums it up for me."

    return ScriptedMockBackend([("stance: ", respond)])


def make_gateway(backend, cache_dir=None, max_attempts=3) -> LlmGateway:
    return LlmGateway(
        backend,
        cache_dir=cache_dir,
        retry=RetryPolicy(max_attempts=max_attempts, base_delay=0.0),
    )


def gen_settings(**overrides) -> GenSettings:
    defaults = dict(model_name="mock-model", temperature=0.7, max_tokens=128)
    defaults.update(overrides)
    return GenSettings(**defaults)


# --- Synthetic corpora ----------------------------------------------------

_FILLER = [
    "the", "council", "meeting", "ran", "long", "again", "people", "kept",
    "talking", "about", "it", "all", "week", "nobody", "agreed", "street",
]


def _sentence(rng: random.Random, extra: str) -> str:
    words = [rng.choice(_FILLER) for _ in range(8)]
    words.insert(rng.randrange(len(words)), extra)
    return " ".join(words)


def separable_corpus(n: int = 200, seed: int = 0, topic: str = "city planning") -> Dataset:
    """Linearly separable two-class corpus: one signature word per class."""
    rng = random.Random(seed)
    examples = []
    for i in range(n):
        label = StanceLabel.PRO if i % 2 == 0 else StanceLabel.CON
        marker = "uplifting" if label is StanceLabel.PRO else "dreadful"
        examples.append(
            StanceExample(_sentence(rng, marker), topic, f"sep{i}", label)
        )
    return Dataset(tuple(examples), "mgt")


TOPIC_VOCAB = {
    ("solar subsidies", "agree"): "glimvar",
    ("solar subsidies", "disagree"): "brontak",
    ("school uniforms", "agree"): "quorfel",
    ("school uniforms", "disagree"): "merkanto",
    ("city bike lanes", "agree"): "zulbrine",
    ("city bike lanes", "disagree"): "fexolunt",
}


def topic_private_corpus(per_side: int = 2, seed: int = 1) -> Dataset:
    """Each topic has a private marker word per stance; labels follow markers."""
    rng = random.Random(seed)
    examples = []
    i = 0
    for (topic, stance), marker in TOPIC_VOCAB.items():
        label = StanceLabel.PRO if stance == "agree" else StanceLabel.CON
        for _ in range(per_side):
            examples.append(
                StanceExample(_sentence(rng, marker), topic, f"tp{i}", label)
            )
            i += 1
    return Dataset(tuple(examples), "mgt")
