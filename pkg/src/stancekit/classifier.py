"""Pluggable stance-classifier backends.

Three backends share one contract: a fully native trainable linear model
over hashed n-gram features (a desk-scale stand-in for a fine-tuned
transformer), an LLM zero-shot classifier, and — in :mod:`stancekit.remote`
— an HTTP adapter for a served model. Trainable backends are snapshotable
so an adaptation loop can fine-tune and then restore exact parameters.

Feature hashing is pinned so models serialize portably: n-grams are hashed
with keyed blake2b (key ``FEATURE_HASH_KEY``, digest size 8, little-endian)
into ``FEATURE_DIM`` buckets.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import hashlib

import numpy as np

from .core import LABEL_ORDER, LLM_ANSWER_SCHEME, StanceExample, StanceLabel
from .gateway import LlmGateway, LlmRequest
from .prompts import render

logger = logging.getLogger(__name__)

FEATURE_DIM = 2 ** 18
FEATURE_HASH_KEY = b"stancekit-feature-hash-v1"
SEPARATOR_TOKEN = "[SEP]"
BACKEND_NATIVE = "native-linear"
BACKEND_LLM = "llm-zero-shot"

_TOKEN_RE = re.compile(r"[0-9a-z]+")
_WORD_RE = re.compile(r"[a-z]+")


class EmptyTrainingSet(Exception):
    pass


class LabelOutsideClassSet(Exception):
    def __init__(self, example_id: str, label: Optional[StanceLabel]):
        self.example_id = example_id
        self.label = label
        super().__init__(
            f"example {example_id!r} has label {label} outside the training class set"
        )


class SnapshotBackendMismatch(Exception):
    def __init__(self, expected: str, got: str):
        super().__init__(f"snapshot from backend {got!r} cannot restore {expected!r}")


class UnparseableAnswer(Exception):
    def __init__(self, text: str):
        self.text = text
        super().__init__(f"no stance word recognized in response {text!r}")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


def ngram_counts(post: str, topic: str) -> dict[str, int]:
    """Unigram and bigram counts over post tokens, a separator, topic tokens.

    The separator sits inside the stream, so bigrams crossing it exist and
    swapping post and topic yields a different feature set.
    """
    stream = tokenize(post) + [SEPARATOR_TOKEN] + tokenize(topic)
    counts: dict[str, int] = {}
    for tok in stream:
        counts[tok] = counts.get(tok, 0) + 1
    for a, b in zip(stream, stream[1:]):
        bigram = f"{a} {b}"
        counts[bigram] = counts.get(bigram, 0) + 1
    return counts


def hash_feature(ngram: str) -> int:
    digest = hashlib.blake2b(
        ngram.encode("utf-8"), digest_size=8, key=FEATURE_HASH_KEY
    ).digest()
    return int.from_bytes(digest, "little") % FEATURE_DIM


@dataclass(frozen=True)
class FeatureVector:
    """Sparse vector over the hashed feature space: sorted unique indices."""

    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if len(self.indices) != len(self.weights):
            raise ValueError("indices and weights must have equal length")


def featurize(post: str, topic: str) -> FeatureVector:
    """Hashed, L2-normalized n-gram counts of ``post [SEP] topic``."""
    if not post.strip() or not topic.strip():
        raise ValueError("post and topic must be non-empty")
    accum: dict[int, float] = {}
    for ngram, count in ngram_counts(post, topic).items():
        idx = hash_feature(ngram)
        accum[idx] = accum.get(idx, 0.0) + count
    indices = np.array(sorted(accum), dtype=np.int64)
    weights = np.array([accum[i] for i in indices], dtype=np.float64)
    weights /= np.linalg.norm(weights)
    return FeatureVector(indices, weights)


@dataclass(frozen=True)
class TrainHyper:
    """Hyperparameters of the native backend's SGD trainer."""

    learning_rate: float = 0.1
    epochs: int = 10
    l2: float = 1e-4
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def replaced(self, overrides: Mapping[str, object]) -> "TrainHyper":
        unknown = set(overrides) - {f for f in asdict(self)}
        if unknown:
            raise ValueError(f"unknown hyperparameter overrides: {sorted(unknown)}")
        return replace(self, **overrides)  # type: ignore[arg-type]


@dataclass
class TrainReport:
    epoch_losses: list[float]
    initial_loss: float
    final_loss: float
    n_examples: int


@dataclass(frozen=True)
class BackendCapabilities:
    trainable: bool
    snapshotable: bool

    def __post_init__(self):
        if self.trainable and not self.snapshotable:
            raise ValueError("a trainable backend must be snapshotable")


@dataclass(frozen=True)
class ClassifierSnapshot:
    """Opaque serialized parameter state plus the owning backend id."""

    backend_id: str
    state: bytes


class ClassifierBackend:
    """Contract every classifier backend implements.

    ``predict`` is pure given fixed parameters; training requires exclusive
    access to the backend instance.
    """

    backend_id: str = "abstract"

    @property
    def capabilities(self) -> BackendCapabilities:
        raise NotImplementedError

    def predict(
        self, post: str, topic: str
    ) -> tuple[StanceLabel, tuple[float, float, float]]:
        raise NotImplementedError

    def train(
        self,
        examples: Sequence[StanceExample],
        class_set: Optional[Iterable[StanceLabel]] = None,
        hyper_overrides: Optional[Mapping[str, object]] = None,
    ) -> TrainReport:
        raise NotImplementedError(f"backend {self.backend_id!r} is not trainable")

    def snapshot(self) -> ClassifierSnapshot:
        raise NotImplementedError(f"backend {self.backend_id!r} is not snapshotable")

    def restore(self, snapshot: ClassifierSnapshot) -> None:
        raise NotImplementedError(f"backend {self.backend_id!r} is not snapshotable")

    def serialize(self) -> bytes:
        raise NotImplementedError


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    probs = exp / exp.sum()
    return probs / probs.sum()


class NativeLinearBackend(ClassifierBackend):
    """Trainable multinomial logistic regression over hashed features.

    Weights start at zero, one row per class in ``LABEL_ORDER``. Training
    minimizes cross-entropy with an L2 penalty via mini-batch SGD; reported
    losses are the unpenalized cross-entropy.
    """

    backend_id = BACKEND_NATIVE

    def __init__(self, hyper: Optional[TrainHyper] = None):
        self.hyper = hyper or TrainHyper()
        self.W = np.zeros((len(LABEL_ORDER), FEATURE_DIM), dtype=np.float64)
        self.b = np.zeros(len(LABEL_ORDER), dtype=np.float64)

    @property
    def capabilities(self) -> BackendCapabilities:
        return BackendCapabilities(trainable=True, snapshotable=True)

    def _logits(self, fv: FeatureVector) -> np.ndarray:
        return self.W[:, fv.indices] @ fv.weights + self.b

    def predict_features(
        self, fv: FeatureVector
    ) -> tuple[StanceLabel, tuple[float, float, float]]:
        probs = _softmax(self._logits(fv))
        label = LABEL_ORDER[int(np.argmax(probs))]
        return label, (float(probs[0]), float(probs[1]), float(probs[2]))

    def predict(
        self, post: str, topic: str
    ) -> tuple[StanceLabel, tuple[float, float, float]]:
        return self.predict_features(featurize(post, topic))

    def example_loss(self, fv: FeatureVector, label_index: int) -> float:
        """Cross-entropy of one example at the current parameters."""
        probs = _softmax(self._logits(fv))
        return float(-np.log(max(probs[label_index], 1e-300)))

    def example_gradients(
        self, fv: FeatureVector, label_index: int
    ) -> tuple[np.ndarray, np.ndarray]:
        """Analytic cross-entropy gradients for one example.

        Returns ``(grad_b, grad_W_cols)`` where ``grad_W_cols[c, t]`` is the
        derivative w.r.t. ``W[c, fv.indices[t]]``. The gradient w.r.t. every
        inactive column is exactly zero.
        """
        probs = _softmax(self._logits(fv))
        err = probs.copy()
        err[label_index] -= 1.0
        return err, np.outer(err, fv.weights)

    def _mean_loss(self, fvs: Sequence[FeatureVector], ys: np.ndarray) -> float:
        return float(
            np.mean([self.example_loss(fv, int(y)) for fv, y in zip(fvs, ys)])
        )

    def train(
        self,
        examples: Sequence[StanceExample],
        class_set: Optional[Iterable[StanceLabel]] = None,
        hyper_overrides: Optional[Mapping[str, object]] = None,
    ) -> TrainReport:
        """Mini-batch SGD; classes outside ``class_set`` keep frozen rows.

        Example order is reshuffled each epoch from the hyperparameter seed,
        so the same seed and data always yield identical final weights.
        """
        if not examples:
            raise EmptyTrainingSet("no training examples")
        hyper = self.hyper.replaced(dict(hyper_overrides or {}))
        classes = frozenset(class_set) if class_set is not None else frozenset(LABEL_ORDER)
        for ex in examples:
            if ex.label is None or ex.label not in classes:
                raise LabelOutsideClassSet(ex.id, ex.label)
        fvs = [featurize(ex.post, ex.topic) for ex in examples]
        ys = np.array([LABEL_ORDER.index(ex.label) for ex in examples], dtype=np.int64)
        active_rows = [i for i, c in enumerate(LABEL_ORDER) if c in classes]
        n = len(examples)
        rng = np.random.default_rng(hyper.seed)
        lr = hyper.learning_rate
        initial_loss = self._mean_loss(fvs, ys)
        epoch_losses: list[float] = []
        for _ in range(hyper.epochs):
            order = rng.permutation(n)
            running = 0.0
            for start in range(0, n, hyper.batch_size):
                batch = order[start : start + hyper.batch_size]
                batch_updates = []
                for j in batch:
                    fv = fvs[j]
                    probs = _softmax(self._logits(fv))
                    running += -np.log(max(probs[ys[j]], 1e-300))
                    err = probs.copy()
                    err[ys[j]] -= 1.0
                    batch_updates.append((fv, err))
                if lr == 0.0:
                    continue
                scale = lr / len(batch)
                if hyper.l2 > 0.0:
                    decay = 1.0 - lr * hyper.l2
                    for row in active_rows:
                        self.W[row] *= decay
                for fv, err in batch_updates:
                    for row in active_rows:
                        self.W[row, fv.indices] -= scale * err[row] * fv.weights
                        self.b[row] -= scale * err[row]
            if not (np.isfinite(self.W).all() and np.isfinite(self.b).all()):
                raise RuntimeError("training produced non-finite parameters")
            epoch_losses.append(float(running / n))
        return TrainReport(
            epoch_losses=epoch_losses,
            initial_loss=initial_loss,
            final_loss=self._mean_loss(fvs, ys),
            n_examples=n,
        )

    def grad_check(
        self,
        example: StanceExample,
        n_coords: int = 50,
        step: float = 1e-5,
        seed: int = 0,
    ) -> float:
        """Max relative error between analytic and central-difference gradients.

        Coordinates are sampled among the example's active weight columns
        plus the bias entries. Checks the cross-entropy term (the L2 penalty
        gradient is linear in the weights and needs no numerical guard).
        """
        if example.label is None:
            raise ValueError("grad_check requires a labeled example")
        fv = featurize(example.post, example.topic)
        y = LABEL_ORDER.index(example.label)
        grad_b, grad_w_cols = self.example_gradients(fv, y)
        coords: list[tuple[str, int, int]] = [("b", c, 0) for c in range(len(LABEL_ORDER))]
        coords += [
            ("W", c, t)
            for c in range(len(LABEL_ORDER))
            for t in range(len(fv.indices))
        ]
        rng = np.random.default_rng(seed)
        if len(coords) > n_coords:
            chosen = rng.choice(len(coords), size=n_coords, replace=False)
            coords = [coords[int(i)] for i in chosen]
        max_err = 0.0
        for kind, c, t in coords:
            if kind == "b":
                analytic = grad_b[c]
                original = self.b[c]
                self.b[c] = original + step
                loss_plus = self.example_loss(fv, y)
                self.b[c] = original - step
                loss_minus = self.example_loss(fv, y)
                self.b[c] = original
            else:
                analytic = grad_w_cols[c, t]
                j = fv.indices[t]
                original = self.W[c, j]
                self.W[c, j] = original + step
                loss_plus = self.example_loss(fv, y)
                self.W[c, j] = original - step
                loss_minus = self.example_loss(fv, y)
                self.W[c, j] = original
            numeric = (loss_plus - loss_minus) / (2 * step)
            denom = max(abs(analytic), abs(numeric), 1e-8)
            max_err = max(max_err, abs(analytic - numeric) / denom)
        return max_err

    # Serialized state layout (version 1): one JSON header line holding the
    # backend id, hyperparameters, and dimensions, then b and W as raw
    # little-endian float64 bytes.

    def serialize(self) -> bytes:
        header = json.dumps(
            {
                "format_version": 1,
                "backend_id": self.backend_id,
                "hyper": asdict(self.hyper),
                "n_classes": len(LABEL_ORDER),
                "dim": FEATURE_DIM,
            },
            sort_keys=True,
        ).encode("utf-8")
        return header + b"\n" + self.b.tobytes() + self.W.tobytes()

    def _load_state(self, state: bytes) -> None:
        header_raw, _, payload = state.partition(b"\n")
        header = json.loads(header_raw)
        if header["dim"] != FEATURE_DIM or header["n_classes"] != len(LABEL_ORDER):
            raise ValueError("state dimensions do not match this build")
        self.hyper = TrainHyper(**header["hyper"])
        n_b = len(LABEL_ORDER) * 8
        self.b = np.frombuffer(payload[:n_b], dtype=np.float64).copy()
        self.W = (
            np.frombuffer(payload[n_b:], dtype=np.float64)
            .reshape(len(LABEL_ORDER), FEATURE_DIM)
            .copy()
        )

    def snapshot(self) -> ClassifierSnapshot:
        return ClassifierSnapshot(self.backend_id, self.serialize())

    def restore(self, snapshot: ClassifierSnapshot) -> None:
        if snapshot.backend_id != self.backend_id:
            raise SnapshotBackendMismatch(self.backend_id, snapshot.backend_id)
        self._load_state(snapshot.state)

    # Model files are a JSON container (version 1): backend id, hyper, the
    # dense bias, and non-zero weight columns as {index: [w_pro, w_con,
    # w_neutral]}. JSON float repr round-trips exactly in Python.

    def save(self, path: "str | Path") -> None:
        nonzero = np.nonzero(np.any(self.W != 0.0, axis=0))[0]
        container = {
            "format_version": 1,
            "backend_id": self.backend_id,
            "dim": FEATURE_DIM,
            "hyper": asdict(self.hyper),
            "b": [float(v) for v in self.b],
            "weight_columns": {
                str(int(j)): [float(self.W[c, j]) for c in range(len(LABEL_ORDER))]
                for j in nonzero
            },
        }
        Path(path).write_text(
            json.dumps(container, sort_keys=True), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: "str | Path") -> "NativeLinearBackend":
        container = json.loads(Path(path).read_text(encoding="utf-8"))
        if container.get("backend_id") != BACKEND_NATIVE:
            raise ValueError(f"not a {BACKEND_NATIVE} model file: {path}")
        if container.get("dim") != FEATURE_DIM:
            raise ValueError("model file dimension does not match this build")
        backend = cls(TrainHyper(**container["hyper"]))
        backend.b = np.array(container["b"], dtype=np.float64)
        for j_str, column in container["weight_columns"].items():
            backend.W[:, int(j_str)] = column
        return backend


def parse_stance_answer(text: str) -> StanceLabel:
    """Map a free-form answer to a label: first recognized stance word wins."""
    for word in _WORD_RE.findall(text.lower()):
        if word in LLM_ANSWER_SCHEME.mapping:
            return LLM_ANSWER_SCHEME.parse(word)
    raise UnparseableAnswer(text)


def llm_classify(
    post: str,
    topic: str,
    gateway: LlmGateway,
    *,
    model_name: str = "gpt-3.5-turbo",
    max_tokens: int = 16,
    retries: int = 2,
) -> StanceLabel:
    """Zero-shot stance classification through the gateway (temperature 0).

    Unparseable answers trigger up to ``retries`` fresh calls (cache
    bypassed) before :class:`UnparseableAnswer` is raised.
    """
    prompt = render("stance_classification", {"topic": topic, "post": post})
    request = LlmRequest(model_name, prompt, temperature=0.0, max_tokens=max_tokens)
    last_text = ""
    for attempt in range(1 + retries):
        response = gateway.complete(request, bypass_cache=attempt > 0)
        last_text = response.text
        try:
            return parse_stance_answer(response.text)
        except UnparseableAnswer:
            continue
    raise UnparseableAnswer(last_text)


class LlmClassifierBackend(ClassifierBackend):
    """Zero-shot LLM classification behind the backend contract.

    Probabilities are one-hot on the predicted label. When an answer stays
    unparseable after retries the configured fallback label is used (and
    counted); set ``fallback=None`` to raise instead.
    """

    backend_id = BACKEND_LLM

    def __init__(
        self,
        gateway: LlmGateway,
        model_name: str = "gpt-3.5-turbo",
        max_tokens: int = 16,
        retries: int = 2,
        fallback: Optional[StanceLabel] = StanceLabel.NEUTRAL,
    ):
        self.gateway = gateway
        self.model_name = model_name
        self.max_tokens = max_tokens
        self.retries = retries
        self.fallback = fallback
        self.unparseable_count = 0

    @property
    def capabilities(self) -> BackendCapabilities:
        return BackendCapabilities(trainable=False, snapshotable=False)

    def predict(
        self, post: str, topic: str
    ) -> tuple[StanceLabel, tuple[float, float, float]]:
        try:
            label = llm_classify(
                post,
                topic,
                self.gateway,
                model_name=self.model_name,
                max_tokens=self.max_tokens,
                retries=self.retries,
            )
        except UnparseableAnswer:
            if self.fallback is None:
                raise
            self.unparseable_count += 1
            logger.warning("unparseable answer for topic %r; falling back", topic)
            label = self.fallback
        probs = tuple(1.0 if c is label else 0.0 for c in LABEL_ORDER)
        return label, probs  # type: ignore[return-value]
