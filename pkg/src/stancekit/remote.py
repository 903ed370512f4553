"""HTTP adapter for a remotely served classifier.

Lets a served neural model plug into the pipeline without changing any
orchestration code. The server must expose four JSON endpoints under one
base URL:

``POST {base}/predict``
    body ``{"post": str, "topic": str}`` ->
    ``{"label": "pro"|"con"|"neutral", "probabilities": [p, c, n]}``

``POST {base}/train``
    body ``{"examples": [{"post", "topic", "label"}], "class_set":
    ["pro", ...], "hyper": {...} | null}`` ->
    ``{"epoch_losses": [...], "initial_loss": x, "final_loss": y}``

``POST {base}/snapshot``
    body ``{}`` -> ``{"backend_id": str, "state": "<base64>"}``

``POST {base}/restore``
    body ``{"backend_id": str, "state": "<base64>"}`` -> ``{"ok": true}``

Labels travel as canonical lowercase names. ``REMOTE_SUGGESTED_HYPER``
holds fine-tuning defaults suited to transformer-style served models.
"""

from __future__ import annotations

import base64
from typing import Iterable, Mapping, Optional, Sequence

import requests

from .classifier import (
    BackendCapabilities,
    ClassifierBackend,
    ClassifierSnapshot,
    LabelOutsideClassSet,
    SnapshotBackendMismatch,
    TrainReport,
)
from .core import LABEL_ORDER, StanceExample, StanceLabel

BACKEND_REMOTE = "remote-http"

#: Fine-tuning defaults to suggest to a served transformer model.
REMOTE_SUGGESTED_HYPER: dict[str, object] = {"learning_rate": 1e-5, "epochs": 10}


class RemoteHttpBackend(ClassifierBackend):
    """Client side of the predict/train/snapshot/restore wire protocol."""

    backend_id = BACKEND_REMOTE

    def __init__(self, base_url: str, session=None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session if session is not None else requests.Session()

    @property
    def capabilities(self) -> BackendCapabilities:
        return BackendCapabilities(trainable=True, snapshotable=True)

    def _post(self, endpoint: str, body: dict) -> dict:
        resp = self._session.post(
            f"{self.base_url}/{endpoint}", json=body, timeout=self.timeout
        )
        resp.raise_for_status()
        return resp.json()

    def predict(
        self, post: str, topic: str
    ) -> tuple[StanceLabel, tuple[float, float, float]]:
        data = self._post("predict", {"post": post, "topic": topic})
        label = StanceLabel.from_name(data["label"])
        probs = tuple(float(p) for p in data["probabilities"])
        if len(probs) != len(LABEL_ORDER):
            raise ValueError(f"expected {len(LABEL_ORDER)} probabilities, got {len(probs)}")
        return label, probs  # type: ignore[return-value]

    def train(
        self,
        examples: Sequence[StanceExample],
        class_set: Optional[Iterable[StanceLabel]] = None,
        hyper_overrides: Optional[Mapping[str, object]] = None,
    ) -> TrainReport:
        classes = tuple(class_set) if class_set is not None else LABEL_ORDER
        payload_examples = []
        for ex in examples:
            if ex.label is None or ex.label not in classes:
                raise LabelOutsideClassSet(ex.id, ex.label)
            payload_examples.append(
                {"post": ex.post, "topic": ex.topic, "label": ex.label.value}
            )
        data = self._post(
            "train",
            {
                "examples": payload_examples,
                "class_set": [c.value for c in classes],
                "hyper": dict(hyper_overrides) if hyper_overrides else None,
            },
        )
        return TrainReport(
            epoch_losses=[float(x) for x in data["epoch_losses"]],
            initial_loss=float(data["initial_loss"]),
            final_loss=float(data["final_loss"]),
            n_examples=len(payload_examples),
        )

    def snapshot(self) -> ClassifierSnapshot:
        data = self._post("snapshot", {})
        return ClassifierSnapshot(
            backend_id=data["backend_id"],
            state=base64.b64decode(data["state"]),
        )

    def restore(self, snapshot: ClassifierSnapshot) -> None:
        if snapshot.backend_id != self.backend_id:
            raise SnapshotBackendMismatch(self.backend_id, snapshot.backend_id)
        self._post(
            "restore",
            {
                "backend_id": snapshot.backend_id,
                "state": base64.b64encode(snapshot.state).decode("ascii"),
            },
        )

    def serialize(self) -> bytes:
        return self.snapshot().state
