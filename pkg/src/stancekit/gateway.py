"""Chat-completion gateway: retries, rate limiting, disk cache, mocks.

One gateway instance fronts a single backend. Backends implement
``complete_text(request) -> str``; the gateway adds exponential-backoff
retries, a persistent response cache (one file per request digest), and a
bounded in-flight limit so pipelines stay polite toward rate-limited APIs.

The HTTP backend speaks the OpenAI-compatible chat-completion shape: the
prompt is sent as a single user message and the first choice's message
content is taken as the response text. The API key is read from the
``STANCEKIT_API_KEY`` environment variable only — never from config files
or flags.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import requests

logger = logging.getLogger(__name__)

API_KEY_ENV = "STANCEKIT_API_KEY"


class GatewayError(Exception):
    pass


class BackendExhausted(GatewayError):
    """All retry attempts failed; carries the last underlying error."""

    def __init__(self, last_error: Exception):
        self.last_error = last_error
        super().__init__(f"backend exhausted after retries: {last_error!r}")


class MockMiss(GatewayError):
    """Strict mock backend has no fixture for the request digest."""

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"no mock fixture for request digest {key}")


@dataclass(frozen=True)
class LlmRequest:
    model_name: str
    prompt: str
    temperature: float
    max_tokens: int
    seed_hint: Optional[int] = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError(f"temperature must be finite and >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    from_cache: bool
    attempts: int


@dataclass(frozen=True)
class CacheEntry:
    key: str
    value: str
    created_at: float


def cache_key(request: LlmRequest) -> str:
    """Stable content digest of the request.

    Covers model_name, prompt, temperature, and max_tokens; independent of
    seed_hint and wall clock.
    """
    payload = json.dumps(
        {
            "model_name": request.model_name,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.5
    multiplier: float = 2.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.base_delay < 0:
            raise ValueError("base_delay must be >= 0")
        if self.multiplier <= 0:
            raise ValueError("multiplier must be > 0")


class ChatBackend:
    """Interface a gateway backend implements."""

    def complete_text(self, request: LlmRequest) -> str:
        raise NotImplementedError


class HttpChatBackend(ChatBackend):
    """OpenAI-compatible chat-completion endpoint over HTTP."""

    def __init__(
        self,
        endpoint_url: str,
        api_key: Optional[str] = None,
        timeout: float = 60.0,
        session=None,
    ):
        self.endpoint_url = endpoint_url
        self.timeout = timeout
        self._api_key = api_key
        self._session = session if session is not None else requests.Session()

    def complete_text(self, request: LlmRequest) -> str:
        headers = {"Content-Type": "application/json"}
        key = self._api_key or os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": request.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed_hint is not None:
            body["seed"] = request.seed_hint
        resp = self._session.post(
            self.endpoint_url, json=body, headers=headers, timeout=self.timeout
        )
        resp.raise_for_status()
        data = resp.json()
        return data["choices"][0]["message"]["content"]


class DirectoryMockBackend(ChatBackend):
    """Replays fixtures from a directory of ``<request-digest>.txt`` files.

    In strict mode a missing fixture raises :class:`MockMiss`; otherwise the
    backend returns an empty string (which downstream generation treats as
    a dropped slot).
    """

    def __init__(self, fixtures_dir: "str | Path", strict: bool = True):
        self.fixtures_dir = Path(fixtures_dir)
        self.strict = strict

    def complete_text(self, request: LlmRequest) -> str:
        key = cache_key(request)
        path = self.fixtures_dir / f"{key}.txt"
        if not path.exists():
            if self.strict:
                raise MockMiss(key)
            return ""
        return path.read_text(encoding="utf-8")


def write_mock_fixture(fixtures_dir: "str | Path", request: LlmRequest, text: str) -> Path:
    """Store a response fixture under the request's digest."""
    directory = Path(fixtures_dir)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{cache_key(request)}.txt"
    path.write_text(text, encoding="utf-8")
    return path


MockRule = tuple[str, Union[str, Callable[[str], str]]]


class ScriptedMockBackend(ChatBackend):
    """Responds by substring match against the prompt.

    The first rule whose substring occurs in the prompt wins; a callable
    rule value receives the full prompt. With no match and no default the
    backend raises :class:`MockMiss`.
    """

    def __init__(self, rules: Sequence[MockRule], default: Optional[str] = None):
        self.rules = list(rules)
        self.default = default

    def complete_text(self, request: LlmRequest) -> str:
        for substring, response in self.rules:
            if substring in request.prompt:
                return response(request.prompt) if callable(response) else response
        if self.default is not None:
            return self.default
        raise MockMiss(cache_key(request))


class LlmGateway:
    """Cached, retrying, concurrency-bounded access to one backend.

    Safe to call from many threads; cache access is synchronized and the
    in-flight limit is enforced per gateway instance. With a mock backend
    and a fixed fixture set, any pipeline run is bit-reproducible.
    """

    def __init__(
        self,
        backend: ChatBackend,
        cache_dir: "str | Path | None" = None,
        retry: Optional[RetryPolicy] = None,
        max_in_flight: int = 4,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self._backend = backend
        self._cache_dir = Path(cache_dir) if cache_dir is not None else None
        if self._cache_dir is not None:
            self._cache_dir.mkdir(parents=True, exist_ok=True)
        self._retry = retry or RetryPolicy()
        self._in_flight = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self._mem_cache: dict[str, str] = {}
        self.backend_calls = 0
        self.cache_hits = 0

    def complete(self, request: LlmRequest, *, bypass_cache: bool = False) -> LlmResponse:
        """Return the response for a request, from cache when possible.

        A cache hit performs no backend call. ``bypass_cache`` skips the
        cache read (the fresh result still overwrites the stored value);
        used for parse retries where the cached text is known bad.
        """
        key = cache_key(request)
        if not bypass_cache:
            cached = self._cache_get(key)
            if cached is not None:
                with self._lock:
                    self.cache_hits += 1
                return LlmResponse(cached, from_cache=True, attempts=1)
        text, attempts = self._call_with_retry(request)
        self._cache_put(key, text)
        return LlmResponse(text, from_cache=False, attempts=attempts)

    def _call_with_retry(self, request: LlmRequest) -> tuple[str, int]:
        delay = self._retry.base_delay
        last_error: Optional[Exception] = None
        for attempt in range(1, self._retry.max_attempts + 1):
            with self._in_flight:
                with self._lock:
                    self.backend_calls += 1
                try:
                    return self._backend.complete_text(request), attempt
                except MockMiss:
                    raise
                except Exception as exc:
                    last_error = exc
                    logger.warning(
                        "backend attempt %d/%d failed: %r",
                        attempt,
                        self._retry.max_attempts,
                        exc,
                    )
            if attempt < self._retry.max_attempts and delay > 0:
                time.sleep(delay)
                delay *= self._retry.multiplier
        assert last_error is not None
        raise BackendExhausted(last_error)

    # Cache files hold a one-line JSON metadata header followed by the raw
    # response text. Writes are atomic (tmp + rename) so concurrent writers
    # of the same key converge to one stored value.

    def _cache_get(self, key: str) -> Optional[str]:
        with self._lock:
            if key in self._mem_cache:
                return self._mem_cache[key]
        if self._cache_dir is None:
            return None
        path = self._cache_dir / f"{key}.txt"
        if not path.exists():
            return None
        entry = read_cache_entry(path)
        with self._lock:
            self._mem_cache[key] = entry.value
        return entry.value

    def _cache_put(self, key: str, text: str) -> None:
        with self._lock:
            self._mem_cache[key] = text
        if self._cache_dir is None:
            return
        header = json.dumps({"key": key, "created_at": time.time()}, sort_keys=True)
        tmp = self._cache_dir / f"{key}.txt.tmp.{os.getpid()}.{threading.get_ident()}"
        tmp.write_text(header + "\n" + text, encoding="utf-8")
        os.replace(tmp, self._cache_dir / f"{key}.txt")


def read_cache_entry(path: "str | Path") -> CacheEntry:
    """Parse one on-disk cache file (metadata header line + raw text)."""
    raw = Path(path).read_text(encoding="utf-8")
    header_line, _, text = raw.partition("\n")
    header = json.loads(header_line)
    return CacheEntry(key=header["key"], value=text, created_at=header["created_at"])
