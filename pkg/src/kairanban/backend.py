"""Text-completion backends.

Two implementations share one duck-typed surface (``complete``, ``session``,
``max_in_flight``): an HTTP client for OpenAI-compatible chat-completions
endpoints, and a scripted mock that replays canned replies.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import httpx

from .errors import AuthError, RateLimited, ScriptExhausted, TransportError

log = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.openai.com/v1"
API_KEY_ENV = "KAIRANBAN_API_KEY"
BASE_URL_ENV = "KAIRANBAN_BASE_URL"


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def to_wire(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    latency_ms: int = 0
    attempt_count: int = 1

    def __post_init__(self):
        if self.attempt_count < 1:
            raise ValueError("attempt_count must be >= 1")


def fingerprint(messages: Iterable[Message]) -> str:
    """Stable hash of the concatenated message texts."""
    joined = "\n".join(m.content for m in messages)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


class ScriptedBackend:
    """Deterministic mock that answers from a queue and/or a fingerprint map.

    A request whose fingerprint is in ``by_fingerprint`` gets the mapped reply;
    anything else pops the next queued reply. ``session()`` hands out an
    independent cursor over the same script, so each pipeline instance sees
    the script from the start regardless of scheduling.
    """

    max_in_flight = 4

    def __init__(
        self,
        responses: Sequence[str] = (),
        by_fingerprint: Mapping[str, str] | None = None,
        *,
        _stats: dict | None = None,
    ):
        self.responses = tuple(responses)
        self.by_fingerprint = dict(by_fingerprint or {})
        self._queue = deque(self.responses)
        self._lock = threading.Lock()
        self.consumed = 0
        self.requests: list[CompletionRequest] = []
        self.fingerprint_hits: list[str] = []
        # Shared across sessions so callers can count total backend traffic.
        self._stats = _stats if _stats is not None else {"calls": 0}

    @property
    def total_calls(self) -> int:
        return self._stats["calls"]

    def session(self) -> ScriptedBackend:
        return ScriptedBackend(self.responses, self.by_fingerprint, _stats=self._stats)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        fp = fingerprint(req.messages)
        with self._lock:
            self.requests.append(req)
            if fp in self.by_fingerprint:
                self.fingerprint_hits.append(fp)
                text = self.by_fingerprint[fp]
            elif self._queue:
                text = self._queue.popleft()
            else:
                raise ScriptExhausted(
                    f"script exhausted after {self.consumed} replies"
                )
            self.consumed += 1
            self._stats["calls"] += 1
        return CompletionResponse(text=text, latency_ms=0, attempt_count=1)

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedBackend:
        """Load a JSON-lines script: ``{"reply": ..., "fingerprint": optional}``."""
        queue, mapped = [], {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                if row.get("fingerprint"):
                    mapped[row["fingerprint"]] = row["reply"]
                else:
                    queue.append(row["reply"])
        return cls(queue, mapped)


class HttpBackend:
    """Client for ``POST {base_url}/chat/completions``.

    Network errors, 5xx and 429 are retried with exponential backoff
    (``backoff_base * 2**attempt`` seconds, +/- ``jitter`` fraction). 401/403
    raise :class:`AuthError` immediately; other 4xx are terminal.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        *,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        jitter: float = 0.2,
        max_in_flight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
        client: httpx.Client | None = None,
    ):
        self.base_url = (base_url or os.getenv(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self.api_key = api_key if api_key is not None else os.getenv(API_KEY_ENV, "")
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.jitter = jitter
        self.max_in_flight = max_in_flight
        self._sleep = sleep
        self._rng = random.Random()
        self._limiter = threading.BoundedSemaphore(max_in_flight)
        self._client = client or httpx.Client(timeout=timeout)

    def session(self) -> HttpBackend:
        return self

    def close(self) -> None:
        self._client.close()

    def _delay(self, attempt: int) -> float:
        base = self.backoff_base * (2**attempt)
        return base * (1 + self._rng.uniform(-self.jitter, self.jitter))

    def _post_once(self, payload: dict) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(
                f"{self.base_url}/chat/completions", json=payload, headers=headers
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"transport failure: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code == 429:
            raise RateLimited("HTTP 429 rate limited", status=429)
        if resp.status_code >= 400:
            raise TransportError(
                f"HTTP {resp.status_code}: {resp.text[:200]}", status=resp.status_code
            )
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion body: {exc}") from exc
        return content or ""

    @staticmethod
    def _retryable(exc: TransportError) -> bool:
        return exc.status is None or exc.status == 429 or exc.status >= 500

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        payload = req.to_wire()
        start = time.monotonic()
        attempt = 0
        with self._limiter:
            while True:
                attempt += 1
                try:
                    text = self._post_once(payload)
                    break
                except TransportError as exc:
                    if not self._retryable(exc) or attempt > self.max_retries:
                        raise
                    delay = self._delay(attempt - 1)
                    log.warning("attempt %d failed (%s); retrying in %.2fs", attempt, exc, delay)
                    self._sleep(delay)
        latency = int((time.monotonic() - start) * 1000)
        return CompletionResponse(text=text, latency_ms=latency, attempt_count=attempt)
