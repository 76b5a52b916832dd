"""Model-agnostic LLM access layer.

Every pipeline stage talks to language models through a Gateway that routes
per-role backends (evaluator, suggester, judge, responder). Backends speak a
chat-completions-style HTTP protocol; a scripted stub backend makes every
algorithm testable offline with canned replies.
"""

from __future__ import annotations

import enum
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Protocol

import requests

from .model import GenerationParams, MedevalError

logger = logging.getLogger(__name__)

DEFAULT_MAX_CONCURRENCY = 4
DEFAULT_MAX_RETRIES = 3
DEFAULT_TIMEOUT_S = 60.0


class GatewayError(MedevalError):
    pass


class BackendError(GatewayError):
    """Non-retryable backend failure (4xx, malformed reply)."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class Timeout(GatewayError):
    pass


class RetriesExhausted(GatewayError):
    def __init__(self, message: str, last_error: Exception | None = None):
        super().__init__(message)
        self.last_error = last_error


class ScriptExhausted(GatewayError):
    pass


class Role(str, enum.Enum):
    EVALUATOR = "evaluator"
    SUGGESTER = "suggester"
    JUDGE = "judge"
    RESPONDER = "responder"


@dataclass(frozen=True)
class ChatRequest:
    prompt: str
    system: str | None = None
    params: GenerationParams = GenerationParams()

    def messages(self) -> list[dict[str, str]]:
        msgs = []
        if self.system:
            msgs.append({"role": "system", "content": self.system})
        msgs.append({"role": "user", "content": self.prompt})
        return msgs


@dataclass(frozen=True)
class ChatReply:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class BackendConfig:
    """Connection settings for one backend.

    Only the *name* of the token environment variable is kept; the secret
    itself is read at request time and never stored or serialized.
    """

    endpoint: str
    model: str
    token_env: str | None = None
    timeout_s: float = DEFAULT_TIMEOUT_S
    max_retries: int = DEFAULT_MAX_RETRIES

    def to_dict(self) -> dict[str, Any]:
        return {
            "endpoint": self.endpoint,
            "model": self.model,
            "token_env": self.token_env,
            "timeout_s": self.timeout_s,
            "max_retries": self.max_retries,
        }


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatReply: ...


class HttpBackend:
    """Chat-completions HTTP client with bounded retry on transient failures."""

    def __init__(
        self,
        config: BackendConfig,
        session: requests.Session | None = None,
        backoff_base: float = 0.5,
        rng: random.Random | None = None,
    ):
        self.config = config
        self._session = session or requests.Session()
        self._backoff_base = backoff_base
        self._rng = rng or random.Random()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.token_env:
            token = os.environ.get(self.config.token_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def _sleep_before_retry(self, attempt: int) -> None:
        base = self._backoff_base * (2**attempt)
        jitter = 1.0 + self._rng.uniform(-0.2, 0.2)
        time.sleep(base * jitter)

    def complete(self, request: ChatRequest) -> ChatReply:
        payload = {
            "model": self.config.model,
            "messages": request.messages(),
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_new_tokens,
            "top_k": request.params.top_k,
            "top_p": request.params.top_p,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt > 0:
                self._sleep_before_retry(attempt - 1)
            try:
                resp = self._session.post(
                    self.config.endpoint,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.config.timeout_s,
                )
            except requests.Timeout as exc:
                last_error = Timeout(f"backend {self.config.endpoint} timed out")
                logger.warning("timeout from %s (attempt %d)", self.config.endpoint, attempt)
                continue
            except requests.RequestException as exc:
                last_error = BackendError(f"connection failed: {exc.__class__.__name__}")
                logger.warning("connection error from %s (attempt %d)", self.config.endpoint, attempt)
                continue
            if resp.status_code >= 500:
                last_error = BackendError(f"server error {resp.status_code}", status=resp.status_code)
                logger.warning("HTTP %d from %s (attempt %d)", resp.status_code, self.config.endpoint, attempt)
                continue
            if resp.status_code != 200:
                raise BackendError(f"HTTP {resp.status_code} from backend", status=resp.status_code)
            return self._parse_reply(resp.json())
        raise RetriesExhausted(
            f"{self.config.max_retries + 1} attempts failed for {self.config.endpoint}",
            last_error=last_error,
        )

    @staticmethod
    def _parse_reply(body: dict[str, Any]) -> ChatReply:
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError("reply missing choices[0].message.content")
        usage = body.get("usage") or {}
        return ChatReply(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
        )


class ScriptedBackend:
    """Deterministic stub that replays a fixed list of replies in order.

    Requests are recorded so tests can assert on exactly what the pipeline
    sent. Running past the script raises ScriptExhausted.
    """

    def __init__(self, replies: list[str], name: str = "scripted"):
        self._replies = list(replies)
        self._cursor = 0
        self.name = name
        self.requests: list[ChatRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatReply:
        with self._lock:
            self.requests.append(request)
            if self._cursor >= len(self._replies):
                raise ScriptExhausted(
                    f"backend {self.name!r} has no reply for request #{self._cursor + 1}"
                )
            text = self._replies[self._cursor]
            self._cursor += 1
        return ChatReply(text=text, completion_tokens=len(text.split()))

    @property
    def remaining(self) -> int:
        return len(self._replies) - self._cursor


@dataclass
class CallRecord:
    role: str
    latency_s: float
    prompt_tokens: int
    completion_tokens: int
    ok: bool
    error: str | None = None


class Gateway:
    """Routes chat requests to per-role backends under a concurrency cap."""

    def __init__(
        self,
        backends: dict[Role, Backend],
        max_concurrency: int = DEFAULT_MAX_CONCURRENCY,
    ):
        if max_concurrency < 1:
            raise GatewayError("max_concurrency must be >= 1")
        self._backends = dict(backends)
        self._semaphores = {role: threading.Semaphore(max_concurrency) for role in self._backends}
        self.call_log: list[CallRecord] = []
        self._log_lock = threading.Lock()

    def roles(self) -> list[Role]:
        return sorted(self._backends, key=lambda r: r.value)

    def call(self, role: Role, request: ChatRequest) -> ChatReply:
        if role not in self._backends:
            raise GatewayError(f"no backend configured for role {role.value!r}")
        backend = self._backends[role]
        start = time.monotonic()
        with self._semaphores[role]:
            try:
                reply = backend.complete(request)
            except Exception as exc:
                self._record(role, start, None, error=exc.__class__.__name__)
                raise
        self._record(role, start, reply)
        return reply

    def _record(
        self, role: Role, start: float, reply: ChatReply | None, error: str | None = None
    ) -> None:
        record = CallRecord(
            role=role.value,
            latency_s=time.monotonic() - start,
            prompt_tokens=reply.prompt_tokens if reply else 0,
            completion_tokens=reply.completion_tokens if reply else 0,
            ok=error is None,
            error=error,
        )
        with self._log_lock:
            self.call_log.append(record)

    def usage_summary(self) -> dict[str, dict[str, int]]:
        summary: dict[str, dict[str, int]] = {}
        with self._log_lock:
            for rec in self.call_log:
                slot = summary.setdefault(
                    rec.role, {"calls": 0, "errors": 0, "prompt_tokens": 0, "completion_tokens": 0}
                )
                slot["calls"] += 1
                slot["errors"] += 0 if rec.ok else 1
                slot["prompt_tokens"] += rec.prompt_tokens
                slot["completion_tokens"] += rec.completion_tokens
        return summary


def scripted_gateway(scripts: dict[Role, list[str]]) -> Gateway:
    """Build a gateway whose every role replays a canned script."""
    return Gateway({role: ScriptedBackend(lines, name=role.value) for role, lines in scripts.items()})


def respond_medical(gateway: Gateway, question: str, params: GenerationParams | None = None) -> str:
    """Ask the responder role to answer a patient question."""
    request = ChatRequest(prompt=question, params=params or GenerationParams())
    return gateway.call(Role.RESPONDER, request).text
