"""Chat-completion backends shared by all agents.

Three interchangeable implementations sit behind one ``complete`` surface:
a remote OpenAI-style HTTP endpoint, a deterministic scripted mock, and a
record/replay cassette.  Requests are keyed by a stable digest of their
ordered (role, content) pairs; max_tokens, temperature, and model tag are
deliberately excluded so prompt-identical calls collapse onto one cassette
entry regardless of per-agent limits.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .errors import BackendError, DataError

RETRY_ATTEMPTS = 3
RETRY_BASE_DELAY = 1.0

# max_tokens defaults per agent role; bounded cost, all configurable.
DEFAULT_MAX_TOKENS = {
    "user_understanding": 256,
    "nli": 128,
    "context_summary": 512,
    "item_ranker": 512,
}

_VALID_MESSAGE_ROLES = frozenset({"system", "user"})


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call: ordered (role, content) messages."""

    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 512
    model_tag: str = "gpt-3.5-turbo"

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(tuple(m) for m in self.messages))
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        for role, _content in self.messages:
            if role not in _VALID_MESSAGE_ROLES:
                raise ValueError(f"invalid message role {role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")


def request_digest(request: ChatRequest) -> str:
    """Stable hash of the ordered (role, content) pairs only."""
    payload = json.dumps([[r, c] for r, c in request.messages], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def complete(backend: Backend, request: ChatRequest, agent_role: str | None = None) -> ChatResponse:
    """Issue one call, tagging any failure with the requesting agent role."""
    try:
        return backend.complete(request)
    except BackendError as exc:
        if exc.agent_role is None and agent_role is not None:
            raise BackendError(exc.base_message, agent_role) from exc
        raise


def _estimate_tokens(text: str) -> int:
    return len(text.split())


def _synthesize_response(request: ChatRequest, text: str) -> ChatResponse:
    prompt_tokens = sum(_estimate_tokens(content) for _role, content in request.messages)
    return ChatResponse(
        text=text,
        prompt_tokens=prompt_tokens,
        completion_tokens=_estimate_tokens(text),
    )


class MockBackend:
    """Deterministic scripted backend for offline runs.

    Responses are keyed by request digest.  Unscripted requests fall back
    to ``handler`` (a ``ChatRequest -> str`` callable) when provided; in
    strict mode they raise instead.  Thread-safe: the script is read-only
    and the call log append is locked.
    """

    def __init__(
        self,
        script: dict[str, str] | None = None,
        handler: Callable[[ChatRequest], str] | None = None,
        strict: bool = False,
    ):
        self.script = dict(script or {})
        self.handler = handler
        self.strict = strict
        self.calls: list[str] = []
        self._lock = threading.Lock()

    def script_request(self, request: ChatRequest, text: str) -> None:
        self.script[request_digest(request)] = text

    def complete(self, request: ChatRequest) -> ChatResponse:
        digest = request_digest(request)
        with self._lock:
            self.calls.append(digest)
        if digest in self.script:
            return _synthesize_response(request, self.script[digest])
        if self.handler is not None and not self.strict:
            return _synthesize_response(request, self.handler(request))
        raise BackendError(f"mock backend has no scripted response for digest {digest[:12]}")


def _read_cassette(path: Path) -> dict[str, ChatResponse]:
    entries: dict[str, ChatResponse] = {}
    if not path.exists():
        raise DataError(f"cassette file not found: {path}")
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {line_no}: malformed cassette entry: {exc.msg}") from exc
            try:
                entries[str(obj["digest"])] = ChatResponse(
                    text=str(obj["response_text"]),
                    prompt_tokens=int(obj.get("prompt_tokens", 0)),
                    completion_tokens=int(obj.get("completion_tokens", 0)),
                )
            except KeyError as exc:
                raise DataError(f"{path}: line {line_no}: cassette entry missing {exc}") from None
    return entries


class ReplayBackend:
    """Answers only from a recorded cassette; any miss is an error."""

    def __init__(self, cassette_path: str | Path):
        self.cassette_path = Path(cassette_path)
        self._entries = _read_cassette(self.cassette_path)

    def __len__(self) -> int:
        return len(self._entries)

    def complete(self, request: ChatRequest) -> ChatResponse:
        digest = request_digest(request)
        try:
            return self._entries[digest]
        except KeyError:
            raise BackendError(
                f"replay cassette {self.cassette_path} has no entry for digest {digest[:12]}"
            ) from None


class RecordingBackend:
    """Wraps another backend and appends every new (digest, response) pair
    to a JSONL cassette.  Repeated digests reuse the recorded response, so
    each prompt appears at most once in the cassette.  Cassette writes are
    serialized; an existing cassette is loaded and extended.
    """

    def __init__(self, inner: Backend, cassette_path: str | Path):
        self.inner = inner
        self.cassette_path = Path(cassette_path)
        self._lock = threading.Lock()
        self._cache: dict[str, ChatResponse] = {}
        if self.cassette_path.exists():
            self._cache = _read_cassette(self.cassette_path)

    def complete(self, request: ChatRequest) -> ChatResponse:
        digest = request_digest(request)
        with self._lock:
            cached = self._cache.get(digest)
        if cached is not None:
            return cached
        response = self.inner.complete(request)
        entry = json.dumps(
            {
                "digest": digest,
                "response_text": response.text,
                "prompt_tokens": response.prompt_tokens,
                "completion_tokens": response.completion_tokens,
            },
            ensure_ascii=False,
        )
        with self._lock:
            if digest not in self._cache:
                self._cache[digest] = response
                with self.cassette_path.open("a", encoding="utf-8") as handle:
                    handle.write(entry + "\n")
            else:
                response = self._cache[digest]
        return response


class RemoteBackend:
    """OpenAI-style chat-completions client with bounded retries.

    The API key comes from an environment variable, never from config
    files.  Retries never change the request payload; 3 attempts with
    exponential backoff starting at 1 s.
    """

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def complete(self, request: ChatRequest) -> ChatResponse:
        api_key = os.environ.get(self.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": request.model_tag,
            "messages": [{"role": r, "content": c} for r, c in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        last_error = "unknown error"
        for attempt in range(RETRY_ATTEMPTS):
            if attempt > 0:
                self._sleep(RETRY_BASE_DELAY * 2 ** (attempt - 1))
            try:
                response = self._client.post(url, headers=headers, json=payload)
            except httpx.HTTPError as exc:
                last_error = f"transport failure: {exc}"
                continue
            if response.status_code in (429, 500, 502, 503, 504):
                last_error = f"HTTP {response.status_code}"
                continue
            if response.status_code != 200:
                raise BackendError(f"HTTP {response.status_code}: {response.text[:200]}")
            try:
                body = response.json()
                choice = body["choices"][0]["message"]["content"]
                usage = body.get("usage", {})
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise BackendError(f"malformed completion response: {exc}") from exc
            return ChatResponse(
                text=str(choice),
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
            )
        raise BackendError(f"remote call failed after {RETRY_ATTEMPTS} attempts: {last_error}")
