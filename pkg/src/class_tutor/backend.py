"""Chat-completion providers: a remote HTTP client plus offline stand-ins.

The wire protocol is the common chat-completions JSON shape (messages in,
choices out), so any compatible endpoint plugs in, including locally
served fine-tuned models. For tests and offline runs there is a scripted
provider that replays a fixed list of completions, and a record/replay
pair keyed by request hash so whole pipelines rerun without network
access.

API keys are read from an environment variable named in the config and
never written to config files, tapes or logs.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from .template import RawCompletion

# Defaults chosen per use: diversity for dataset generation, stability for
# live tutoring.
GENERATION_TEMPERATURE = 0.7
TUTORING_TEMPERATURE = 0.2

ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"
_ROLES = (ROLE_SYSTEM, ROLE_USER, ROLE_ASSISTANT)


class BackendError(Exception):
    """Base error for provider failures; carries a stable machine code."""

    code = "BackendError"


class AuthMissing(BackendError):
    code = "AuthMissing"


class Timeout(BackendError):
    code = "Timeout"


class RateLimited(BackendError):
    code = "RateLimited"


class ProviderError(BackendError):
    code = "ProviderError"

    def __init__(self, status: int, body: str):
        super().__init__(f"provider returned HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class ScriptExhausted(BackendError):
    code = "ScriptExhausted"


class TapeMiss(BackendError):
    code = "TapeMiss"

    def __init__(self, fingerprint: str):
        super().__init__(f"no recorded reply for request {fingerprint}")
        self.fingerprint = fingerprint


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in (ROLE_SYSTEM, ROLE_USER) and not self.content:
            raise ValueError(f"{self.role} message content must be nonempty")


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    model: str
    temperature: float = GENERATION_TEMPERATURE
    max_tokens: int = 1024
    timeout: float = 60.0
    max_retries: int = 3
    api_key_env: str = "LLM_API_KEY"

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "BackendConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_public_dict(self) -> dict:
        """Config as a dict safe to log or serialize: names the key's env
        variable, never its value."""
        return {
            "base_url": self.base_url,
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "timeout": self.timeout,
            "max_retries": self.max_retries,
            "api_key_env": self.api_key_env,
        }


def request_fingerprint(messages: list[ChatMessage]) -> str:
    """Stable sha256 over the message list, used as the tape key."""
    payload = json.dumps(
        [{"role": m.role, "content": m.content} for m in messages],
        ensure_ascii=True,
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _check_messages(messages: list[ChatMessage]) -> None:
    if not messages:
        raise ValueError("messages must be nonempty")
    if messages[-1].role != ROLE_USER:
        raise ValueError("last message must be from the user")


class HttpBackend:
    """Chat-completions client with exponential-backoff retries.

    Transport failures and HTTP 429/5xx are retried up to
    ``config.max_retries`` times (backoff base 1s, factor 2, jitter);
    other statuses fail immediately. ``last_attempts`` exposes how many
    requests the most recent completion needed.
    """

    def __init__(self, config: BackendConfig, *, transport=None, sleep=time.sleep, rng=None):
        self.config = config
        self._client = httpx.Client(transport=transport, timeout=config.timeout)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self.last_attempts = 0

    def describe(self) -> dict:
        return {"model": self.config.model, "temperature": self.config.temperature}

    def _api_key(self) -> str | None:
        name = self.config.api_key_env
        if not name:
            return None
        key = os.environ.get(name)
        if key is None:
            raise AuthMissing(f"environment variable {name} is not set")
        return key

    def complete(self, messages: list[ChatMessage]) -> RawCompletion:
        _check_messages(messages)
        key = self._api_key()
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.config.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        }
        url = self.config.base_url.rstrip("/") + "/chat/completions"

        attempts = 0
        last_error: BackendError | None = None
        while attempts <= self.config.max_retries:
            attempts += 1
            try:
                response = self._client.post(url, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                last_error = Timeout(str(exc))
            except httpx.HTTPError as exc:
                last_error = ProviderError(0, f"transport failure: {exc}")
            else:
                if response.status_code == 200:
                    self.last_attempts = attempts
                    try:
                        content = response.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                        raise ProviderError(200, f"malformed completion body: {exc}")
                    return RawCompletion(text=content)
                if response.status_code == 429:
                    last_error = RateLimited(f"rate limited: {response.text[:200]}")
                elif response.status_code >= 500:
                    last_error = ProviderError(response.status_code, response.text)
                else:
                    self.last_attempts = attempts
                    raise ProviderError(response.status_code, response.text)
            if attempts <= self.config.max_retries:
                backoff = (2 ** (attempts - 1)) * (1.0 + self._rng.random() * 0.25)
                self._sleep(backoff)
        self.last_attempts = attempts
        raise last_error if last_error else ProviderError(0, "no attempt made")


class ScriptedBackend:
    """Deterministic provider replaying a fixed, ordered list of replies.

    One logical consumer per instance: the cursor is advanced under a
    lock, and running past the script raises :class:`ScriptExhausted`.
    """

    def __init__(self, replies: list[str], *, model: str = "scripted"):
        self.replies = list(replies)
        self.cursor = 0
        self.model = model
        self._lock = threading.Lock()
        self.last_attempts = 0

    def describe(self) -> dict:
        return {"model": self.model, "temperature": 0.0}

    def complete(self, messages: list[ChatMessage]) -> RawCompletion:
        _check_messages(messages)
        with self._lock:
            if self.cursor >= len(self.replies):
                raise ScriptExhausted(f"script of {len(self.replies)} replies exhausted")
            reply = self.replies[self.cursor]
            self.cursor += 1
        self.last_attempts = 1
        return RawCompletion(text=reply)


class RecordingBackend:
    """Wraps any backend and appends (request hash, reply) pairs to a tape."""

    def __init__(self, inner, tape_path: str | Path):
        self.inner = inner
        self.tape_path = Path(tape_path)
        self._lock = threading.Lock()

    def describe(self) -> dict:
        return self.inner.describe()

    @property
    def last_attempts(self) -> int:
        return getattr(self.inner, "last_attempts", 0)

    def complete(self, messages: list[ChatMessage]) -> RawCompletion:
        completion = self.inner.complete(messages)
        entry = json.dumps(
            {"request_sha256": request_fingerprint(messages), "reply": completion.text},
            ensure_ascii=False,
        )
        with self._lock:
            with self.tape_path.open("a", encoding="utf-8") as handle:
                handle.write(entry + "\n")
        return completion


class ReplayBackend:
    """Serves recorded replies by request hash; unknown requests miss.

    Repeated identical requests replay in recording order (FIFO per hash).
    """

    def __init__(self, tape_path: str | Path):
        self.tape_path = Path(tape_path)
        self._replies: dict[str, list[str]] = {}
        self._lock = threading.Lock()
        self.last_attempts = 0
        if self.tape_path.exists():
            for line in self.tape_path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                self._replies.setdefault(entry["request_sha256"], []).append(entry["reply"])

    def describe(self) -> dict:
        return {"model": "replay", "temperature": 0.0}

    def complete(self, messages: list[ChatMessage]) -> RawCompletion:
        _check_messages(messages)
        fingerprint = request_fingerprint(messages)
        with self._lock:
            queue = self._replies.get(fingerprint)
            if not queue:
                raise TapeMiss(fingerprint)
            reply = queue.pop(0)
        self.last_attempts = 1
        return RawCompletion(text=reply)


def complete(config: BackendConfig, messages: list[ChatMessage]) -> RawCompletion:
    """One-shot completion against a remote provider."""
    return HttpBackend(config).complete(messages)


def _load_script_file(path: Path) -> list[str]:
    """Scripted replies: a JSON array of strings, or JSONL of strings /
    {"reply": ...} objects."""
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        data = json.loads(text)
        return [str(item) for item in data]
    replies = []
    for line in text.splitlines():
        if not line.strip():
            continue
        value = json.loads(line)
        if isinstance(value, dict):
            replies.append(str(value.get("reply", "")))
        else:
            replies.append(str(value))
    return replies


def load_backend(spec: str):
    """Build a backend from a CLI spec string.

    Formats: ``scripted:<file>`` (JSON array or JSONL of replies),
    ``replay:<tape.jsonl>``, ``http:<config.json>``.
    """
    kind, _, arg = spec.partition(":")
    if kind == "scripted":
        return ScriptedBackend(_load_script_file(Path(arg)))
    if kind == "replay":
        return ReplayBackend(arg)
    if kind == "http":
        config = BackendConfig.from_dict(json.loads(Path(arg).read_text(encoding="utf-8")))
        return HttpBackend(config)
    raise ValueError(f"unknown backend spec {spec!r} (expected scripted:, replay: or http:)")
