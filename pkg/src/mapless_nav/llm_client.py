"""Chat-completions transport with transcript record/replay.

Requests use the common chat-completions JSON shape::

    POST {endpoint}/chat/completions
    {"model": ..., "temperature": ..., "messages": [{"role": ..., "content": ...}]}

Messages with image attachments switch ``content`` to a list of parts
(``{"type": "text"}`` followed by ``{"type": "image_url"}`` data URLs).

In ``replay`` mode no HTTP client is ever created; responses come from a
recorded :class:`Transcript`, matched on the canonical request body.

Environment variables (live mode):

    MAPLESS_NAV_ENDPOINT    base URL of the server
    MAPLESS_NAV_API_KEY     bearer token (optional)
    MAPLESS_NAV_LLM_MODEL   model used for decisions
    MAPLESS_NAV_MLLM_MODEL  model used for view parsing / one-step decisions
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import string
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import httpx

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class LLMError(RuntimeError):
    pass


class ConfigError(LLMError):
    pass


class TransportError(LLMError):
    def __init__(self, message: str, status: int | None = None, attempts: int = 0):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class ReplayMiss(LLMError):
    """Replay mode met a request that is not in the transcript."""


@dataclass(frozen=True)
class Message:
    role: str
    content: str
    attachments: tuple[str, ...] = ()

    def to_wire(self) -> dict:
        if not self.attachments:
            return {"role": self.role, "content": self.content}
        parts = [{"type": "text", "text": self.content}]
        parts += [{"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}} for b64 in self.attachments]
        return {"role": self.role, "content": parts}


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    timeout: float = 30.0
    endpoint: str | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if any(m.role not in ROLES for m in self.messages):
            raise ValueError(f"message roles must be in {ROLES}")
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("a chat request needs at least one user message")

    def body(self) -> dict:
        return {"model": self.model, "temperature": self.temperature, "messages": [m.to_wire() for m in self.messages]}

    def key(self) -> str:
        canon = json.dumps(self.body(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def with_message(self, message: Message) -> ChatRequest:
        return ChatRequest(self.model, self.messages + (message,), self.temperature, self.timeout, self.endpoint)


@dataclass
class Transcript:
    """Ordered request/response log. When ``path`` is set, every entry is appended to it as one JSON line."""

    entries: list[dict] = field(default_factory=list)
    path: Path | None = None
    _pending: dict = field(default_factory=dict, init=False, repr=False)

    def record(self, request: ChatRequest, response: str, *, timestamp: float, usage: dict | None = None) -> dict:
        entry = {
            "key": request.key(),
            "request": request.body(),
            "response": response,
            "timestamp": timestamp,
            "prompt_tokens": (usage or {}).get("prompt_tokens"),
            "completion_tokens": (usage or {}).get("completion_tokens"),
        }
        self.entries.append(entry)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        return entry

    def lookup(self, request: ChatRequest) -> str:
        """Next unconsumed response recorded for an identical request."""
        if not self._pending:
            queues = defaultdict(deque)
            for e in self.entries:
                queues[e["key"]].append(e["response"])
            self._pending = queues
        queue = self._pending.get(request.key())
        if not queue:
            raise ReplayMiss(f"no recorded response for request {request.key()[:12]}")
        return queue.popleft()

    def rewind(self) -> None:
        self._pending = {}

    def dumps(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.entries)

    @classmethod
    def loads(cls, text: str) -> Transcript:
        return cls([json.loads(line) for line in text.splitlines() if line.strip()])

    @classmethod
    def load(cls, path: str | Path) -> Transcript:
        return cls.loads(Path(path).read_text())


@dataclass(frozen=True)
class ClientConfig:
    endpoint: str | None = None
    api_key: str | None = None
    llm_model: str = "deepseek-v3"
    mllm_model: str = "qwen2.5-vl"
    retries: int = 2
    backoff: float = 0.5

    @classmethod
    def from_env(cls, env: dict | None = None) -> ClientConfig:
        env = os.environ if env is None else env
        return cls(
            endpoint=env.get("MAPLESS_NAV_ENDPOINT") or None,
            api_key=env.get("MAPLESS_NAV_API_KEY") or None,
            llm_model=env.get("MAPLESS_NAV_LLM_MODEL", cls.llm_model),
            mllm_model=env.get("MAPLESS_NAV_MLLM_MODEL", cls.mllm_model),
        )


class LLMClient:
    def __init__(
        self,
        config: ClientConfig | None = None,
        *,
        mode: str = "live",
        transcript: Transcript | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.time,
    ):
        if mode not in ("live", "replay"):
            raise ValueError("mode must be 'live' or 'replay'")
        if mode == "replay" and transcript is None:
            raise ConfigError("replay mode needs a transcript")
        self.config = config or ClientConfig()
        self.mode = mode
        self.transcript = transcript if transcript is not None else Transcript()
        self._transport = transport
        self._sleep = sleep
        self._clock = clock
        self._http: httpx.Client | None = None

    def complete(self, req: ChatRequest) -> str:
        if self.mode == "replay":
            return self.transcript.lookup(req)
        endpoint = req.endpoint or self.config.endpoint
        if not endpoint:
            raise ConfigError("no endpoint configured (set MAPLESS_NAV_ENDPOINT)")
        text, usage = self._post_with_retries(endpoint, req)
        self.transcript.record(req, text, timestamp=self._clock(), usage=usage)
        return text

    def _post_with_retries(self, endpoint: str, req: ChatRequest) -> tuple[str, dict | None]:
        url = endpoint.rstrip("/")
        if not url.endswith("/chat/completions"):
            url += "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        if self._http is None:
            self._http = httpx.Client(transport=self._transport)
        attempts = self.config.retries + 1
        last: TransportError | None = None
        for attempt in range(1, attempts + 1):
            try:
                resp = self._http.post(url, json=req.body(), headers=headers, timeout=req.timeout)
            except httpx.HTTPError as exc:
                logger.info("chat attempt %d/%d failed: %s", attempt, attempts, exc)
                last = TransportError(f"transport failure: {exc}", attempts=attempt)
            else:
                logger.info("chat attempt %d/%d -> HTTP %d", attempt, attempts, resp.status_code)
                if resp.status_code == 200:
                    return _assistant_text(resp), resp.json().get("usage")
                last = TransportError(f"HTTP {resp.status_code}", status=resp.status_code, attempts=attempt)
                if resp.status_code not in RETRYABLE_STATUS:
                    raise last
            if attempt < attempts:
                self._sleep(self.config.backoff * 2 ** (attempt - 1))
        assert last is not None
        raise last

    def close(self) -> None:
        if self._http is not None:
            self._http.close()
            self._http = None


def _assistant_text(resp: httpx.Response) -> str:
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed chat-completions response: {exc}", status=resp.status_code) from exc


# --------------------------------------------------------------------------
# Prompts
# --------------------------------------------------------------------------


def load_template(name: str) -> tuple[str, str, str]:
    """Return (version line, system template, user template) of a shipped prompt."""
    text = resources.files("mapless_nav").joinpath(f"data/prompts/{name}.txt").read_text()
    header, rest = text.split("\n", 1)
    system, user = rest.split("[user]\n", 1)
    return header.lstrip("# ").strip(), system.replace("[system]\n", "", 1).rstrip("\n"), user.rstrip("\n")


def _fill(template: str, **values) -> str:
    return string.Template(template).substitute(**values)


def render_decision_prompt(
    ld_texts: Sequence[str],
    gs_text: str,
    queue_texts: Sequence[str] | None,
    target: str,
    mode: str = "decoupled",
    *,
    model: str = "",
    allowed: Sequence[int] = (1, 2, 3, 4, 5, 6),
    temperature: float = 0.0,
) -> ChatRequest:
    """Fill the decision template. The history section exists iff ``queue_texts`` is given.

    In ``one_step`` mode ``ld_texts`` are raw view observations and the
    prompt carries no intermediate description or summary section.
    """
    if mode not in ("decoupled", "one_step"):
        raise ValueError(f"unknown prompt mode {mode!r}")
    if len(ld_texts) not in (3, 6):
        raise ValueError("expected six (or three) direction texts")
    history = ""
    if queue_texts is not None:
        lines = "\n".join(f"{i}. {t}" for i, t in enumerate(queue_texts, 1))
        history = f"\nExploration history (oldest first):\n{lines}\n"
    _, system, user = load_template(f"decision_{mode}.v1")
    allowed_text = ", ".join(str(s) for s in allowed)
    if mode == "decoupled":
        user = _fill(
            user,
            target=target,
            global_summary=gs_text,
            local_descriptions="\n".join(ld_texts),
            history=history,
            allowed=allowed_text,
        )
    else:
        user = _fill(user, target=target, observations="\n".join(ld_texts), history=history, allowed=allowed_text)
    return ChatRequest(
        model=model, messages=(Message("system", _fill(system, target=target)), Message("user", user)), temperature=temperature
    )


def render_parse_prompt(observation: str, target: str, *, model: str = "", temperature: float = 0.0) -> ChatRequest:
    _, system, user = load_template("parse_local.v1")
    return ChatRequest(
        model=model,
        messages=(Message("system", system), Message("user", _fill(user, target=target, observation=observation))),
        temperature=temperature,
    )


_FENCE = re.compile(r"```(?:json)?\s*(\{.*?\})\s*```", re.DOTALL)
_BRACES = re.compile(r"\{[^{}]*\}", re.DOTALL)


def extract_json(text: str) -> dict | None:
    """Strict parse, then a fenced block, then the first brace-delimited object."""
    candidates = [text.strip()]
    candidates += _FENCE.findall(text)
    candidates += _BRACES.findall(text)
    for c in candidates:
        try:
            value = json.loads(c)
        except (json.JSONDecodeError, ValueError):
            continue
        if isinstance(value, dict):
            return value
    return None
