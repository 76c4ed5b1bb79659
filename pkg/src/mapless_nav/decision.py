"""Memory-gated direction selection.

``decide`` consults the memory queue only once it is full; before that the
policy sees the current local descriptions and global summary alone and the
queue entries are never read.

The heuristic policies score each present sector as::

    score = w_like * target_likelihood + w_prior * prior(room_guess, target) + w_rich * richness

and, when memory is in play, subtract ``w_mem * penalty`` where the penalty is
the highest similarity between the sector and any remembered waypoint::

    similarity = 0.5 * jaccard(sector categories, waypoint inventory) + 0.5 * [room types match]

A sector in which the target is actually sighted (likelihood 1.0) wins
outright and sets ``found``. Sectors whose view is blocked by a wall right in
front are skipped unless every present sector is blocked. Remaining ties go to
the smallest sector index.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

from .llm_client import LLMClient, Message, extract_json, render_decision_prompt
from .memory import MemoryQueue
from .perception import GlobalSummary, LocalDescription
from .priors import PriorTable, default_priors

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecisionResult:
    sector: int
    found: bool
    rationale: str = ""

    def __post_init__(self):
        if not 1 <= self.sector <= 6:
            raise ValueError(f"sector must be in 1..6, got {self.sector}")

    def to_dict(self) -> dict:
        return {"sector": self.sector, "found": self.found, "rationale": self.rationale}

    @classmethod
    def from_dict(cls, d: dict) -> DecisionResult:
        return cls(int(d["sector"]), bool(d["found"]), d.get("rationale", ""))


@dataclass(frozen=True)
class PriorWeights:
    w_like: float = 1.0
    w_prior: float = 0.6
    w_rich: float = 0.2
    w_mem: float = 0.8

    def __post_init__(self):
        for name in ("w_like", "w_prior", "w_rich", "w_mem"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    def scaled(self, c: float) -> PriorWeights:
        return PriorWeights(self.w_like * c, self.w_prior * c, self.w_rich * c, self.w_mem * c)


# Likelihood-driven scoring without the room prior term.
ORACLE_WEIGHTS = PriorWeights(w_like=1.0, w_prior=0.0, w_rich=0.2, w_mem=0.8)


class Policy(Protocol):
    def decide_without_memory(self, lds: Sequence[LocalDescription | None], gs: GlobalSummary) -> DecisionResult: ...

    def decide_with_memory(
        self, lds: Sequence[LocalDescription | None], gs: GlobalSummary, entries: Sequence[GlobalSummary]
    ) -> DecisionResult: ...


def decide(
    policy: Policy, lds: Sequence[LocalDescription | None], gs: GlobalSummary, queue: MemoryQueue | None
) -> DecisionResult:
    """Route to the memory-less or memory-aware policy according to the full flag."""
    if len(lds) != 6:
        raise ValueError(f"expected 6 local description slots, got {len(lds)}")
    if not any(ld is not None for ld in lds):
        raise ValueError("no sector descriptions present")
    if queue is None or not queue.full:
        return policy.decide_without_memory(lds, gs)
    return policy.decide_with_memory(lds, gs, queue.snapshot())


def prior_policy_score(
    ld: LocalDescription, target: str, w: PriorWeights, priors: PriorTable | None = None
) -> float:
    priors = priors or default_priors()
    return w.w_like * ld.target_likelihood + w.w_prior * priors(ld.room_type_guess, target) + w.w_rich * ld.richness


def jaccard(a: frozenset | set, b: frozenset | set) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def similarity(ld: LocalDescription, entry: GlobalSummary) -> float:
    return 0.5 * jaccard(ld.categories, entry.inventory) + 0.5 * (ld.room_type_guess == entry.room_type)


def memory_penalty(ld: LocalDescription, entries: Sequence[GlobalSummary]) -> float:
    if not entries:
        raise ValueError("memory_penalty needs at least one remembered waypoint")
    return max(similarity(ld, e) for e in entries)


def _sighting(present: Sequence[LocalDescription]) -> LocalDescription | None:
    seen = [ld for ld in present if ld.target_likelihood >= 1.0]
    if not seen:
        return None
    return min(seen, key=lambda ld: ld.sector)


def _traversable(present: Sequence[LocalDescription]) -> list[LocalDescription]:
    open_ = [ld for ld in present if ld.clearance is None or ld.clearance > 0]
    return open_ or list(present)


@dataclass
class PriorPolicy:
    """Commonsense-prior scoring; prone to deadlock without memory."""

    target: str
    weights: PriorWeights = field(default_factory=PriorWeights)
    priors: PriorTable = field(default_factory=default_priors)
    name: str = "heuristic"

    def decide_without_memory(self, lds, gs) -> DecisionResult:
        return self._choose(lds, None)

    def decide_with_memory(self, lds, gs, entries) -> DecisionResult:
        return self._choose(lds, list(entries))

    def score(self, ld: LocalDescription, entries: Sequence[GlobalSummary] | None) -> float:
        s = prior_policy_score(ld, self.target, self.weights, self.priors)
        if entries:
            s -= self.weights.w_mem * memory_penalty(ld, entries)
        return s

    def _choose(self, lds, entries) -> DecisionResult:
        present = [ld for ld in lds if ld is not None]
        hit = _sighting(present)
        if hit is not None:
            return DecisionResult(hit.sector, True, f"{self.target} sighted in direction {hit.sector}")
        scored = [(self.score(ld, entries), ld.sector) for ld in _traversable(present)]
        best, sector = max(scored, key=lambda s: (s[0], -s[1]))
        memo = " with memory" if entries else ""
        return DecisionResult(sector, False, f"direction {sector} scores {best:.3f}{memo}")


def oracle_policy(target: str, priors: PriorTable | None = None) -> PriorPolicy:
    return PriorPolicy(target, ORACLE_WEIGHTS, priors or default_priors(), name="oracle")


# --------------------------------------------------------------------------
# Remote policy
# --------------------------------------------------------------------------

_SECTOR_RE = re.compile(r"\b(?:direction|sector|view)\s*(?:number\s*)?[:#=]?\s*([1-6])\b", re.IGNORECASE)
_NOT_FOUND_RE = re.compile(r"\b(?:not|never|no)\b[\w\s]{0,20}?\bfound\b|found\W{0,3}(?:false|no)\b", re.IGNORECASE)
_FOUND_RE = re.compile(r"found\W{0,3}(?:true|yes)\b|\b(?:target|it)\s+(?:is\s+|was\s+|has\s+been\s+)?found\b", re.IGNORECASE)


def _as_bool(value) -> bool | None:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "yes", "1", "false", "no", "0"):
        return value.strip().lower() in ("true", "yes", "1")
    if isinstance(value, (int, float)):
        return bool(value)
    return None


def parse_decision_reply(text: str, allowed: Sequence[int] = (1, 2, 3, 4, 5, 6)) -> DecisionResult | None:
    """Structured parse (strict, fenced, embedded object), then keyword extraction."""
    obj = extract_json(text)
    if obj is not None:
        try:
            sector = int(obj.get("sector"))
        except (TypeError, ValueError):
            sector = None
        found = _as_bool(obj.get("found", False))
        if sector in allowed and found is not None:
            return DecisionResult(sector, found, str(obj.get("reason", "")))
    for m in _SECTOR_RE.finditer(text):
        sector = int(m.group(1))
        if sector in allowed:
            found = not _NOT_FOUND_RE.search(text) and bool(_FOUND_RE.search(text))
            return DecisionResult(sector, found, "extracted from free-form reply")
    return None


@dataclass
class RemotePolicy:
    """Asks a chat model for the direction; falls back to the heuristic on unusable replies."""

    client: LLMClient
    target: str
    mode: str = "decoupled"
    model: str | None = None
    fallback: PriorPolicy | None = None
    name: str = "remote"

    def __post_init__(self):
        if self.fallback is None:
            self.fallback = PriorPolicy(self.target)
        if self.model is None:
            cfg = self.client.config
            self.model = cfg.mllm_model if self.mode == "one_step" else cfg.llm_model

    def decide_without_memory(self, lds, gs) -> DecisionResult:
        return self._ask(lds, gs, None)

    def decide_with_memory(self, lds, gs, entries) -> DecisionResult:
        return self._ask(lds, gs, list(entries))

    def _ask(self, lds, gs, entries) -> DecisionResult:
        present = [ld for ld in lds if ld is not None]
        allowed = [ld.sector for ld in present]
        texts = [ld.observation if self.mode == "one_step" else ld.text for ld in present]
        queue_texts = None if entries is None else [e.text for e in entries]
        req = render_decision_prompt(texts, gs.text, queue_texts, self.target, self.mode, model=self.model, allowed=allowed)
        reply = self.client.complete(req)
        result = parse_decision_reply(reply, allowed)
        if result is None:
            retry = req.with_message(Message("assistant", reply)).with_message(
                Message("user", 'Answer again with only the JSON object {"sector": ..., "found": ..., "reason": ...}.')
            )
            reply = self.client.complete(retry)
            result = parse_decision_reply(reply, allowed)
        if result is None:
            logger.warning("unparseable model reply twice; using heuristic fallback")
            fb = self.fallback._choose(lds, entries)
            return replace(fb, rationale="heuristic fallback: " + fb.rationale)
        return result


def remote_policy_decide(policy: RemotePolicy, lds, gs, queue: MemoryQueue | None) -> DecisionResult:
    return decide(policy, lds, gs, queue)
