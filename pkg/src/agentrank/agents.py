"""The four LLM agents: prompt construction, response parsing, typed outputs.

Each agent renders its template, issues one backend call, parses the
response into a typed value, and posts a message to the shared blackboard
at its protocol stage.  Parsing is defensive throughout: an item whose
alignment judgement cannot be parsed scores 0.0 rather than aborting the
user, and the ranking repair layer guarantees a valid permutation for any
response string whatsoever.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field

from . import prompts as P
from .blackboard import Blackboard, Message, now_ms
from .config import PipelineConfig
from .corpus import Catalog, Item, UserContext
from .errors import DataError
from .llm import (
    Backend,
    ChatRequest,
    ChatResponse,
    DEFAULT_MAX_TOKENS,
    complete,
)
from .prompts import TemplateSet

PARSE_FAILURE_RATIONALE = "parse_failure"
EMPTY_RESPONSE_TEXT = "(no content)"


@dataclass(frozen=True)
class UserSummary:
    """Natural-language description of the user's interests and session goal."""

    text: str


@dataclass(frozen=True)
class NliJudgement:
    """Alignment score in [0, 1] between one item and the user context."""

    item_id: str
    score: float
    rationale: str


@dataclass(frozen=True)
class ContextSummary:
    """Condensed evidence from the accepted items."""

    text: str
    source_item_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "source_item_ids", tuple(self.source_item_ids))


@dataclass(frozen=True)
class Ranking:
    """A permutation over the candidate set, best first, with its rationale."""

    item_ids: tuple[str, ...]
    explanation: str = ""

    def __post_init__(self):
        object.__setattr__(self, "item_ids", tuple(self.item_ids))
        if len(set(self.item_ids)) != len(self.item_ids):
            raise DataError("ranking contains duplicate item ids")


class TokenUsage:
    """Thread-safe accumulator of per-call token counts."""

    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0
        self.prompt_tokens = 0
        self.completion_tokens = 0

    def add(self, response: ChatResponse) -> None:
        with self._lock:
            self.calls += 1
            self.prompt_tokens += response.prompt_tokens
            self.completion_tokens += response.completion_tokens

    def as_dict(self) -> dict[str, int]:
        with self._lock:
            return {
                "calls": self.calls,
                "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens,
            }


@dataclass
class AgentEnv:
    """Everything one pipeline run shares across its agent calls."""

    backend: Backend
    board: Blackboard
    catalog: Catalog
    templates: TemplateSet
    cfg: PipelineConfig
    usage: TokenUsage = field(default_factory=TokenUsage)

    def max_tokens(self, role: str) -> int:
        return DEFAULT_MAX_TOKENS.get(role, 512)

    def request(self, prompt: str, role: str) -> ChatRequest:
        return ChatRequest(
            messages=(("user", prompt),),
            temperature=self.cfg.temperature,
            max_tokens=self.max_tokens(role),
            model_tag=self.cfg.model_tag,
        )

    def call(self, request: ChatRequest, role: str) -> ChatResponse:
        response = complete(self.backend, request, agent_role=role)
        self.usage.add(response)
        return response


def _split_history(env: AgentEnv, context: UserContext) -> tuple[str, str]:
    """Session and long-term blocks, newest first, session taking priority
    within the total ``max_history_items`` budget."""
    budget = env.cfg.max_history_items
    session = list(reversed(context.session))[:budget]
    remaining = max(budget - len(session), 0)
    long_term = list(reversed(context.long_term))[:remaining]
    chars = env.cfg.prompt_item_chars
    return (
        P.interaction_lines(session, env.catalog, env.cfg.max_reviews, chars),
        P.interaction_lines(long_term, env.catalog, env.cfg.max_reviews, chars),
    )


def build_uua_request(env: AgentEnv, context: UserContext) -> ChatRequest:
    session_block, long_term_block = _split_history(env, context)
    prompt = env.templates.render(
        "user_understanding",
        session_block=session_block,
        long_term_block=long_term_block,
    )
    return env.request(prompt, "user_understanding")


def run_uua(env: AgentEnv, context: UserContext) -> UserSummary:
    """Summarize the user's preferences and post the summary at stage 1."""
    request = build_uua_request(env, context)
    response = env.call(request, "user_understanding")
    text = response.text.strip() or EMPTY_RESPONSE_TEXT
    env.board.post(
        Message(
            id="s1-user_understanding",
            role="user_understanding",
            content=text,
            timestamp=now_ms(),
            stage=1,
        )
    )
    return UserSummary(text=text)


def build_nli_request(env: AgentEnv, item: Item, context: UserContext) -> ChatRequest:
    session_block, long_term_block = _split_history(env, context)
    prompt = env.templates.render(
        "nli",
        item_block=P.item_line(item, env.cfg.max_reviews, env.cfg.prompt_item_chars),
        session_block=session_block,
        long_term_block=long_term_block,
    )
    return env.request(prompt, "nli")


def _parse_nli_response(text: str) -> tuple[float, str] | None:
    """Extract the first JSON object carrying a finite numeric score."""
    decoder = json.JSONDecoder()
    for start, char in enumerate(text):
        if char != "{":
            continue
        try:
            obj, _end = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            continue
        if not isinstance(obj, dict):
            continue
        score = obj.get("score")
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            continue
        if not math.isfinite(score):
            continue
        clamped = min(max(float(score), 0.0), 1.0)
        return clamped, str(obj.get("rationale", ""))
    return None


def run_nli(env: AgentEnv, item: Item, context: UserContext) -> NliJudgement:
    """Score one candidate's alignment with the user context.

    An unparseable response is re-requested once; if that also fails to
    parse, the item scores 0.0 with a ``parse_failure`` rationale rather
    than failing the run.
    """
    request = build_nli_request(env, item, context)
    parsed = None
    for _attempt in range(2):
        response = env.call(request, "nli")
        parsed = _parse_nli_response(response.text)
        if parsed is not None:
            break
    if parsed is None:
        score, rationale = 0.0, PARSE_FAILURE_RATIONALE
    else:
        score, rationale = parsed
    env.board.post(
        Message(
            id=f"s1-nli-{item.id}",
            role="nli",
            content=json.dumps({"item_id": item.id, "rationale": rationale}, ensure_ascii=False),
            score=score,
            timestamp=now_ms(),
            stage=1,
        )
    )
    return NliJudgement(item_id=item.id, score=score, rationale=rationale)


def filter_aligned(judgements: list[NliJudgement], theta: float, m_min: int) -> list[str]:
    """Item ids scoring at least ``theta``, ordered by (score desc, id asc).

    If fewer than ``m_min`` qualify, the top ``m_min`` by the same order
    are returned instead so downstream summarization never starves.
    """
    if not (0.0 <= theta <= 1.0):
        raise ValueError("theta must be in [0, 1]")
    if m_min < 0:
        raise ValueError("m_min must be >= 0")
    ordered = sorted(judgements, key=lambda j: (-j.score, j.item_id))
    accepted = [j.item_id for j in ordered if j.score >= theta]
    if len(accepted) < m_min:
        accepted = [j.item_id for j in ordered[:m_min]]
    return accepted


def build_csa_request(
    env: AgentEnv,
    accepted: list[Item],
    user_summary: UserSummary,
    judgements: list[NliJudgement] | None,
) -> ChatRequest:
    scores = None
    items = list(accepted)
    if judgements is not None:
        scores = {j.item_id: j.score for j in judgements}
        items.sort(key=lambda item: (-scores.get(item.id, 0.0), item.id))
    block = P.items_block(items, env.cfg.max_reviews, env.cfg.prompt_item_chars, scores)
    prompt = env.templates.render(
        "context_summary",
        user_summary=user_summary.text,
        items_block=block,
    )
    return env.request(prompt, "context_summary")


def run_csa(
    env: AgentEnv,
    accepted: list[Item],
    user_summary: UserSummary,
    judgements: list[NliJudgement] | None = None,
) -> ContextSummary:
    """Summarize the accepted evidence; items appear score-descending when
    judgements are given, and unannotated otherwise."""
    if not accepted:
        raise DataError("context summarization needs at least one item")
    request = build_csa_request(env, accepted, user_summary, judgements)
    response = env.call(request, "context_summary")
    text = response.text.strip() or EMPTY_RESPONSE_TEXT
    source_ids = tuple(item.id for item in accepted)
    env.board.post(
        Message(
            id="s2-context_summary",
            role="context_summary",
            content=json.dumps(
                {"text": text, "source_item_ids": list(source_ids)}, ensure_ascii=False
            ),
            timestamp=now_ms(),
            stage=2,
        )
    )
    return ContextSummary(text=text, source_item_ids=source_ids)


def build_ira_request(
    env: AgentEnv,
    user_summary: UserSummary,
    context_summary: ContextSummary | None,
    candidates: list[Item],
) -> ChatRequest:
    prompt = env.templates.render(
        "item_ranker",
        user_summary=user_summary.text,
        context_summary=context_summary.text if context_summary else P.EMPTY_BLOCK,
        candidates_block=P.items_block(candidates, env.cfg.max_reviews, env.cfg.prompt_item_chars),
    )
    return env.request(prompt, "item_ranker")


def run_ira(
    env: AgentEnv,
    user_summary: UserSummary,
    context_summary: ContextSummary | None,
    candidates: list[Item],
    retrieval_order: list[str] | None = None,
) -> Ranking:
    """Rank the full candidate list; the response is repaired into a
    guaranteed permutation and posted at stage 3 with its explanation."""
    if not candidates:
        raise DataError("ranking needs a non-empty candidate list")
    candidate_ids = [item.id for item in candidates]
    if retrieval_order is None:
        retrieval_order = list(candidate_ids)
    request = build_ira_request(env, user_summary, context_summary, candidates)
    response = env.call(request, "item_ranker")
    ordered = parse_ranking(response.text, candidate_ids, retrieval_order)
    ranking = Ranking(item_ids=tuple(ordered), explanation=response.text.strip())
    env.board.post(
        Message(
            id="s3-item_ranker",
            role="item_ranker",
            content=json.dumps(
                {
                    "ranking": list(ranking.item_ids),
                    "explanation": ranking.explanation,
                    "raw_response": response.text,
                    "candidates": candidate_ids,
                    "retrieval_order": retrieval_order,
                },
                ensure_ascii=False,
            ),
            timestamp=now_ms(),
            stage=3,
        )
    )
    return ranking


def _first_string_array(raw: str) -> list[str] | None:
    decoder = json.JSONDecoder()
    for start, char in enumerate(raw):
        if char != "[":
            continue
        try:
            value, _end = decoder.raw_decode(raw, start)
        except (json.JSONDecodeError, RecursionError):
            continue
        if isinstance(value, list) and value and all(isinstance(v, str) for v in value):
            return value
    return None


def parse_ranking(raw: str, candidate_ids: list[str], retrieval_order: list[str]) -> list[str]:
    """Repair an arbitrary response string into a permutation of the candidates.

    Takes the first JSON array of strings in ``raw``; keeps entries that
    match a candidate id exactly, then entries with a unique
    case-insensitive match; drops duplicates and foreign ids; appends every
    missing candidate in retrieval order.  Total: any input string yields a
    valid permutation, degrading to ``retrieval_order`` at worst.
    """
    if not candidate_ids:
        raise ValueError("candidate_ids must be non-empty")
    candidate_set = set(candidate_ids)
    if set(retrieval_order) != candidate_set or len(retrieval_order) != len(candidate_ids):
        raise ValueError("retrieval_order must be a total order on candidate_ids")

    lower_map: dict[str, str | None] = {}
    for cid in candidate_ids:
        key = cid.lower()
        lower_map[key] = None if key in lower_map else cid

    kept: list[str] = []
    seen: set[str] = set()
    for entry in _first_string_array(raw) or []:
        if entry in candidate_set:
            match = entry
        else:
            match = lower_map.get(entry.lower())
            if match is None:
                continue
        if match not in seen:
            seen.add(match)
            kept.append(match)
    kept.extend(cid for cid in retrieval_order if cid not in seen)
    return kept
