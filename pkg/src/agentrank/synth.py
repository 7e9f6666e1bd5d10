"""Synthetic corpora and a deterministic token-overlap mock backend.

The mock reads the same prompt blocks a real model would see and applies
each role's declared logic literally: the user summarizer keeps the most
frequent history terms, the relevance judge scores session overlap far
above stale-history overlap, the context summarizer keeps items flagged
as aligned (or, without scores, items echoing the user summary), and the
ranker orders candidates by overlap with whatever evidence its prompt
carries.  Relevance is therefore a pure function of token overlap, which
makes pipeline wiring observable end to end.

``build_separation_corpus`` constructs users whose ground truth is
recoverable only from combined session plus preference evidence, with
trap items that exploit exactly the evidence each ablation leaks or
loses.  Under the mock, the ground truth lands at rank 1 for the full
pipeline, rank 2 without the relevance filter, rank 3 without filter and
summarizer, and rank 4 for the plain-history baseline, for every user.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass

from . import prompts as P
from .corpus import Catalog, Interaction, Item
from .embed import tokenize
from .errors import BackendError
from .llm import ChatRequest, ChatResponse, _synthesize_response

SUMMARY_TOKEN_LIMIT = 6
SESSION_WEIGHT = 2.0
HISTORY_WEIGHT = 0.5
CSA_MIN_OVERLAP = 2
CSA_SCORE_CUTOFF = 0.5

# Structural words from the prompt scaffolding, never treated as content.
STOPWORDS = frozenset(
    {"title", "description", "review", "reviews", "alignment", "none"}
)

_ITEM_LINE = re.compile(
    r"^- \[(?P<id>[^\]]+)\](?: \(alignment (?P<score>[0-9.]+)\))? ?(?P<body>.*)$"
)

_SECTION_HEADERS = (
    P.CANDIDATE_ITEM_HEADER,
    P.SESSION_HEADER,
    P.LONG_TERM_HEADER,
    P.USER_SUMMARY_HEADER,
    P.CONTEXT_SUMMARY_HEADER,
    P.CANDIDATES_HEADER,
    P.ITEMS_HEADER,
    P.HISTORY_HEADER,
)


def _content_tokens(text: str) -> set[str]:
    return {
        tok for tok in tokenize(text) if tok not in STOPWORDS and not tok.isdigit()
    }


@dataclass(frozen=True)
class ParsedItem:
    item_id: str
    score: float | None
    tokens: frozenset[str]


def _parse_sections(prompt: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {"_preamble": []}
    current = "_preamble"
    for line in prompt.splitlines():
        stripped = line.strip()
        if stripped in _SECTION_HEADERS:
            current = stripped
            sections[current] = []
        else:
            sections[current].append(line)
    return sections


def _items_in(lines: list[str]) -> list[ParsedItem]:
    items = []
    for line in lines:
        match = _ITEM_LINE.match(line.strip())
        if not match:
            continue
        score = match.group("score")
        items.append(
            ParsedItem(
                item_id=match.group("id"),
                score=None if score is None else float(score),
                tokens=frozenset(_content_tokens(match.group("body"))),
            )
        )
    return items


def _block_tokens(lines: list[str]) -> set[str]:
    """Content tokens of a section: item bodies where lines are item
    bullets, whole lines otherwise (ids stay out of the token space)."""
    tokens: set[str] = set()
    for line in lines:
        match = _ITEM_LINE.match(line.strip())
        tokens |= _content_tokens(match.group("body") if match else line)
    return tokens


class TokenOverlapBackend:
    """Offline backend that answers every agent prompt deterministically."""

    def complete(self, request: ChatRequest) -> ChatResponse:
        prompt = request.messages[-1][1]
        first_line = prompt.splitlines()[0] if prompt else ""
        sections = _parse_sections(prompt)
        if "user understanding assistant" in first_line:
            text = self._summarize_user(sections)
        elif "strict relevance judge" in first_line:
            text = self._judge(sections)
        elif "context summarizer" in first_line:
            text = self._condense(sections)
        elif "item ranking assistant" in first_line:
            text = self._rank(sections)
        else:
            raise BackendError("mock backend cannot route this prompt")
        return _synthesize_response(request, text)

    def _summarize_user(self, sections: dict[str, list[str]]) -> str:
        counts: Counter[str] = Counter()
        for header in (P.SESSION_HEADER, P.LONG_TERM_HEADER):
            for parsed in _items_in(sections.get(header, [])):
                counts.update(parsed.tokens)
        top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        kept = [token for token, _n in top[:SUMMARY_TOKEN_LIMIT]]
        if not kept:
            return "No recurring interests are visible in this history."
        return "Recurring interests: " + ", ".join(kept) + "."

    def _judge(self, sections: dict[str, list[str]]) -> str:
        items = _items_in(sections.get(P.CANDIDATE_ITEM_HEADER, []))
        session = _block_tokens(sections.get(P.SESSION_HEADER, []))
        history = _block_tokens(sections.get(P.LONG_TERM_HEADER, []))
        if not items or not items[0].tokens:
            return json.dumps({"score": 0.0, "rationale": "no item content"})
        tokens = items[0].tokens
        fresh = len(tokens & session)
        stale = len(tokens & (history - session))
        score = (SESSION_WEIGHT * fresh + HISTORY_WEIGHT * stale) / (
            SESSION_WEIGHT * len(tokens)
        )
        rationale = f"matches {fresh} session terms and {stale} stale history terms"
        return json.dumps({"score": round(score, 4), "rationale": rationale})

    def _condense(self, sections: dict[str, list[str]]) -> str:
        items = _items_in(sections.get(P.ITEMS_HEADER, []))
        if not items:
            return "No evidence items were provided."
        if any(parsed.score is not None for parsed in items):
            chosen = [
                parsed
                for parsed in items
                if parsed.score is not None and parsed.score >= CSA_SCORE_CUTOFF
            ]
        else:
            summary_tokens = _block_tokens(sections.get(P.USER_SUMMARY_HEADER, []))
            chosen = [
                parsed
                for parsed in items
                if len(parsed.tokens & summary_tokens) >= CSA_MIN_OVERLAP
            ]
        if not chosen:
            chosen = items[:1]
        evidence: set[str] = set()
        for parsed in chosen:
            evidence |= parsed.tokens
        return "Shared evidence: " + " ".join(sorted(evidence)) + "."

    def _rank(self, sections: dict[str, list[str]]) -> str:
        candidates = _items_in(sections.get(P.CANDIDATES_HEADER, []))
        if not candidates:
            raise BackendError("ranking prompt carries no candidate items")
        signal: set[str] = set()
        for header in (P.USER_SUMMARY_HEADER, P.CONTEXT_SUMMARY_HEADER, P.HISTORY_HEADER):
            signal |= _block_tokens(sections.get(header, []))
        ordered = sorted(
            candidates, key=lambda parsed: -len(parsed.tokens & signal)
        )
        ids = [parsed.item_id for parsed in ordered]
        return (
            json.dumps(ids)
            + " Ordered by overlap with the stated preferences and context."
        )


def _item(item_id: str, tokens: list[str]) -> Item:
    return Item(
        id=item_id,
        title=tokens[0],
        description=" ".join(tokens[1:]),
        reviews=(),
        category="synthetic",
    )


def build_separation_corpus(
    num_users: int = 10, base_time: int = 1_600_000_000
) -> tuple[Catalog, list[Interaction]]:
    """Users whose ground truth needs session and preference evidence.

    Each user has stable preference terms (p1..p3, echoed by the current
    session), a stale habit (h1..h3, long-term only), and one target item
    combining preferences with the session intent.  Five traps surround
    it: two habit mimics that echo the preference summary harder than the
    target, a pure habit item, a verbose marginally-related item that
    dominates unfiltered summaries by sheer length, and a boilerplate item
    rebuilt from old description noise that wins raw-history matching.
    """
    if num_users < 1:
        raise ValueError("num_users must be >= 1")
    catalog = Catalog()
    log: list[Interaction] = []
    for n in range(num_users):
        uid = f"u{n:03d}"
        tok = lambda name: f"{uid}{name}"
        p = [tok(f"p{i}") for i in (1, 2, 3)]
        h = [tok(f"h{i}") for i in (1, 2, 3)]
        s = [tok("s1"), tok("s2")]
        u_noise = [tok(f"u{i}") for i in range(1, 8)]
        v_noise = [tok(f"v{i}") for i in range(1, 8)]
        w_noise = [tok("w1"), tok("w2")]

        history_items: list[tuple[str, list[str], int]] = []
        for i in range(7):
            history_items.append(
                (f"{uid}-old-p{i + 1}", p + [u_noise[i]], base_time + i * 10_000)
            )
        for i in range(7):
            history_items.append(
                (f"{uid}-old-h{i + 1}", h + [v_noise[i]], base_time + 70_000 + i * 10_000)
            )
        session_start = base_time + 180_000
        history_items.append(
            (f"{uid}-fresh-1", s + [p[1], w_noise[0]], session_start)
        )
        history_items.append(
            (f"{uid}-fresh-2", s + [p[2], w_noise[1]], session_start + 60)
        )

        target = _item(f"{uid}-target", p + s + [tok("g1"), tok("g2")])
        traps = [
            _item(f"{uid}-mimic-a", h + [p[0], u_noise[0], u_noise[1]]),
            _item(f"{uid}-mimic-b", h + [p[1], u_noise[2], u_noise[3]]),
            _item(f"{uid}-habit", h[:2] + [tok("t1"), tok("t2"), tok("t3")]),
            _item(f"{uid}-verbose", h[:2] + [tok(f"b{i}") for i in range(1, 7)]),
            _item(f"{uid}-boiler", v_noise[:6] + [tok("f1")]),
        ]

        for item_id, tokens, ts in history_items:
            catalog.add(_item(item_id, tokens))
            log.append(Interaction(user_id=uid, item_id=item_id, timestamp=ts))
        catalog.add(target)
        for trap in traps:
            catalog.add(trap)
        log.append(
            Interaction(user_id=uid, item_id=target.id, timestamp=session_start + 120)
        )
    return catalog, log


def save_corpus(
    catalog: Catalog, log: list[Interaction], catalog_path, interactions_path
) -> None:
    """Write a corpus in the JSONL formats the loaders and CLI consume."""
    with open(catalog_path, "w", encoding="utf-8") as fh:
        for item_id in catalog.ids():
            item = catalog.get(item_id)
            fh.write(
                json.dumps(
                    {
                        "id": item.id,
                        "title": item.title,
                        "description": item.description,
                        "reviews": list(item.reviews),
                        "category": item.category,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    with open(interactions_path, "w", encoding="utf-8") as fh:
        for inter in log:
            record = {
                "user_id": inter.user_id,
                "item_id": inter.item_id,
                "timestamp": inter.timestamp,
            }
            if inter.rating is not None:
                record["rating"] = inter.rating
            if inter.review_text:
                record["review_text"] = inter.review_text
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
