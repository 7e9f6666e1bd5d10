"""Agent behaviors: parsing, fallbacks, filtering, and board posts."""

from __future__ import annotations

import json
import random
import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentrank import Blackboard, DataError, NliJudgement, PipelineConfig, parse_ranking
from agentrank.agents import (
    EMPTY_RESPONSE_TEXT,
    PARSE_FAILURE_RATIONALE,
    AgentEnv,
    UserSummary,
    build_ira_request,
    build_nli_request,
    build_uua_request,
    filter_aligned,
    run_csa,
    run_ira,
    run_nli,
    run_uua,
)
from agentrank.llm import MockBackend, request_digest
from helpers import handbag_catalog, handbag_context


def make_env(backend, catalog=None, **cfg_overrides) -> AgentEnv:
    from agentrank import TemplateSet

    return AgentEnv(
        backend=backend,
        board=Blackboard(),
        catalog=catalog if catalog is not None else handbag_catalog(),
        templates=TemplateSet.load(),
        cfg=PipelineConfig(**cfg_overrides),
    )


class CountingBackend(MockBackend):
    """Returns scripted answers per digest in sequence, cycling the last."""

    def __init__(self, by_digest: dict[str, list[str]]):
        super().__init__()
        self.by_digest = by_digest
        self.seen: dict[str, int] = {}

    def complete(self, request):
        from agentrank.llm import _synthesize_response

        digest = request_digest(request)
        answers = self.by_digest[digest]
        n = self.seen.get(digest, 0)
        self.seen[digest] = n + 1
        return _synthesize_response(request, answers[min(n, len(answers) - 1)])


def test_run_uua_posts_summary_at_stage_one() -> None:
    backend = MockBackend(handler=lambda req: "  Loves checkered totes.  ")
    env = make_env(backend)
    summary = run_uua(env, handbag_context())
    assert summary.text == "Loves checkered totes."
    (message,) = env.board.read()
    assert (message.id, message.role, message.stage) == (
        "s1-user_understanding",
        "user_understanding",
        1,
    )
    assert message.content == "Loves checkered totes."


def test_run_uua_blank_response_gets_placeholder() -> None:
    env = make_env(MockBackend(handler=lambda req: "   "))
    assert run_uua(env, handbag_context()).text == EMPTY_RESPONSE_TEXT


@pytest.mark.parametrize(
    "reply, expected_score",
    [
        ('{"score": 0.8, "rationale": "fits"}', 0.8),
        ('Sure! Here you go: {"score": 0.35, "rationale": "meh"} hope that helps', 0.35),
        ('{"notes": {}} {"score": 1, "rationale": "int works"}', 1.0),
        ('{"score": 1.7, "rationale": "overshoot"}', 1.0),
        ('{"score": -3, "rationale": "undershoot"}', 0.0),
    ],
)
def test_run_nli_parses_and_clamps(reply: str, expected_score: float) -> None:
    env = make_env(MockBackend(handler=lambda req: reply))
    item = env.catalog.get("bag-tote-checkered")
    judgement = run_nli(env, item, handbag_context())
    assert judgement.score == expected_score
    (message,) = env.board.read(role="nli")
    assert message.id == "s1-nli-bag-tote-checkered"
    assert message.score == expected_score
    assert json.loads(message.content)["item_id"] == "bag-tote-checkered"


@pytest.mark.parametrize(
    "reply",
    [
        "no json here",
        '{"score": "high"}',
        '{"score": true}',
        '{"score": NaN}',
        '["score", 0.5]',
        '{"rationale": "missing score"}',
    ],
)
def test_run_nli_unparseable_scores_zero(reply: str) -> None:
    env = make_env(MockBackend(handler=lambda req: reply))
    item = env.catalog.get("bag-hobo-plain")
    judgement = run_nli(env, item, handbag_context())
    assert judgement.score == 0.0
    assert judgement.rationale == PARSE_FAILURE_RATIONALE


def test_run_nli_retries_same_request_once_then_succeeds() -> None:
    env = make_env(MockBackend())  # placeholder, replaced below
    item = env.catalog.get("bag-hobo-plain")
    request = build_nli_request(env, item, handbag_context())
    digest = request_digest(request)
    backend = CountingBackend({digest: ["garbage", '{"score": 0.6, "rationale": "ok"}']})
    env.backend = backend
    judgement = run_nli(env, item, handbag_context())
    assert judgement.score == 0.6
    # The retry re-sends the identical request: one digest, two calls.
    assert backend.seen == {digest: 2}


def test_run_nli_gives_up_after_two_attempts() -> None:
    env = make_env(MockBackend())
    item = env.catalog.get("bag-hobo-plain")
    request = build_nli_request(env, item, handbag_context())
    digest = request_digest(request)
    backend = CountingBackend({digest: ["garbage", "still garbage", '{"score": 1}']})
    env.backend = backend
    judgement = run_nli(env, item, handbag_context())
    assert judgement.score == 0.0
    assert judgement.rationale == PARSE_FAILURE_RATIONALE
    assert backend.seen == {digest: 2}


def test_filter_aligned_threshold_order_and_backfill() -> None:
    judgements = [
        NliJudgement("c", 0.9, ""),
        NliJudgement("a", 0.6, ""),
        NliJudgement("b", 0.6, ""),
        NliJudgement("d", 0.2, ""),
        NliJudgement("e", 0.1, ""),
    ]
    assert filter_aligned(judgements, theta=0.5, m_min=0) == ["c", "a", "b"]
    # Too few above theta: top m_min by the same ordering instead.
    assert filter_aligned(judgements, theta=0.95, m_min=3) == ["c", "a", "b"]
    assert filter_aligned(judgements, theta=0.95, m_min=0) == []
    assert filter_aligned([], theta=0.5, m_min=3) == []
    with pytest.raises(ValueError, match="theta"):
        filter_aligned(judgements, theta=1.5, m_min=0)
    with pytest.raises(ValueError, match="m_min"):
        filter_aligned(judgements, theta=0.5, m_min=-1)


def test_run_csa_posts_sources_and_requires_items() -> None:
    env = make_env(MockBackend(handler=lambda req: "Checkered canvas evidence."))
    accepted = [env.catalog.get("bag-tote-checkered"), env.catalog.get("scarf-checkered")]
    summary = run_csa(env, accepted, UserSummary("Likes checkered."))
    assert summary.source_item_ids == ("bag-tote-checkered", "scarf-checkered")
    (message,) = env.board.read(role="context_summary")
    payload = json.loads(message.content)
    assert payload == {
        "text": "Checkered canvas evidence.",
        "source_item_ids": ["bag-tote-checkered", "scarf-checkered"],
    }
    assert (message.id, message.stage) == ("s2-context_summary", 2)
    with pytest.raises(DataError, match="at least one item"):
        run_csa(env, [], UserSummary("s"))


def test_run_ira_posts_full_audit_payload() -> None:
    env = make_env(MockBackend(handler=lambda req: '["bag-hobo-plain"] because reasons'))
    candidates = [env.catalog.get("bag-tote-checkered"), env.catalog.get("bag-hobo-plain")]
    ranking = run_ira(env, UserSummary("s"), None, candidates)
    assert ranking.item_ids == ("bag-hobo-plain", "bag-tote-checkered")
    (message,) = env.board.read(role="item_ranker")
    payload = json.loads(message.content)
    assert payload["ranking"] == ["bag-hobo-plain", "bag-tote-checkered"]
    assert payload["candidates"] == ["bag-tote-checkered", "bag-hobo-plain"]
    assert payload["retrieval_order"] == ["bag-tote-checkered", "bag-hobo-plain"]
    assert "because reasons" in payload["raw_response"]
    assert (message.id, message.stage) == ("s3-item_ranker", 3)
    with pytest.raises(DataError, match="non-empty"):
        run_ira(env, UserSummary("s"), None, [])


def test_ranker_prefers_session_matching_item_with_scripted_judgements() -> None:
    """End-to-end shape of the intended behavior: a checkered session should
    put the checkered tote above the plain hobo bag."""
    from agentrank import TokenOverlapBackend

    env = make_env(TokenOverlapBackend())
    context = handbag_context()
    summary = run_uua(env, context)
    candidates = [env.catalog.get("bag-hobo-plain"), env.catalog.get("bag-tote-checkered")]
    judgements = [run_nli(env, item, context) for item in candidates]
    assert {j.item_id: j.score for j in judgements}["bag-tote-checkered"] > 0.0
    accepted = filter_aligned(judgements, theta=0.3, m_min=1)
    context_summary = run_csa(
        env, [env.catalog.get(i) for i in accepted], summary, judgements
    )
    ranking = run_ira(env, summary, context_summary, candidates)
    assert ranking.item_ids[0] == "bag-tote-checkered"


def test_usage_accumulates_across_calls() -> None:
    env = make_env(MockBackend(handler=lambda req: "four words in reply"))
    run_uua(env, handbag_context())
    run_uua_usage = env.usage.as_dict()
    assert run_uua_usage["calls"] == 1
    assert run_uua_usage["completion_tokens"] == 4
    assert run_uua_usage["prompt_tokens"] > 0


# ---------------------------------------------------------------------------
# parse_ranking


PANEL = ["alpha", "Beta", "gamma-2", "delta"]


def test_parse_ranking_exact_json() -> None:
    raw = '["delta", "alpha", "gamma-2", "Beta"] all good'
    assert parse_ranking(raw, PANEL, PANEL) == ["delta", "alpha", "gamma-2", "Beta"]


def test_parse_ranking_repairs_partial_output() -> None:
    # Duplicates collapse, foreign ids drop, missing ids follow in
    # retrieval order.
    raw = 'best: ["delta", "delta", "unknown", "alpha"]'
    assert parse_ranking(raw, PANEL, PANEL) == ["delta", "alpha", "Beta", "gamma-2"]


def test_parse_ranking_case_insensitive_unique_match() -> None:
    assert parse_ranking('["BETA"]', PANEL, PANEL)[0] == "Beta"
    # Ambiguous case-folded ids only match exactly.
    panel = ["Item", "item"]
    assert parse_ranking('["ITEM"]', panel, panel) == ["Item", "item"]
    assert parse_ranking('["item"]', panel, panel) == ["item", "Item"]


def test_parse_ranking_garbage_degrades_to_retrieval_order() -> None:
    order = ["gamma-2", "alpha", "delta", "Beta"]
    assert parse_ranking("total nonsense", PANEL, order) == order
    assert parse_ranking("[1, 2, 3]", PANEL, order) == order
    assert parse_ranking("[]", PANEL, order) == order
    assert parse_ranking('["x", ["nested"]]', PANEL, order) == order


def test_parse_ranking_skips_malformed_then_finds_later_array() -> None:
    raw = '[broken ["alpha", "delta"]'
    assert parse_ranking(raw, PANEL, PANEL) == ["alpha", "delta", "Beta", "gamma-2"]


def test_parse_ranking_validates_inputs() -> None:
    with pytest.raises(ValueError, match="non-empty"):
        parse_ranking("[]", [], [])
    with pytest.raises(ValueError, match="total order"):
        parse_ranking("[]", PANEL, PANEL[:-1])
    with pytest.raises(ValueError, match="total order"):
        parse_ranking("[]", PANEL, PANEL[:-1] + ["other"])


@settings(max_examples=300, deadline=None)
@given(raw=st.text(max_size=160), data=st.data())
def test_parse_ranking_always_returns_permutation(raw: str, data) -> None:
    ids = data.draw(
        st.lists(
            st.text(alphabet=string.ascii_letters + "-_0123456789", min_size=1, max_size=8),
            min_size=1,
            max_size=10,
            unique=True,
        )
    )
    order = list(ids)
    random.Random(data.draw(st.integers(0, 2**16))).shuffle(order)
    result = parse_ranking(raw, ids, order)
    assert sorted(result) == sorted(ids)
