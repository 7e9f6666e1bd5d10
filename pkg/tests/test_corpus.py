"""Data model, JSONL loaders, and session splitting."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentrank import (
    Catalog,
    DataError,
    EvalInstance,
    Interaction,
    Item,
    UserContext,
    build_contexts,
    embedding_text,
    holdout_split,
    load_catalog,
    load_interactions,
    metadata_text,
)
from helpers import make_catalog, make_item, make_log


def test_item_requires_id_and_title() -> None:
    with pytest.raises(DataError):
        Item(id="", title="x")
    with pytest.raises(DataError):
        Item(id="a", title="")


def test_item_reviews_coerced_to_tuple() -> None:
    item = Item(id="a", title="A", reviews=["one", "two"])
    assert item.reviews == ("one", "two")


def test_interaction_validation() -> None:
    with pytest.raises(DataError, match="timestamp"):
        Interaction(user_id="u", item_id="a", timestamp=-1)
    with pytest.raises(DataError, match="rating"):
        Interaction(user_id="u", item_id="a", timestamp=0, rating=0.5)
    Interaction(user_id="u", item_id="a", timestamp=0, rating=5.0)


def test_catalog_basics() -> None:
    catalog = make_catalog(make_item("b"), make_item("a"))
    assert len(catalog) == 2
    assert "a" in catalog and "z" not in catalog
    assert catalog.ids() == ["a", "b"]
    assert catalog.get("a").id == "a"
    with pytest.raises(DataError, match="duplicate item id"):
        catalog.add(make_item("a"))
    with pytest.raises(DataError, match="unknown item id"):
        catalog.get("z")


def test_user_context_rejects_unsorted_blocks() -> None:
    a = Interaction("u", "a", 100)
    b = Interaction("u", "b", 50)
    with pytest.raises(DataError, match="not sorted"):
        UserContext(user_id="u", long_term=(a, b))
    with pytest.raises(DataError, match="predates"):
        UserContext(user_id="u", long_term=(a,), session=(b,))


def test_newest_first_puts_session_ahead_of_history() -> None:
    lt = (Interaction("u", "a", 10), Interaction("u", "b", 20))
    ses = (Interaction("u", "c", 30), Interaction("u", "d", 40))
    context = UserContext(user_id="u", long_term=lt, session=ses)
    assert [x.item_id for x in context.newest_first()] == ["d", "c", "b", "a"]
    assert [x.item_id for x in context.interactions] == ["a", "b", "c", "d"]


def test_eval_instance_rejects_leaked_truth() -> None:
    ses = (Interaction("u", "a", 10),)
    with pytest.raises(DataError, match="ground truth"):
        EvalInstance(context=UserContext(user_id="u", session=ses), ground_truth="a")


def test_load_catalog_roundtrip(tmp_path) -> None:
    path = tmp_path / "catalog.jsonl"
    path.write_text(
        '{"id": "a", "title": "A", "description": "d", "reviews": ["r1"], "category": "c"}\n'
        "\n"
        '{"id": "b", "title": "B"}\n',
        encoding="utf-8",
    )
    catalog = load_catalog(path)
    assert catalog.ids() == ["a", "b"]
    assert catalog.get("a").reviews == ("r1",)
    assert catalog.get("b").description == ""


def test_load_catalog_reports_line_numbers(tmp_path) -> None:
    path = tmp_path / "catalog.jsonl"
    path.write_text('{"id": "a", "title": "A"}\nnot json\n', encoding="utf-8")
    with pytest.raises(DataError, match="line 2"):
        load_catalog(path)


def test_load_catalog_duplicate_and_bad_fields(tmp_path) -> None:
    path = tmp_path / "catalog.jsonl"
    path.write_text('{"id": "a", "title": "A"}\n{"id": "a", "title": "B"}\n', encoding="utf-8")
    with pytest.raises(DataError, match="line 2"):
        load_catalog(path)
    path.write_text('{"id": "a", "title": 3}\n', encoding="utf-8")
    with pytest.raises(DataError, match="'title' must be a string"):
        load_catalog(path)
    path.write_text('{"id": "a", "title": "A", "reviews": "nope"}\n', encoding="utf-8")
    with pytest.raises(DataError, match="reviews"):
        load_catalog(path)


def test_load_interactions_validates_types(tmp_path) -> None:
    path = tmp_path / "log.jsonl"
    path.write_text('{"user_id": "u", "item_id": "a", "timestamp": 10, "rating": 4}\n')
    log = load_interactions(path)
    assert log[0].rating == 4.0
    path.write_text('{"user_id": "u", "item_id": "a", "timestamp": "10"}\n')
    with pytest.raises(DataError, match="'timestamp' must be an integer"):
        load_interactions(path)
    path.write_text('{"user_id": "u", "item_id": "a", "timestamp": true}\n')
    with pytest.raises(DataError, match="'timestamp' must be an integer"):
        load_interactions(path)


def test_build_contexts_rejects_unknown_items() -> None:
    catalog = make_catalog(make_item("a"))
    log = make_log("u", ["a", "ghost"])
    with pytest.raises(DataError, match="ghost"):
        build_contexts(log, catalog)


def test_session_is_trailing_dense_block() -> None:
    catalog = make_catalog(*(make_item(x) for x in "abcd"))
    log = [
        Interaction("u", "a", 0),
        Interaction("u", "b", 10_000),
        Interaction("u", "c", 10_050),
        Interaction("u", "d", 10_100),
    ]
    (context,) = build_contexts(log, catalog, session_gap=3600.0)
    assert [x.item_id for x in context.long_term] == ["a"]
    assert [x.item_id for x in context.session] == ["b", "c", "d"]


def test_gap_equal_to_threshold_breaks_session() -> None:
    # The session keeps gaps strictly under the threshold.
    catalog = make_catalog(make_item("a"), make_item("b"))
    log = [Interaction("u", "a", 0), Interaction("u", "b", 3600)]
    (context,) = build_contexts(log, catalog, session_gap=3600.0)
    assert [x.item_id for x in context.long_term] == ["a"]
    assert [x.item_id for x in context.session] == ["b"]
    (context,) = build_contexts(log, catalog, session_gap=3601.0)
    assert context.long_term == ()


def test_build_contexts_sorts_users_and_breaks_timestamp_ties_by_item() -> None:
    catalog = make_catalog(make_item("a"), make_item("b"), make_item("c"))
    log = [
        Interaction("u2", "c", 5),
        Interaction("u1", "b", 5),
        Interaction("u1", "a", 5),
    ]
    contexts = build_contexts(log, catalog)
    assert [c.user_id for c in contexts] == ["u1", "u2"]
    assert [x.item_id for x in contexts[0].session] == ["a", "b"]


def test_holdout_split_removes_last_session_event() -> None:
    catalog = make_catalog(*(make_item(x) for x in "abc"))
    log = make_log("u", ["a", "b", "c"])
    (context,) = build_contexts(log, catalog)
    instance = holdout_split(context)
    assert instance.ground_truth == "c"
    assert [x.item_id for x in instance.context.session] == ["a", "b"]


def test_holdout_split_needs_a_session() -> None:
    context = UserContext(user_id="u", long_term=(Interaction("u", "a", 0),))
    with pytest.raises(DataError, match="empty session"):
        holdout_split(context)


def test_holdout_split_rejects_single_event_users() -> None:
    # One lone interaction leaves nothing to condition on.
    context = UserContext(user_id="u", session=(Interaction("u", "a", 0),))
    with pytest.raises(DataError, match="completely empty"):
        holdout_split(context)


def test_metadata_text_labels_sections() -> None:
    item = make_item("a", title="T", description="D", reviews=("r1", "r2", "r3", "r4"))
    text = metadata_text(item, max_reviews=2)
    assert text == "Title: T\nDescription: D\nReview: r1\nReview: r2"
    assert metadata_text(make_item("b", title="B")) == "Title: B"


def test_embedding_text_drops_labels() -> None:
    item = make_item("a", title="T", description="D", reviews=("r1",))
    assert embedding_text(item) == "T\nD\nr1"
    assert "Title" not in embedding_text(item)


@settings(max_examples=200, deadline=None)
@given(
    gaps=st.lists(st.integers(min_value=0, max_value=8000), min_size=0, max_size=12),
    session_gap=st.integers(min_value=1, max_value=7200),
)
def test_session_boundary_is_maximal_dense_suffix(gaps: list[int], session_gap: int) -> None:
    """Every in-session gap is under the threshold and the boundary gap is not."""
    catalog = Catalog()
    log = []
    t = 0
    for i, gap in enumerate([0] + gaps):
        t += gap
        item_id = f"i{i:02d}"
        catalog.add(make_item(item_id))
        log.append(Interaction("u", item_id, t))
    (context,) = build_contexts(log, catalog, session_gap=float(session_gap))
    assert list(context.interactions) == sorted(log, key=lambda x: (x.timestamp, x.item_id))
    session = context.session
    assert session, "the newest event always starts a session"
    for earlier, later in zip(session, session[1:]):
        assert later.timestamp - earlier.timestamp < session_gap
    if context.long_term:
        boundary_gap = session[0].timestamp - context.long_term[-1].timestamp
        assert boundary_gap >= session_gap
