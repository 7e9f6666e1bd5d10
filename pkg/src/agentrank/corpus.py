"""Data model for items, interactions, and user contexts.

Catalogs and interaction logs are line-delimited JSON so that review-style
datasets drop in directly.  A user's history is split into a long-term
block and a current-session block with a gap heuristic: the maximal suffix
of the (time-sorted) log whose consecutive gaps all stay under
``session_gap`` seconds is the session, everything before it is long-term.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataError

DEFAULT_SESSION_GAP = 3600.0
DEFAULT_MAX_REVIEWS = 3


@dataclass(frozen=True)
class Item:
    """A recommendable unit with its textual metadata."""

    id: str
    title: str
    description: str = ""
    reviews: tuple[str, ...] = ()
    category: str = ""

    def __post_init__(self):
        if not self.id:
            raise DataError("item id must be non-empty")
        if not self.title:
            raise DataError(f"item {self.id!r}: title must be non-empty")
        object.__setattr__(self, "reviews", tuple(self.reviews))


@dataclass(frozen=True)
class Interaction:
    """One user-item event from the interaction log."""

    user_id: str
    item_id: str
    timestamp: int
    rating: float | None = None
    review_text: str | None = None

    def __post_init__(self):
        if self.timestamp < 0:
            raise DataError(
                f"interaction {self.user_id}/{self.item_id}: timestamp must be >= 0"
            )
        if self.rating is not None and not (1.0 <= self.rating <= 5.0):
            raise DataError(
                f"interaction {self.user_id}/{self.item_id}: rating must be in [1, 5]"
            )


@dataclass(frozen=True)
class UserContext:
    """A user's long-term history plus their current session.

    Both lists are sorted non-decreasing by timestamp and every session
    event is at least as recent as every long-term event.
    """

    user_id: str
    long_term: tuple[Interaction, ...] = ()
    session: tuple[Interaction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "long_term", tuple(self.long_term))
        object.__setattr__(self, "session", tuple(self.session))
        for block_name, block in (("long_term", self.long_term), ("session", self.session)):
            for earlier, later in zip(block, block[1:]):
                if later.timestamp < earlier.timestamp:
                    raise DataError(
                        f"user {self.user_id}: {block_name} not sorted by timestamp"
                    )
        if self.long_term and self.session:
            if self.session[0].timestamp < self.long_term[-1].timestamp:
                raise DataError(
                    f"user {self.user_id}: session predates long-term history"
                )

    @property
    def interactions(self) -> tuple[Interaction, ...]:
        """All events, oldest first."""
        return self.long_term + self.session

    def newest_first(self) -> list[Interaction]:
        """All events ordered newest first, session block leading."""
        return list(reversed(self.session)) + list(reversed(self.long_term))


@dataclass(frozen=True)
class EvalInstance:
    """A leave-last-out evaluation case: a trimmed context plus the held-out item id."""

    context: UserContext
    ground_truth: str

    def __post_init__(self):
        if any(x.item_id == self.ground_truth for x in self.context.session):
            raise DataError(
                f"user {self.context.user_id}: ground truth still present in session"
            )
        if not self.context.session and not self.context.long_term:
            raise DataError(
                f"user {self.context.user_id}: instance context is completely empty"
            )


class Catalog:
    """An id-keyed collection of items."""

    def __init__(self, items: Iterable[Item] = ()):
        self._items: dict[str, Item] = {}
        for item in items:
            self.add(item)

    def add(self, item: Item) -> None:
        if item.id in self._items:
            raise DataError(f"duplicate item id {item.id!r}")
        self._items[item.id] = item

    def get(self, item_id: str) -> Item:
        try:
            return self._items[item_id]
        except KeyError:
            raise DataError(f"unknown item id {item_id!r}") from None

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._items

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Item]:
        return iter(self._items.values())

    def ids(self) -> list[str]:
        return sorted(self._items)


def _require_str(obj: dict, key: str, line_no: int) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise DataError(f"line {line_no}: field {key!r} must be a string")
    return value


def load_catalog(path: str | Path) -> Catalog:
    """Load a JSONL catalog file, one item object per line.

    Blank lines are skipped.  Malformed lines and duplicate ids are
    reported with their line number.
    """
    catalog = Catalog()
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"catalog file not found: {path}") from None
    with handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {line_no}: malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}: line {line_no}: expected a JSON object")
            reviews = obj.get("reviews", [])
            if not isinstance(reviews, list) or any(not isinstance(r, str) for r in reviews):
                raise DataError(f"{path}: line {line_no}: 'reviews' must be an array of strings")
            try:
                item = Item(
                    id=_require_str(obj, "id", line_no),
                    title=_require_str(obj, "title", line_no),
                    description=str(obj.get("description", "")),
                    reviews=tuple(reviews),
                    category=str(obj.get("category", "")),
                )
                catalog.add(item)
            except DataError as exc:
                raise DataError(f"{path}: line {line_no}: {exc}") from None
    return catalog


def load_interactions(path: str | Path) -> list[Interaction]:
    """Load a JSONL interaction log."""
    out: list[Interaction] = []
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"interaction log not found: {path}") from None
    with handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {line_no}: malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}: line {line_no}: expected a JSON object")
            timestamp = obj.get("timestamp")
            if not isinstance(timestamp, int) or isinstance(timestamp, bool):
                raise DataError(f"{path}: line {line_no}: 'timestamp' must be an integer")
            rating = obj.get("rating")
            if rating is not None and not isinstance(rating, (int, float)):
                raise DataError(f"{path}: line {line_no}: 'rating' must be a number")
            try:
                out.append(
                    Interaction(
                        user_id=_require_str(obj, "user_id", line_no),
                        item_id=_require_str(obj, "item_id", line_no),
                        timestamp=timestamp,
                        rating=float(rating) if rating is not None else None,
                        review_text=obj.get("review_text"),
                    )
                )
            except DataError as exc:
                raise DataError(f"{path}: line {line_no}: {exc}") from None
    return out


def build_contexts(
    log: Iterable[Interaction],
    catalog: Catalog,
    session_gap: float = DEFAULT_SESSION_GAP,
) -> list[UserContext]:
    """Group a raw log into per-user contexts.

    Per user, events are sorted by timestamp with ties broken by item_id
    ascending; the maximal suffix whose consecutive gaps are all strictly
    under ``session_gap`` seconds becomes the session.  Returns contexts
    sorted by user id.
    """
    if session_gap <= 0:
        raise ValueError("session_gap must be > 0")
    log = list(log)
    unknown = sorted({x.item_id for x in log if x.item_id not in catalog})
    if unknown:
        raise DataError(f"interactions reference unknown item ids: {', '.join(unknown)}")

    by_user: dict[str, list[Interaction]] = {}
    for interaction in log:
        by_user.setdefault(interaction.user_id, []).append(interaction)

    contexts = []
    for user_id in sorted(by_user):
        events = sorted(by_user[user_id], key=lambda x: (x.timestamp, x.item_id))
        boundary = len(events) - 1
        while boundary > 0 and events[boundary].timestamp - events[boundary - 1].timestamp < session_gap:
            boundary -= 1
        contexts.append(
            UserContext(
                user_id=user_id,
                long_term=tuple(events[:boundary]),
                session=tuple(events[boundary:]),
            )
        )
    return contexts


def holdout_split(context: UserContext) -> EvalInstance:
    """Remove the final session interaction and return it as ground truth."""
    if not context.session:
        raise DataError(f"user {context.user_id}: cannot hold out from an empty session")
    held_out = context.session[-1]
    trimmed = replace(context, session=context.session[:-1])
    return EvalInstance(context=trimmed, ground_truth=held_out.item_id)


def metadata_text(item: Item, max_reviews: int = DEFAULT_MAX_REVIEWS) -> str:
    """Render an item's textual metadata as a stable labeled block.

    Pure function of (item, max_reviews): title, description, then the
    first ``max_reviews`` reviews, one labeled section per line.
    """
    if max_reviews < 0:
        raise ValueError("max_reviews must be >= 0")
    lines = [f"Title: {item.title}"]
    if item.description:
        lines.append(f"Description: {item.description}")
    for review in item.reviews[:max_reviews]:
        lines.append(f"Review: {review}")
    return "\n".join(lines)


def embedding_text(item: Item, max_reviews: int = DEFAULT_MAX_REVIEWS) -> str:
    """Label-free variant of ``metadata_text`` for the vector index.

    The section labels carry no item-specific information but would be
    shared by every document, drowning sparse content overlap, so the
    embedder sees bare text while prompts keep the labeled form.
    """
    if max_reviews < 0:
        raise ValueError("max_reviews must be >= 0")
    parts = [item.title]
    if item.description:
        parts.append(item.description)
    parts.extend(item.reviews[:max_reviews])
    return "\n".join(parts)
