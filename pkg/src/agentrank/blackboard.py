"""Shared append-only memory through which the agents collaborate.

Every agent contributes messages with the schema
{id, role, content, score, timestamp, stage}.  Wall-clock arrival order of
concurrent posts is nondeterministic, so reads return a canonical order
keyed by (stage, role, id) instead; timestamps are kept as metadata only.
Agents use deterministic explicit ids, which makes the canonical view
independent of scheduling.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass

from .errors import DataError, TraceError

ROLES = ("user_understanding", "nli", "context_summary", "item_ranker")

# Protocol position of each role: parallel inference, cross-agent
# attention, final ranking.
ROLE_STAGES = {
    "user_understanding": 1,
    "nli": 1,
    "context_summary": 2,
    "item_ranker": 3,
}


def now_ms() -> int:
    return time.time_ns() // 1_000_000


@dataclass(frozen=True)
class Message:
    """One blackboard entry; ``content`` holds text or JSON-encoded payload.

    An empty ``id`` means "assign one on post" from the board's monotonic
    counter.
    """

    id: str
    role: str
    content: str
    score: float | None = None
    timestamp: int = 0
    stage: int = 0

    def __post_init__(self):
        if self.role not in ROLES:
            raise DataError(f"invalid message role {self.role!r}")
        if self.role == "nli" and self.score is None:
            raise DataError(f"message {self.id or '<unassigned>'}: nli messages must carry a score")

    def sort_key(self) -> tuple[int, str, str]:
        return (self.stage, self.role, self.id)


class Blackboard:
    """Append-only message log with a canonical, schedule-independent view."""

    def __init__(self):
        self._log: list[Message] = []
        self._ids: set[str] = set()
        self._counter = 0
        self._lock = threading.Lock()

    def post(self, message: Message) -> str:
        """Append a message; assigns a monotonic id when none was given."""
        with self._lock:
            if not message.id:
                self._counter += 1
                message = Message(
                    id=f"m{self._counter:06d}",
                    role=message.role,
                    content=message.content,
                    score=message.score,
                    timestamp=message.timestamp,
                    stage=message.stage,
                )
            if message.id in self._ids:
                raise DataError(f"duplicate message id {message.id!r}")
            self._ids.add(message.id)
            self._log.append(message)
            return message.id

    def read(self, role: str | None = None) -> list[Message]:
        """All messages (optionally one role) in canonical (stage, role, id) order."""
        if role is not None and role not in ROLES:
            raise DataError(f"invalid message role {role!r}")
        with self._lock:
            snapshot = list(self._log)
        if role is not None:
            snapshot = [m for m in snapshot if m.role == role]
        return sorted(snapshot, key=Message.sort_key)

    def arrival_log(self) -> list[Message]:
        """Messages in the order they were appended (diagnostic view)."""
        with self._lock:
            return list(self._log)

    def __len__(self) -> int:
        with self._lock:
            return len(self._log)


def serialize(board: Blackboard) -> str:
    """Render a board as a JSONL trace document in canonical order."""
    lines = []
    for m in board.read():
        lines.append(
            json.dumps(
                {
                    "id": m.id,
                    "role": m.role,
                    "content": m.content,
                    "score": m.score,
                    "timestamp": m.timestamp,
                    "stage": m.stage,
                },
                ensure_ascii=False,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def replay(trace: str) -> Blackboard:
    """Rebuild a board from a trace document.

    Raises :class:`TraceError` with the byte offset of the offending line
    on malformed input; replay(serialize(b)) is message-for-message equal
    to b.
    """
    board = Blackboard()
    offset = 0
    # Split on LF only: JSONL delimits records with "\n", and content may
    # legitimately contain unicode line separators that splitlines() would
    # treat as record breaks.
    for raw_line in trace.split("\n"):
        line = raw_line
        if line.strip():
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError(f"malformed trace line: {exc.msg}", byte_offset=offset) from exc
            if not isinstance(obj, dict):
                raise TraceError("trace line is not a JSON object", byte_offset=offset)
            missing = {"id", "role", "content", "score", "timestamp", "stage"} - obj.keys()
            if missing:
                raise TraceError(
                    f"trace line missing fields: {', '.join(sorted(missing))}",
                    byte_offset=offset,
                )
            try:
                message = Message(
                    id=str(obj["id"]),
                    role=str(obj["role"]),
                    content=str(obj["content"]),
                    score=None if obj["score"] is None else float(obj["score"]),
                    timestamp=int(obj["timestamp"]),
                    stage=int(obj["stage"]),
                )
            except (DataError, TypeError, ValueError) as exc:
                raise TraceError(f"invalid trace message: {exc}", byte_offset=offset) from None
            try:
                board.post(message)
            except DataError as exc:
                raise TraceError(str(exc), byte_offset=offset) from None
        offset += len(raw_line.encode("utf-8")) + 1
    return board


def validate_stages(board: Blackboard) -> None:
    """Check every message sits at its protocol stage (detects tampering)."""
    for m in board.read():
        expected = ROLE_STAGES[m.role]
        if m.stage != expected:
            raise TraceError(
                f"message {m.id}: role {m.role!r} must be at stage {expected}, found {m.stage}"
            )
