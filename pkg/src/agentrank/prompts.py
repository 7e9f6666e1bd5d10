"""Prompt template loading and the shared block renderers.

Templates are plain text files with ``$placeholder`` fields
(``string.Template`` syntax), one file per agent role, so prompts are
auditable and swappable without code changes.  Rendering is a pure
function of its typed inputs: identical inputs always produce identical
prompt strings, and therefore identical request digests.

Placeholders per template:

* ``user_understanding.txt``: ``$session_block``, ``$long_term_block``
* ``nli.txt``: ``$item_block``, ``$session_block``, ``$long_term_block``
* ``context_summary.txt``: ``$user_summary``, ``$items_block``
* ``item_ranker.txt``: ``$user_summary``, ``$context_summary``, ``$candidates_block``
* ``baseline_rank.txt``: ``$history_block``, ``$candidates_block``
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from string import Template

from .corpus import Catalog, Interaction, Item, metadata_text
from .errors import DataError

TEMPLATE_NAMES = (
    "user_understanding",
    "nli",
    "context_summary",
    "item_ranker",
    "baseline_rank",
)

# Section headers; the deterministic mock backend keys off these.
SESSION_HEADER = "Current session (newest first):"
LONG_TERM_HEADER = "Long-term history (newest first):"
USER_SUMMARY_HEADER = "User preference summary:"
CONTEXT_SUMMARY_HEADER = "Context summary:"
CANDIDATES_HEADER = "Candidate items:"
ITEMS_HEADER = "Items to summarize:"
HISTORY_HEADER = "User history:"
CANDIDATE_ITEM_HEADER = "Candidate item:"

EMPTY_BLOCK = "(none)"


class TemplateSet:
    """The prompt templates for all agent roles, loaded once."""

    def __init__(self, texts: dict[str, str]):
        missing = set(TEMPLATE_NAMES) - texts.keys()
        if missing:
            raise DataError(f"missing prompt templates: {', '.join(sorted(missing))}")
        self._templates = {name: Template(text) for name, text in texts.items()}

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "TemplateSet":
        """Load templates from a directory, or the packaged defaults."""
        texts: dict[str, str] = {}
        if directory is None:
            root = resources.files(__package__) / "prompts"
            for name in TEMPLATE_NAMES:
                texts[name] = (root / f"{name}.txt").read_text(encoding="utf-8")
        else:
            directory = Path(directory)
            for name in TEMPLATE_NAMES:
                path = directory / f"{name}.txt"
                if not path.exists():
                    raise DataError(f"missing prompt template: {path}")
                texts[name] = path.read_text(encoding="utf-8")
        return cls(texts)

    def render(self, name: str, **fields: str) -> str:
        try:
            template = self._templates[name]
        except KeyError:
            raise DataError(f"unknown prompt template {name!r}") from None
        try:
            return template.substitute(**fields)
        except KeyError as exc:
            raise DataError(f"template {name!r}: missing placeholder value {exc}") from None


def squash(text: str, max_chars: int) -> str:
    """Flatten a metadata block to one line and truncate it."""
    flat = " | ".join(part.strip() for part in text.splitlines() if part.strip())
    if max_chars > 0 and len(flat) > max_chars:
        flat = flat[: max_chars - 3].rstrip() + "..."
    return flat


def item_line(item: Item, max_reviews: int, max_chars: int, score: float | None = None) -> str:
    """One ``- [id] ...`` bullet; the optional score is an NLI annotation."""
    body = squash(metadata_text(item, max_reviews), max_chars)
    if score is None:
        return f"- [{item.id}] {body}"
    return f"- [{item.id}] (alignment {score:.2f}) {body}"


def interaction_lines(
    interactions: list[Interaction],
    catalog: Catalog,
    max_reviews: int,
    max_chars: int,
) -> str:
    if not interactions:
        return EMPTY_BLOCK
    return "\n".join(
        item_line(catalog.get(x.item_id), max_reviews, max_chars) for x in interactions
    )


def items_block(
    items: list[Item],
    max_reviews: int,
    max_chars: int,
    scores: dict[str, float] | None = None,
) -> str:
    if not items:
        return EMPTY_BLOCK
    return "\n".join(
        item_line(item, max_reviews, max_chars, None if scores is None else scores.get(item.id))
        for item in items
    )
