"""Embedding, cosine similarity, and exact top-k recall.

The built-in embedder is a hashed bag-of-tokens: lowercase, split on
non-alphanumerics, each token hashed to one of ``dim`` buckets, counts
accumulated, then L2-normalized.  It is deterministic across runs and
needs no network, which keeps the whole test suite offline.  Any object
with the same ``dim``/``embed_text`` surface (e.g. a remote embedding
client) can stand in for it.

Retrieval is an exact brute-force scan; at desk scale (up to ~1e5 items)
that is fast, and exactness is what makes oracle testing possible.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Catalog, UserContext, embedding_text
from .errors import DataError

DEFAULT_DIM = 256
DEFAULT_K = 50

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics."""
    return _TOKEN_RE.findall(text.lower())


def _bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class HashEmbedder:
    """Deterministic hashed bag-of-tokens embedder."""

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def embed_text(self, text: str) -> np.ndarray:
        """Embed a string; empty or token-free text maps to the zero vector."""
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in tokenize(text):
            vec[_bucket(token, self.dim)] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec


def embed_user(
    embedder: HashEmbedder,
    context: UserContext,
    catalog: Catalog,
    max_items: int = 10,
    max_reviews: int = 3,
) -> np.ndarray:
    """Embed a user as the concatenated metadata of their most recent items.

    Session items come first, then long-term, newest first, capped at
    ``max_items``.
    """
    if max_items < 1:
        raise ValueError("max_items must be >= 1")
    recent = context.newest_first()[:max_items]
    texts = [embedding_text(catalog.get(x.item_id), max_reviews) for x in recent]
    return embedder.embed_text("\n\n".join(texts))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (norm_a * norm_b)


class VectorIndex:
    """Immutable id-to-vector index over one catalog.

    All vectors share one dimension; ids are unique.  Safe for concurrent
    readers once built.
    """

    def __init__(self, ids: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise ValueError("matrix must be (len(ids), dim)")
        if len(set(ids)) != len(ids):
            raise DataError("duplicate ids in vector index")
        if not np.all(np.isfinite(matrix)):
            raise DataError("vector index contains non-finite entries")
        self.ids = list(ids)
        self.matrix = matrix
        self.matrix.setflags(write=False)
        self._pos = {item_id: i for i, item_id in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._pos

    def vector(self, item_id: str) -> np.ndarray:
        try:
            return self.matrix[self._pos[item_id]]
        except KeyError:
            raise DataError(f"item id {item_id!r} not in index") from None


def build_index(
    catalog: Catalog,
    embedder: HashEmbedder,
    max_reviews: int = 3,
) -> VectorIndex:
    """Embed every catalog item's metadata; ids come out sorted."""
    ids = catalog.ids()
    matrix = np.zeros((len(ids), embedder.dim), dtype=np.float64)
    for i, item_id in enumerate(ids):
        matrix[i] = embedder.embed_text(embedding_text(catalog.get(item_id), max_reviews))
    return VectorIndex(ids, matrix)


def retrieve_topk(
    index: VectorIndex,
    query: np.ndarray,
    k: int = DEFAULT_K,
) -> list[tuple[str, float]]:
    """The k most cosine-similar items, exact, ties broken by id ascending.

    Returns (item_id, score) pairs with non-increasing scores; fewer than
    k entries if the index is smaller.  An empty index yields an empty
    recall set.

    Scores come from the scalar :func:`cosine` per row rather than one
    matrix product: BLAS reductions are not bit-stable across row
    positions, and equal vectors must tie exactly for the id tie rule to
    be meaningful.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        return []
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dim,):
        raise ValueError(f"dimension mismatch: query {query.shape} vs index dim {index.dim}")
    scored = [
        (item_id, cosine(index.matrix[i], query))
        for i, item_id in enumerate(index.ids)
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def save_index(index: VectorIndex, path: str | Path) -> None:
    """Write a JSONL vector cache: one {id, vector} object per line."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for i, item_id in enumerate(index.ids):
            handle.write(json.dumps({"id": item_id, "vector": index.matrix[i].tolist()}) + "\n")


def load_index(path: str | Path) -> VectorIndex:
    """Load a JSONL vector cache written by :func:`save_index`."""
    ids: list[str] = []
    rows: list[list[float]] = []
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {line_no}: malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict) or "id" not in obj or "vector" not in obj:
                raise DataError(f"{path}: line {line_no}: expected {{id, vector}}")
            ids.append(str(obj["id"]))
            rows.append([float(v) for v in obj["vector"]])
    if not ids:
        return VectorIndex([], np.zeros((0, 0), dtype=np.float64))
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise DataError(f"{path}: vectors are not dimension-homogeneous")
    return VectorIndex(ids, np.array(rows, dtype=np.float64))
