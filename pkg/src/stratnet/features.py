"""Node embeddings and field vectors.

Author embeddings are time-keyed (the same author at different snapshots is a
different node); content embeddings are static. Missing author entries
resolve to the all-zero vector, which is also the prior embedding of an
author appearing for the first time.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .errors import DanglingReference, DimensionMismatch, ParseError, SchemaError
from .graph import Kind, TemporalGraph

FIELD_DIM = 100


class EmbeddingStore:
    def __init__(self, dim: int, content: dict[int, np.ndarray] | None = None,
                 author: dict[tuple[int, int], np.ndarray] | None = None):
        self.dim = int(dim)
        self.content = dict(content or {})
        self.author = dict(author or {})
        for v in list(self.content.values()) + list(self.author.values()):
            if v.shape != (self.dim,):
                raise DimensionMismatch(f"expected dimension {self.dim}, got {v.shape}")
            if not np.all(np.isfinite(v)):
                raise SchemaError("embedding contains non-finite entries")

    def content_vec(self, c: int) -> np.ndarray:
        return self.content.get(c, np.zeros(self.dim))

    def author_vec(self, a: int, t: int) -> np.ndarray:
        return self.author.get((a, t), np.zeros(self.dim))

    def content_matrix(self, contents) -> np.ndarray:
        return np.array([self.content_vec(c) for c in contents]).reshape(-1, self.dim)

    def author_matrix(self, authors, t: int) -> np.ndarray:
        return np.array([self.author_vec(a, t) for a in authors]).reshape(-1, self.dim)

    def to_records(self, g: TemporalGraph) -> list[dict]:
        rows = [{"id": g.content_keys[c], "t": None, "vec": [float(x) for x in v]}
                for c, v in sorted(self.content.items())]
        rows += [{"id": g.author_keys[a], "t": t + g.epoch, "vec": [float(x) for x in v]}
                 for (a, t), v in sorted(self.author.items())]
        return rows


def _parse_vec(rec, where):
    vec = rec.get("vec")
    if not isinstance(vec, list):
        raise ParseError(f"{where}: 'vec' must be a list")
    try:
        return np.array([float(x) for x in vec])
    except (TypeError, ValueError):
        raise ParseError(f"{where}: non-numeric entry in 'vec'") from None


def _read_rows(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    rows.append((f"{path}:{lineno}", json.loads(line)))
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from None
    return rows


def embeddings_from_records(records, g: TemporalGraph) -> EmbeddingStore:
    dim = None
    content, author = {}, {}
    for where, rec in records:
        vec = _parse_vec(rec, where)
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise DimensionMismatch(f"{where}: dimension {len(vec)} != {dim}")
        key = rec.get("id")
        t = rec.get("t")
        if key in g._index[Kind.CONTENT]:
            content[g._index[Kind.CONTENT][key]] = vec
        elif key in g._index[Kind.AUTHOR]:
            if not isinstance(t, int):
                raise SchemaError(f"{where}: author embeddings need an integer 't'")
            author[(g._index[Kind.AUTHOR][key], t - g.epoch)] = vec
        elif key in g._index[Kind.VENUE]:
            continue
        else:
            raise DanglingReference(f"{where}: unknown node {key!r}")
    return EmbeddingStore(dim or 0, content, author)


def load_embeddings(path, g: TemporalGraph) -> EmbeddingStore:
    return embeddings_from_records(_read_rows(path), g)


def _token_hash(seed: int, token: str) -> int:
    digest = hashlib.blake2b(f"{seed}|{token}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _signature(tokens, dim: int, seed: int, fallback_token: str) -> np.ndarray:
    v = np.zeros(dim)
    for tok in tokens:
        h = _token_hash(seed, tok)
        v[h % dim] += 1.0 if (h >> 32) & 1 else -1.0
    norm = np.linalg.norm(v)
    if norm == 0.0:
        v[_token_hash(seed, "self|" + fallback_token) % dim] = 1.0
        return v
    return v / norm


def fallback_embed(g: TemporalGraph, dim: int, seed: int = 0) -> EmbeddingStore:
    """Hashed random projection of each node's neighbour multiset.

    Contents see their authors, venue and cited contents; an author at snapshot
    ``t`` sees the contents written at ``t``. Each neighbour token lands in a
    seeded bucket with a seeded sign; the result is L2-normalised. A node with
    an empty (or cancelling) signature gets a unit basis vector picked by a
    hash of its own id.
    """
    if dim < 2:
        raise SchemaError("embedding dimension must be >= 2")
    content = {}
    for c, key in enumerate(g.content_keys):
        tokens = [f"author|{g.author_keys[a]}" for a in g.content_authors[c]]
        if g.content_venue[c] is not None:
            tokens.append(f"venue|{g.venue_keys[g.content_venue[c]]}")
        tokens += [f"content|{g.content_keys[d]}" for d in g.content_cites[c]]
        content[c] = _signature(tokens, dim, seed, f"content|{key}")
    author = {}
    for snap in g.snapshots:
        for a in snap.active_authors:
            tokens = [f"content|{g.content_keys[c]}" for c in g.author_contents_at(a, snap.t)]
            author[(a, snap.t)] = _signature(tokens, dim, seed, f"author|{g.author_keys[a]}|{snap.t}")
    return EmbeddingStore(dim, content, author)


# -- field vectors ----------------------------------------------------------

def _l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


class FieldStore:
    """Per-content field vectors; rows of zeros mark unknown fields."""

    def __init__(self, vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim != 2:
            raise DimensionMismatch("field vectors must form a 2-d array")
        self.vectors = _l2_normalize_rows(vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def content(self, c: int) -> np.ndarray:
        return self.vectors[c]

    def author_matrix(self, g: TemporalGraph, authors, t: int) -> np.ndarray:
        """Field vectors of ``authors`` using their contents created by ``t``."""
        acc = np.zeros((len(authors), self.dim))
        for i, a in enumerate(authors):
            cs = [c for c in g.author_contents[a] if g.content_time[c] <= t]
            if cs:
                acc[i] = self.vectors[cs].sum(axis=0)
        return _l2_normalize_rows(acc)

    def venue_matrix(self, g: TemporalGraph, venues, t: int) -> np.ndarray:
        acc = np.zeros((len(venues), self.dim))
        for i, u in enumerate(venues):
            cs = [c for c in g.venue_contents[u] if g.content_time[c] <= t]
            if cs:
                acc[i] = self.vectors[cs].sum(axis=0)
        return _l2_normalize_rows(acc)

    def to_records(self, g: TemporalGraph) -> list[dict]:
        return [{"id": g.content_keys[c], "vec": [float(x) for x in v]}
                for c, v in enumerate(self.vectors) if np.any(v)]


def author_field_vector(g: TemporalGraph, fields: FieldStore, a: int, t: int) -> np.ndarray:
    """Normalised mean field vector of ``a``'s contents created by ``t``."""
    return fields.author_matrix(g, [a], t)[0]


def venue_field_vector(g: TemporalGraph, fields: FieldStore, u: int, t: int) -> np.ndarray:
    return fields.venue_matrix(g, [u], t)[0]


def load_fields(path, g: TemporalGraph) -> FieldStore:
    dim = None
    vecs = {}
    for where, rec in _read_rows(path):
        vec = _parse_vec(rec, where)
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise DimensionMismatch(f"{where}: dimension {len(vec)} != {dim}")
        key = rec.get("id")
        if key not in g._index[Kind.CONTENT]:
            raise DanglingReference(f"{where}: unknown content {key!r}")
        vecs[g._index[Kind.CONTENT][key]] = vec
    out = np.zeros((g.n_contents, dim or FIELD_DIM))
    for c, v in vecs.items():
        out[c] = v
    return FieldStore(out)


def empty_fields(g: TemporalGraph, dim: int = FIELD_DIM) -> FieldStore:
    return FieldStore(np.zeros((g.n_contents, dim)))


def is_unit_or_zero(v: np.ndarray, tol: float = 1e-9) -> bool:
    n = float(np.linalg.norm(v))
    return n == 0.0 or math.isclose(n, 1.0, abs_tol=tol)
