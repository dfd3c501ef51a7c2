"""Snapshotted author-content-venue graph and its derived edge views.

Contents carry a creation time expressed as a snapshot index
(``raw time - epoch``); contents with a negative index form the background
corpus. Author-level views are projections of content edges.
"""

from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DanglingReference, ParseError, SchemaError, TimeViolation

GRAPH_FORMAT = "stratnet-graph"
GRAPH_VERSION = 1


class Kind(str, Enum):
    AUTHOR = "author"
    CONTENT = "content"
    VENUE = "venue"


class View(str, Enum):
    CONTENT_CITES_CONTENT = "content_cites_content"
    AUTHOR_CITES_AUTHOR = "author_cites_author"
    CONTENT_AT_VENUE = "content_at_venue"
    AUTHOR_AT_VENUE = "author_at_venue"

    @property
    def source_kind(self) -> Kind:
        if self in (View.CONTENT_CITES_CONTENT, View.CONTENT_AT_VENUE):
            return Kind.CONTENT
        return Kind.AUTHOR

    @property
    def target_kind(self) -> Kind:
        return {
            View.CONTENT_CITES_CONTENT: Kind.CONTENT,
            View.AUTHOR_CITES_AUTHOR: Kind.AUTHOR,
            View.CONTENT_AT_VENUE: Kind.VENUE,
            View.AUTHOR_AT_VENUE: Kind.VENUE,
        }[self]

    @property
    def is_citation(self) -> bool:
        return self.target_kind is not Kind.VENUE

    @property
    def short(self) -> str:
        return {
            View.CONTENT_CITES_CONTENT: "cc",
            View.AUTHOR_CITES_AUTHOR: "aa",
            View.CONTENT_AT_VENUE: "cu",
            View.AUTHOR_AT_VENUE: "au",
        }[self]


@dataclass(frozen=True, order=True)
class NodeId:
    kind: Kind
    index: int


@dataclass(frozen=True)
class Snapshot:
    t: int
    active_authors: tuple[int, ...]
    new_contents: tuple[int, ...]
    authorship: tuple[tuple[int, int], ...]
    attribute_edges: Mapping[View, tuple[tuple[int, int], ...]]


class TemporalGraph:
    """Immutable graph; build through :func:`ingest` or :meth:`from_dict`.

    ``content_time`` is the snapshot index of each content. ``drop_edges`` holds
    ``(view, t, src, dst)`` tuples removed from derived author views; it is
    how evaluation folds hide author-level attribute edges.
    """

    def __init__(
        self,
        *,
        epoch: int,
        n_snapshots: int,
        author_keys: list[str],
        content_keys: list[str],
        venue_keys: list[str],
        content_time: list[int],
        content_venue: list[int | None],
        content_cites: list[tuple[int, ...]],
        authorship: Iterable[tuple[int, int]],
        author_time: list[int] | None = None,
        venue_time: list[int] | None = None,
        utilities: Mapping[int, Mapping[int, float]] | None = None,
        drop_edges: Iterable[tuple[View, int, int, int]] = (),
    ):
        self.epoch = int(epoch)
        self.n_snapshots = int(n_snapshots)
        self.author_keys = list(author_keys)
        self.content_keys = list(content_keys)
        self.venue_keys = list(venue_keys)
        self.content_time = np.asarray(content_time, dtype=np.int64)
        self.content_venue = [None if v is None else int(v) for v in content_venue]
        self.content_cites = [tuple(sorted(set(int(x) for x in cs))) for cs in content_cites]
        self.author_time = list(author_time) if author_time is not None else [0] * len(author_keys)
        self.venue_time = list(venue_time) if venue_time is not None else [0] * len(venue_keys)
        self.utilities = {int(c): {int(k): float(v) for k, v in sorted(ks.items())}
                          for c, ks in sorted((utilities or {}).items())}
        self.drop_edges = frozenset((View(v), int(t), int(s), int(d)) for v, t, s, d in drop_edges)
        self.authorship = tuple(sorted(set((int(a), int(c)) for a, c in authorship)))
        self._index = {
            Kind.AUTHOR: {k: i for i, k in enumerate(self.author_keys)},
            Kind.CONTENT: {k: i for i, k in enumerate(self.content_keys)},
            Kind.VENUE: {k: i for i, k in enumerate(self.venue_keys)},
        }
        self._derive()

    # -- construction -----------------------------------------------------

    def _derive(self):
        n_a, n_c, n_u = self.n_authors, self.n_contents, self.n_venues
        content_authors = [[] for _ in range(n_c)]
        author_contents = [[] for _ in range(n_a)]
        for a, c in self.authorship:
            content_authors[c].append(a)
            author_contents[a].append(c)
        self.content_authors = [tuple(sorted(x)) for x in content_authors]
        ct = self.content_time
        self.author_contents = [tuple(sorted(x, key=lambda c: (ct[c], c))) for x in author_contents]
        self.author_first_active = [int(ct[cs[0]]) if cs else None for cs in self.author_contents]
        venue_contents = [[] for _ in range(n_u)]
        for c, u in enumerate(self.content_venue):
            if u is not None:
                venue_contents[u].append(c)
        self.venue_contents = [tuple(sorted(x, key=lambda c: (ct[c], c))) for x in venue_contents]
        self.venue_first_active = [int(ct[cs[0]]) if cs else None for cs in self.venue_contents]
        self.cited_by = [[] for _ in range(n_c)]
        for c, cs in enumerate(self.content_cites):
            for d in cs:
                self.cited_by[d].append(c)

        by_time = defaultdict(list)
        for c in range(n_c):
            by_time[int(ct[c])].append(c)
        self._contents_by_time = {t: tuple(sorted(cs)) for t, cs in by_time.items()}
        self._sorted_times = np.sort(ct)
        self._content_order = np.argsort(ct, kind="stable")

        # Derived author views, keyed by content time (background included so
        # that popularity statistics before snapshot 0 are available).
        aa = defaultdict(set)
        au = defaultdict(set)
        for c in range(n_c):
            t = int(ct[c])
            authors = self.content_authors[c]
            if not authors:
                continue
            u = self.content_venue[c]
            cited_authors = {a2 for d in self.content_cites[c] for a2 in self.content_authors[d]}
            for a in authors:
                for a2 in cited_authors:
                    aa[t].add((a, a2))
                if u is not None:
                    au[t].add((a, u))
        for view, t, s, d in self.drop_edges:
            if view is View.AUTHOR_CITES_AUTHOR:
                aa[t].discard((s, d))
            elif view is View.AUTHOR_AT_VENUE:
                au[t].discard((s, d))
        self._derived = {
            View.AUTHOR_CITES_AUTHOR: {t: tuple(sorted(e)) for t, e in aa.items()},
            View.AUTHOR_AT_VENUE: {t: tuple(sorted(e)) for t, e in au.items()},
        }

        snaps = []
        for t in range(self.n_snapshots):
            new = self._contents_by_time.get(t, ())
            auth = tuple(sorted((a, c) for c in new for a in self.content_authors[c]))
            active = tuple(sorted({a for a, _ in auth}))
            snaps.append(Snapshot(t, active, new, auth, {v: self.edges(v, t) for v in View}))
        self.snapshots = tuple(snaps)

    # -- basic accessors --------------------------------------------------

    @property
    def n_authors(self) -> int:
        return len(self.author_keys)

    @property
    def n_contents(self) -> int:
        return len(self.content_keys)

    @property
    def n_venues(self) -> int:
        return len(self.venue_keys)

    @property
    def background(self) -> tuple[int, ...]:
        return tuple(int(c) for c in np.flatnonzero(self.content_time < 0))

    @property
    def t_min(self) -> int:
        """Earliest content time; the origin for normalized time gaps."""
        return int(self.content_time.min()) if self.n_contents else 0

    def node(self, kind: Kind | str, key: str) -> NodeId:
        kind = Kind(kind)
        try:
            return NodeId(kind, self._index[kind][key])
        except KeyError:
            raise DanglingReference(f"unknown {kind.value} id {key!r}") from None

    def key(self, node: NodeId) -> str:
        return {Kind.AUTHOR: self.author_keys, Kind.CONTENT: self.content_keys,
                Kind.VENUE: self.venue_keys}[node.kind][node.index]

    def keys(self, kind: Kind) -> list[str]:
        return {Kind.AUTHOR: self.author_keys, Kind.CONTENT: self.content_keys,
                Kind.VENUE: self.venue_keys}[kind]

    def contents_at(self, t: int) -> tuple[int, ...]:
        return self._contents_by_time.get(t, ())

    def contents_before(self, t: int) -> np.ndarray:
        """Contents created strictly before snapshot ``t``, ascending by id."""
        n = bisect_left(self._sorted_times, t)
        return np.sort(self._content_order[:n])

    def contents_up_to(self, t: int) -> np.ndarray:
        n = bisect_right(self._sorted_times, t)
        return np.sort(self._content_order[:n])

    def author_contents_at(self, a: int, t: int) -> tuple[int, ...]:
        return tuple(c for c in self.author_contents[a] if self.content_time[c] == t)

    def author_contents_before(self, a: int, t: int) -> tuple[int, ...]:
        return tuple(c for c in self.author_contents[a] if self.content_time[c] < t)

    def coauthors_at(self, a: int, t: int) -> tuple[int, ...]:
        return tuple(sorted({b for c in self.author_contents_at(a, t)
                             for b in self.content_authors[c] if b != a}))

    def edges(self, view: View, t: int) -> tuple[tuple[int, int], ...]:
        """Attribute edges of ``view`` whose source was created/active at ``t``."""
        if view is View.CONTENT_CITES_CONTENT:
            return tuple((c, d) for c in self.contents_at(t) for d in self.content_cites[c])
        if view is View.CONTENT_AT_VENUE:
            return tuple((c, self.content_venue[c]) for c in self.contents_at(t)
                         if self.content_venue[c] is not None)
        return self._derived[view].get(t, ())

    def indegree_before(self, view: View, t: int) -> np.ndarray:
        """In-degree of every target node counting edges with source time < t."""
        n = {Kind.CONTENT: self.n_contents, Kind.AUTHOR: self.n_authors,
             Kind.VENUE: self.n_venues}[view.target_kind]
        targets = []
        if view in (View.CONTENT_CITES_CONTENT, View.CONTENT_AT_VENUE):
            for c in self.contents_before(t):
                if view is View.CONTENT_CITES_CONTENT:
                    targets.extend(self.content_cites[c])
                elif self.content_venue[c] is not None:
                    targets.append(self.content_venue[c])
        else:
            for tt, es in self._derived[view].items():
                if tt < t:
                    targets.extend(d for _, d in es)
        return np.bincount(np.asarray(targets, dtype=np.int64), minlength=n).astype(float)

    # -- masking ----------------------------------------------------------

    def masked(self, hidden_authorship: Iterable[tuple[int, int]],
               drop_edges: Iterable[tuple[View, int, int, int]] = ()) -> "TemporalGraph":
        """Copy with authorship pairs removed and extra derived edges dropped."""
        hidden = set(hidden_authorship)
        return TemporalGraph(
            epoch=self.epoch, n_snapshots=self.n_snapshots,
            author_keys=self.author_keys, content_keys=self.content_keys,
            venue_keys=self.venue_keys, content_time=list(self.content_time),
            content_venue=self.content_venue, content_cites=self.content_cites,
            authorship=[p for p in self.authorship if p not in hidden],
            author_time=self.author_time, venue_time=self.venue_time,
            utilities=self.utilities,
            drop_edges=set(self.drop_edges) | set(drop_edges),
        )

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": GRAPH_FORMAT,
            "version": GRAPH_VERSION,
            "epoch": self.epoch,
            "n_snapshots": self.n_snapshots,
            "author_keys": self.author_keys,
            "content_keys": self.content_keys,
            "venue_keys": self.venue_keys,
            "author_time": [int(x) for x in self.author_time],
            "venue_time": [int(x) for x in self.venue_time],
            "content_time": [int(x) for x in self.content_time],
            "content_venue": self.content_venue,
            "content_cites": [list(cs) for cs in self.content_cites],
            "authorship": [list(p) for p in self.authorship],
            "utilities": [[c, k, v] for c, ks in self.utilities.items() for k, v in ks.items()],
            "drop_edges": sorted([v.value, t, s, d] for v, t, s, d in self.drop_edges),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TemporalGraph":
        if d.get("format") != GRAPH_FORMAT:
            raise SchemaError("not a serialized graph")
        if d.get("version") != GRAPH_VERSION:
            raise SchemaError(f"unsupported graph format version {d.get('version')}")
        utilities = defaultdict(dict)
        for c, k, v in d["utilities"]:
            utilities[c][k] = v
        return cls(
            epoch=d["epoch"], n_snapshots=d["n_snapshots"],
            author_keys=d["author_keys"], content_keys=d["content_keys"],
            venue_keys=d["venue_keys"], content_time=d["content_time"],
            content_venue=d["content_venue"],
            content_cites=[tuple(x) for x in d["content_cites"]],
            authorship=[tuple(p) for p in d["authorship"]],
            author_time=d["author_time"], venue_time=d["venue_time"],
            utilities=utilities,
            drop_edges=[tuple(x) for x in d["drop_edges"]],
        )

    def __eq__(self, other):
        if not isinstance(other, TemporalGraph):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self):
        return (f"TemporalGraph(authors={self.n_authors}, contents={self.n_contents}, "
                f"venues={self.n_venues}, snapshots={self.n_snapshots})")


# -- ingestion ------------------------------------------------------------

def read_jsonl(path) -> list[dict]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return records


def write_jsonl(path, records: Iterable[dict]):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def _require(record: dict, field: str, types, where: str):
    if field not in record:
        raise SchemaError(f"{where}: missing field {field!r}")
    value = record[field]
    if isinstance(value, bool) or not isinstance(value, types):
        raise SchemaError(f"{where}: field {field!r} has bad type {type(value).__name__}")
    return value


def ingest(nodes: Iterable[dict], edges: Iterable[dict], utilities: Iterable[dict] = (),
           epoch: int = 0, n_snapshots: int | None = None) -> TemporalGraph:
    """Validate JSONL-shaped records and build a :class:`TemporalGraph`.

    Node ids are remapped to dense indices per kind in order of first
    appearance; the original string keys are retained on the graph.
    """
    keys = {k: [] for k in Kind}
    times = {k: [] for k in Kind}
    seen = {}
    for i, rec in enumerate(nodes):
        where = f"node #{i}"
        nid = _require(rec, "id", str, where)
        kind = _require(rec, "kind", str, where)
        time = _require(rec, "time", int, where)
        try:
            kind = Kind(kind)
        except ValueError:
            raise SchemaError(f"{where}: unknown kind {kind!r}") from None
        if nid in seen:
            raise SchemaError(f"{where}: duplicate id {nid!r}")
        seen[nid] = (kind, len(keys[kind]))
        keys[kind].append(nid)
        times[kind].append(time)

    def resolve(key, expect: Kind, where: str) -> int:
        if key not in seen:
            raise DanglingReference(f"{where}: unknown node {key!r}")
        kind, idx = seen[key]
        if kind is not expect:
            raise SchemaError(f"{where}: {key!r} is a {kind.value}, expected {expect.value}")
        return idx

    n_c = len(keys[Kind.CONTENT])
    content_time = [t - epoch for t in times[Kind.CONTENT]]
    content_venue: list[int | None] = [None] * n_c
    cites = [set() for _ in range(n_c)]
    authorship = set()
    for i, rec in enumerate(edges):
        where = f"edge #{i}"
        src = _require(rec, "src", str, where)
        dst = _require(rec, "dst", str, where)
        rel = _require(rec, "rel", str, where)
        if rel == "writes":
            authorship.add((resolve(src, Kind.AUTHOR, where), resolve(dst, Kind.CONTENT, where)))
        elif rel == "cites":
            s, d = resolve(src, Kind.CONTENT, where), resolve(dst, Kind.CONTENT, where)
            if content_time[d] > content_time[s]:
                raise TimeViolation(f"{where}: {src!r} (t={content_time[s] + epoch}) cites "
                                    f"future content {dst!r} (t={content_time[d] + epoch})")
            if s != d:
                cites[s].add(d)
        elif rel == "published_at":
            c, u = resolve(src, Kind.CONTENT, where), resolve(dst, Kind.VENUE, where)
            if content_venue[c] is not None and content_venue[c] != u:
                raise SchemaError(f"{where}: content {src!r} has more than one venue")
            content_venue[c] = u
        else:
            raise SchemaError(f"{where}: unknown rel {rel!r}")

    utils = defaultdict(dict)
    for i, rec in enumerate(utilities):
        where = f"utility #{i}"
        c = resolve(_require(rec, "content", str, where), Kind.CONTENT, where)
        k = _require(rec, "k", int, where)
        v = _require(rec, "utility", (int, float), where)
        if k < 1 or v < 0 or not np.isfinite(v):
            raise SchemaError(f"{where}: need k >= 1 and a finite non-negative utility")
        utils[c][k] = float(v)
    for c, ks in utils.items():
        vals = [ks[k] for k in sorted(ks)]
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise SchemaError(f"utilities of {keys[Kind.CONTENT][c]!r} decrease with k")

    if n_snapshots is None:
        n_snapshots = max([t + 1 for t in content_time if t >= 0], default=0)
    return TemporalGraph(
        epoch=epoch, n_snapshots=n_snapshots,
        author_keys=keys[Kind.AUTHOR], content_keys=keys[Kind.CONTENT],
        venue_keys=keys[Kind.VENUE], content_time=content_time,
        content_venue=content_venue, content_cites=[tuple(c) for c in cites],
        authorship=authorship, author_time=times[Kind.AUTHOR],
        venue_time=times[Kind.VENUE], utilities=utils,
    )


def ingest_dir(data_dir, epoch: int = 0, n_snapshots: int | None = None) -> TemporalGraph:
    data_dir = Path(data_dir)
    util_path = data_dir / "utilities.jsonl"
    return ingest(read_jsonl(data_dir / "nodes.jsonl"), read_jsonl(data_dir / "edges.jsonl"),
                  read_jsonl(util_path) if util_path.exists() else (), epoch, n_snapshots)


def to_records(g: TemporalGraph) -> tuple[list[dict], list[dict], list[dict]]:
    """Inverse of :func:`ingest`: node, edge and utility records."""
    nodes = []
    for a, key in enumerate(g.author_keys):
        nodes.append({"id": key, "kind": "author", "time": int(g.author_time[a])})
    for c, key in enumerate(g.content_keys):
        nodes.append({"id": key, "kind": "content", "time": int(g.content_time[c]) + g.epoch})
    for u, key in enumerate(g.venue_keys):
        nodes.append({"id": key, "kind": "venue", "time": int(g.venue_time[u])})
    edges = [{"src": g.author_keys[a], "dst": g.content_keys[c], "rel": "writes"}
             for a, c in g.authorship]
    for c, cs in enumerate(g.content_cites):
        edges.extend({"src": g.content_keys[c], "dst": g.content_keys[d], "rel": "cites"} for d in cs)
    for c, u in enumerate(g.content_venue):
        if u is not None:
            edges.append({"src": g.content_keys[c], "dst": g.venue_keys[u], "rel": "published_at"})
    utils = [{"content": g.content_keys[c], "k": k, "utility": v}
             for c, ks in g.utilities.items() for k, v in ks.items()]
    return nodes, edges, utils


def save_graph(g: TemporalGraph, path):
    with open(path, "w") as fh:
        json.dump(g.to_dict(), fh)


def load_graph(path) -> TemporalGraph:
    try:
        with open(path) as fh:
            return TemporalGraph.from_dict(json.load(fh))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None


# -- queries ----------------------------------------------------------------

def active_author_set(g: TemporalGraph, t: int, min_new_contents: int = 6) -> set[int]:
    """Authors with at least ``min_new_contents`` new contents at ``t``.

    The default of 6 selects authors with over five new contents.
    """
    counts = defaultdict(int)
    for a, _ in g.snapshots[t].authorship:
        counts[a] += 1
    return {a for a, n in counts.items() if n >= min_new_contents}


def candidate_pool(g: TemporalGraph, view: View, t: int) -> list[NodeId]:
    """Permissible targets of ``view`` at ``t`` in ascending id order."""
    kind = view.target_kind
    return [NodeId(kind, int(i)) for i in pool_indices(g, view, t)]


def pool_indices(g: TemporalGraph, view: View, t: int) -> np.ndarray:
    if view is View.CONTENT_CITES_CONTENT:
        return g.contents_before(t)
    if view is View.AUTHOR_CITES_AUTHOR:
        first = g.author_first_active
    else:
        first = g.venue_first_active
    return np.array([i for i, f in enumerate(first) if f is not None and f <= t], dtype=np.int64)
