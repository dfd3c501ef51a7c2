"""Builders shared by several test modules."""

import numpy as np

from stratnet import ddan
from stratnet.graph import ingest, View
from stratnet.strategies import LikelihoodTable


def tiny_instance(rng, n_authors=None, n_contents=None, F=None, hd=None, m=None, K=None):
    """Random snapshot with at most 3 authors/contents, F <= 4, F' <= 3, m <= 4."""
    n_a = n_authors or int(rng.integers(1, 4))
    n_c = n_contents or int(rng.integers(1, 4))
    F = F or int(rng.integers(2, 5))
    hd = hd or int(rng.integers(1, 4))
    m = m or int(rng.integers(2, 5))
    K = K or int(rng.integers(1, 3))
    pairs = {(int(rng.integers(n_a)), c) for c in range(n_c)}
    for a in range(n_a):
        if not any(p[0] == a for p in pairs):
            pairs.add((a, int(rng.integers(n_c))))
    for _ in range(2):
        pairs.add((int(rng.integers(n_a)), int(rng.integers(n_c))))
    pairs = sorted(pairs)
    tables = {}
    for view, n_src in ((View.CONTENT_CITES_CONTENT, n_c), (View.AUTHOR_CITES_AUTHOR, n_a)):
        n_e = int(rng.integers(1, 5))
        src = rng.integers(n_src, size=n_e)
        probs = rng.uniform(0.01, 1.0, size=(n_e, m))
        edges = np.stack([src, np.arange(n_e)], axis=1)
        tables[view] = (LikelihoodTable(view, 0, edges, probs), src)
    sd = ddan.SpaceData(None, rng.dirichlet(np.ones(m), n_a), rng.dirichlet(np.ones(m), n_a),
                        rng.dirichlet(np.ones(m), n_c), tables)
    data = ddan.SnapshotData(
        t=0, authors=np.arange(n_a), contents=np.arange(n_c),
        pair_author=np.array([p[0] for p in pairs]), pair_content=np.array([p[1] for p in pairs]),
        h_author=rng.normal(size=(n_a, F)), h_prev=rng.normal(size=(n_a, F)),
        h_content=rng.normal(size=(n_c, F)), spaces={"citation": sd},
    )
    params = {"citation": {}}
    for head in ddan.HEADS:
        params["citation"][f"{head}_W"] = rng.normal(size=(hd, F))
        params["citation"][f"{head}_phi"] = rng.normal(size=2 * hd)
    cfg = ddan.TrainConfig(unroll_steps=K, hidden_dim=hd)
    return data, params, cfg


def max_relative_error(analytic, numeric, floor=1e-4):
    worst = 0.0
    for s in analytic:
        for k in analytic[s]:
            a, n = analytic[s][k], numeric[s][k]
            err = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
            worst = max(worst, float(err.max()))
    return worst


def two_author_graph():
    """Two co-authors writing one content that cites a background paper."""
    nodes = [
        {"id": "alice", "kind": "author", "time": 2000},
        {"id": "bob", "kind": "author", "time": 2000},
        {"id": "carol", "kind": "author", "time": 1999},
        {"id": "old", "kind": "content", "time": 1999},
        {"id": "new", "kind": "content", "time": 2000},
        {"id": "kdd", "kind": "venue", "time": 1999},
    ]
    edges = [
        {"src": "carol", "dst": "old", "rel": "writes"},
        {"src": "alice", "dst": "new", "rel": "writes"},
        {"src": "bob", "dst": "new", "rel": "writes"},
        {"src": "new", "dst": "old", "rel": "cites"},
        {"src": "new", "dst": "kdd", "rel": "published_at"},
        {"src": "old", "dst": "kdd", "rel": "published_at"},
    ]
    return ingest(nodes, edges, [], epoch=2000)


def random_citation_context(rng, n_background, params=None):
    """Citation view at snapshot 0 over ``n_background`` earlier contents.

    Background contents get random times, citations (so indegrees vary) and
    field vectors; about one in ten has a zero (unknown) field.
    """
    from stratnet.features import FieldStore
    from stratnet.strategies import StrategyParams, ViewContext

    times = np.sort(rng.integers(1990, 2000, size=n_background))
    nodes = [{"id": "w", "kind": "author", "time": 1990}, {"id": "src", "kind": "content", "time": 2000}]
    nodes += [{"id": f"b{i}", "kind": "content", "time": int(t)} for i, t in enumerate(times)]
    edges = [{"src": "w", "dst": "src", "rel": "writes"}]
    for i, t in enumerate(times):
        earlier = np.flatnonzero(times < t)
        if len(earlier):
            for j in set(rng.choice(earlier, size=min(3, len(earlier))).tolist()):
                edges.append({"src": f"b{i}", "dst": f"b{j}", "rel": "cites"})
    g = ingest(nodes, edges, epoch=2000)
    vecs = rng.normal(size=(g.n_contents, 5))
    vecs[rng.random(g.n_contents) < 0.1] = 0.0
    ctx = ViewContext(g, FieldStore(vecs), View.CONTENT_CITES_CONTENT, 0, params or StrategyParams())
    return g, ctx


def random_source(rng, ctx, dim=5):
    from stratnet.strategies import Source

    field = rng.normal(size=dim)
    field /= np.linalg.norm(field)
    pool = ctx.pool.tolist()
    familiar = frozenset(x for x in pool if rng.random() < 0.3)
    return Source(0, field, familiar)
