import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import two_author_graph
from stratnet.errors import DanglingReference, SchemaError, TimeViolation
from stratnet.graph import (
    Kind, NodeId, View, active_author_set, candidate_pool, ingest, ingest_dir, load_graph,
    pool_indices, save_graph, to_records, write_jsonl,
)


def _random_records(rng, n_authors=6, n_contents=25, n_venues=3, years=(1998, 2003)):
    nodes = [{"id": f"a{i}", "kind": "author", "time": years[0]} for i in range(n_authors)]
    times = sorted(int(x) for x in rng.integers(years[0], years[1] + 1, size=n_contents))
    nodes += [{"id": f"c{i}", "kind": "content", "time": t} for i, t in enumerate(times)]
    nodes += [{"id": f"v{i}", "kind": "venue", "time": years[0]} for i in range(n_venues)]
    edges, utils = [], []
    for i, t in enumerate(times):
        for a in sorted(set(int(x) for x in rng.integers(n_authors, size=int(rng.integers(1, 3))))):
            edges.append({"src": f"a{a}", "dst": f"c{i}", "rel": "writes"})
        earlier = [j for j in range(i) if times[j] <= t]
        for j in sorted(set(int(x) for x in rng.choice(earlier, size=min(2, len(earlier)))) if earlier else set()):
            edges.append({"src": f"c{i}", "dst": f"c{j}", "rel": "cites"})
        if rng.random() < 0.9:
            edges.append({"src": f"c{i}", "dst": f"v{int(rng.integers(n_venues))}", "rel": "published_at"})
        utils += [{"content": f"c{i}", "k": k, "utility": float(k * (i % 4))} for k in (1, 2)]
    return nodes, edges, utils


def test_coauthor_projection():
    g = two_author_graph()
    assert g.n_snapshots == 1
    assert len(g.snapshots[0].authorship) == 2
    assert g.edges(View.CONTENT_CITES_CONTENT, 0) == ((1, 0),)
    aa = g.edges(View.AUTHOR_CITES_AUTHOR, 0)
    assert sorted(aa) == [(0, 2), (1, 2)]
    assert sorted(g.edges(View.AUTHOR_AT_VENUE, 0)) == [(0, 0), (1, 0)]
    assert g.background == (0,)


def test_empty_edge_stream_gives_isolated_nodes():
    nodes = [{"id": "a", "kind": "author", "time": 2000},
             {"id": "c", "kind": "content", "time": 2000},
             {"id": "u", "kind": "venue", "time": 2000}]
    g = ingest(nodes, [], epoch=2000)
    assert g.n_authors == g.n_contents == g.n_venues == 1
    assert all(g.edges(v, 0) == () for v in View)
    assert g.authorship == ()


def test_future_citation_rejected():
    nodes = [{"id": "early", "kind": "content", "time": 3},
             {"id": "late", "kind": "content", "time": 5}]
    with pytest.raises(TimeViolation):
        ingest(nodes, [{"src": "early", "dst": "late", "rel": "cites"}])


def test_schema_and_reference_errors():
    nodes = [{"id": "c", "kind": "content", "time": 0}]
    with pytest.raises(DanglingReference):
        ingest(nodes, [{"src": "c", "dst": "ghost", "rel": "cites"}])
    with pytest.raises(SchemaError):
        ingest([{"id": "c", "kind": "paper", "time": 0}], [])
    with pytest.raises(SchemaError):
        ingest([{"id": "c", "kind": "content", "time": "2000"}], [])
    with pytest.raises(SchemaError):
        ingest(nodes + nodes, [])
    with pytest.raises(SchemaError):
        ingest(nodes, [{"src": "c", "dst": "c", "rel": "likes"}])
    with pytest.raises(SchemaError):
        ingest(nodes, [], [{"content": "c", "k": 1, "utility": 3.0}, {"content": "c", "k": 2, "utility": 1.0}])


def test_second_venue_rejected():
    nodes = [{"id": "c", "kind": "content", "time": 0},
             {"id": "u1", "kind": "venue", "time": 0}, {"id": "u2", "kind": "venue", "time": 0}]
    edges = [{"src": "c", "dst": "u1", "rel": "published_at"}, {"src": "c", "dst": "u2", "rel": "published_at"}]
    with pytest.raises(SchemaError):
        ingest(nodes, edges)


def test_active_author_threshold():
    nodes = [{"id": "six", "kind": "author", "time": 0}, {"id": "five", "kind": "author", "time": 0}]
    nodes += [{"id": f"c{i}", "kind": "content", "time": 0} for i in range(11)]
    edges = [{"src": "six", "dst": f"c{i}", "rel": "writes"} for i in range(6)]
    edges += [{"src": "five", "dst": f"c{i}", "rel": "writes"} for i in range(6, 11)]
    g = ingest(nodes, edges)
    assert active_author_set(g, 0) == {0}
    assert active_author_set(g, 0, 5) == {0, 1}


def test_candidate_pools():
    rng = np.random.default_rng(4)
    nodes, edges, utils = _random_records(rng)
    g = ingest(nodes, edges, utils, epoch=2000)
    background = [NodeId(Kind.CONTENT, c) for c in g.background]
    assert candidate_pool(g, View.CONTENT_CITES_CONTENT, 0) == background
    for t in range(g.n_snapshots):
        venues = {g.content_venue[c] for c in g.contents_up_to(t) if g.content_venue[c] is not None}
        assert set(pool_indices(g, View.CONTENT_AT_VENUE, t).tolist()) == venues
    for view in View:
        for t in range(1, g.n_snapshots):
            assert set(pool_indices(g, view, t - 1).tolist()) <= set(pool_indices(g, view, t).tolist())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_projection_is_witnessed(seed):
    g = ingest(*_random_records(np.random.default_rng(seed)), epoch=2000)
    for t in range(g.n_snapshots):
        for a, b in g.edges(View.AUTHOR_CITES_AUTHOR, t):
            assert any(b in g.content_authors[d]
                       for c in g.author_contents_at(a, t) for d in g.content_cites[c])
        for a, u in g.edges(View.AUTHOR_AT_VENUE, t):
            assert any(g.content_venue[c] == u for c in g.author_contents_at(a, t))
        snap = g.snapshots[t]
        for a, c in snap.authorship:
            assert a in snap.active_authors and c in snap.new_contents


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_round_trip_through_records(seed):
    g = ingest(*_random_records(np.random.default_rng(seed)), epoch=2000)
    assert ingest(*to_records(g), epoch=2000) == g


def test_round_trip_through_files(tmp_path):
    g = ingest(*_random_records(np.random.default_rng(9)), epoch=2000)
    save_graph(g, tmp_path / "g.json")
    assert load_graph(tmp_path / "g.json") == g
    nodes, edges, utils = to_records(g)
    write_jsonl(tmp_path / "nodes.jsonl", nodes)
    write_jsonl(tmp_path / "edges.jsonl", edges)
    write_jsonl(tmp_path / "utilities.jsonl", utils)
    assert ingest_dir(tmp_path, epoch=2000) == g


def test_masking_hides_authorship_and_dropped_edges():
    g = two_author_graph()
    m = g.masked([(0, 1)], [(View.AUTHOR_CITES_AUTHOR, 0, 1, 2)])
    assert list(m.content_authors[1]) == [1]
    assert m.edges(View.AUTHOR_CITES_AUTHOR, 0) == ()
    assert m.edges(View.AUTHOR_AT_VENUE, 0) == ((1, 0),)
    # indegree statistics follow the masked edges
    assert m.indegree_before(View.AUTHOR_CITES_AUTHOR, 1).sum() == 0
    assert g.indegree_before(View.AUTHOR_CITES_AUTHOR, 1)[2] == 2
