import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stratnet import ddan
from stratnet.errors import NoPositives
from stratnet.evaluation import (
    EvalSettings, ap_for, average_precision, build_folds, evaluate, fit_simplex_logistic, fold_mask,
    label_sets, rank, score_edge,
)
from stratnet.graph import View, ingest


def _brute_ap(labels):
    """Precision at k summed at each positive, by explicit prefix counting."""
    labels = list(labels)
    total = 0.0
    for k in range(1, len(labels) + 1):
        if labels[k - 1]:
            total += sum(labels[:k]) / k
    return total / sum(labels)


def test_average_precision_examples():
    assert average_precision([1, 0, 1, 0]) == pytest.approx(0.8333333333333334, abs=1e-15)
    assert average_precision([1, 1, 0, 0, 0]) == 1.0
    for n in (1, 4, 9):
        assert average_precision([0] * n + [1]) == pytest.approx(1 / (n + 1))
    with pytest.raises(NoPositives):
        average_precision([0, 0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=50).filter(any))
def test_average_precision_matches_brute_force(labels):
    assert average_precision(labels) == pytest.approx(_brute_ap(labels), rel=0, abs=1e-12)


def test_rank_breaks_ties_by_id():
    ids = [7, 3, 5]
    assert rank(ids, [0.5, 0.5, 0.9]).tolist() == [2, 1, 0]


def test_score_edge_examples():
    assert score_edge([1.0], [[0.3, 0.7]]).tolist() == [0.3, 0.7]
    assert score_edge([0.5, 0.5], [[0.8], [0.2]])[0] == pytest.approx(0.5)
    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.ones(6), size=4)
    assert score_edge(rng.dirichlet(np.ones(4)), probs).sum() == pytest.approx(1.0)


def test_ap_invariant_to_negative_relabelling():
    rng = np.random.default_rng(1)
    for _ in range(50):
        scores = rng.random(12)
        ids = np.arange(12)
        pos = set(rng.choice(12, size=3, replace=False).tolist())
        negs = [i for i in ids if i not in pos]
        relabel = dict(zip(negs, rng.permutation(negs) + 100))
        ids2 = [relabel.get(int(i), int(i)) for i in ids]
        assert ap_for(ids, scores, pos) == ap_for(ids2, scores, pos)


def _six_content_graph():
    nodes = [{"id": "a", "kind": "author", "time": 0}, {"id": "b", "kind": "author", "time": 0},
             {"id": "old", "kind": "content", "time": -1}, {"id": "u", "kind": "venue", "time": -1}]
    nodes += [{"id": f"c{i}", "kind": "content", "time": 0} for i in range(6)]
    edges = [{"src": "b", "dst": "old", "rel": "writes"}]
    edges += [{"src": "a", "dst": f"c{i}", "rel": "writes"} for i in range(6)]
    edges += [{"src": f"c{i}", "dst": "old", "rel": "cites"} for i in range(3)]
    return ingest(nodes, edges)


def test_fold_sizes_and_seeding():
    g = _six_content_graph()
    folds = build_folds(g, 0, seed=3)
    assert [len(f.hidden) for f in folds] == [2, 1, 1, 1, 1]
    assert sorted(c for f in folds for c in f.hidden) == sorted(g.author_contents_at(0, 0))
    again = build_folds(g, 0, seed=3)
    assert [f.hidden for f in folds] == [f.hidden for f in again]
    for f in folds:
        for space in f.positives:
            assert not set(f.positives[space]) & set(f.negatives[space])


def test_fold_mask_hides_authorship_and_author_edges():
    g = _six_content_graph()
    folds = build_folds(g, 0, seed=0)
    target = next(f for f in folds if any(g.content_cites[c] for c in f.hidden))
    hidden, drops = fold_mask([target])
    masked = g.masked(hidden, drops)
    assert (View.AUTHOR_CITES_AUTHOR, 0, 0, 1) in drops
    assert (0, 1) not in masked.edges(View.AUTHOR_CITES_AUTHOR, 0)
    for c in target.hidden:
        assert 0 not in masked.content_authors[c]


def test_label_sets_use_coauthor_history():
    nodes = [{"id": x, "kind": "author", "time": 0} for x in ("a", "b", "z", "y")]
    nodes += [{"id": n, "kind": "content", "time": t} for n, t in
              (("pz", -1), ("py", -1), ("hist", -1), ("new", 0))]
    nodes += [{"id": "u1", "kind": "venue", "time": -1}, {"id": "u2", "kind": "venue", "time": -1}]
    edges = [{"src": "z", "dst": "pz", "rel": "writes"}, {"src": "y", "dst": "py", "rel": "writes"},
             {"src": "b", "dst": "hist", "rel": "writes"}, {"src": "hist", "dst": "py", "rel": "cites"},
             {"src": "hist", "dst": "u2", "rel": "published_at"},
             {"src": "a", "dst": "new", "rel": "writes"}, {"src": "b", "dst": "new", "rel": "writes"},
             {"src": "new", "dst": "pz", "rel": "cites"}, {"src": "new", "dst": "u1", "rel": "published_at"}]
    g = ingest(nodes, edges)
    pos, neg = label_sets(g, 0, 0, [3])
    assert pos == {"citation": [2], "venue": [0]}
    assert neg == {"citation": [3], "venue": [1]}


def test_simplex_logistic_examples():
    rng = np.random.default_rng(0)
    x = rng.random((20, 1))
    assert fit_simplex_logistic(x, rng.integers(0, 2, 20)).tolist() == [1.0]
    y = np.array([1] * 10 + [0] * 10)
    x = rng.random((20, 4)) * 0.2
    x[:, 2] = y
    iterates = []
    w = fit_simplex_logistic(x, y, callback=lambda w: iterates.append(w.copy()))
    assert w[2] > 0.9
    assert len(iterates) == 500
    assert all(it.min() >= 0 and abs(it.sum() - 1) < 1e-9 for it in iterates)
    same = np.tile(rng.random((20, 1)), (1, 3))
    assert np.allclose(fit_simplex_logistic(same, y), 1 / 3)


@pytest.fixture(scope="module")
def trained(small_sim):
    cfg = ddan.TrainConfig(max_epochs=2)
    return ddan.train(small_sim.graph, small_sim.embeddings, small_sim.fields, cfg), cfg


def test_oracle_scorer_gives_perfect_map(small_sim, trained):
    state, cfg = trained
    oracle = lambda fold, space, ids, probs: np.isin(ids, fold.positives[space]).astype(float)
    result = evaluate(small_sim.graph, small_sim.embeddings, small_sim.fields, state, cfg, scorer=oracle)
    assert len(result.rows) > 20
    assert all(v == 1.0 for v in result.map().values())


def test_random_scorer_matches_monte_carlo(small_sim, trained):
    state, cfg = trained
    rng = np.random.default_rng(0)
    shapes = []

    def scorer(fold, space, ids, probs):
        shapes.append((len(ids), len(set(fold.positives[space]) & set(ids.tolist()))))
        return rng.random(len(ids))

    result = evaluate(small_sim.graph, small_sim.embeddings, small_sim.fields, state, cfg, scorer=scorer)
    mc = np.random.default_rng(1)
    expected = []
    for n, p in shapes:
        labels = np.array([1] * p + [0] * (n - p))
        expected.append(np.mean([average_precision(mc.permutation(labels)) for _ in range(300)]))
    harness = np.mean([r["ap"] for r in result.rows])
    assert abs(harness - np.mean(expected)) < 0.02


def test_model_and_baseline_rows(small_sim, trained):
    state, cfg = trained
    settings_ = EvalSettings(lr_iterations=50)
    result = evaluate(small_sim.graph, small_sim.embeddings, small_sim.fields, state, cfg,
                      settings=settings_, snapshots=[1])
    methods = {r["method"] for r in result.rows}
    assert methods == {"ddan", "lr"}
    assert all(0 < r["ap"] <= 1 for r in result.rows)
    for (method, space), v in result.overall().items():
        assert 0 < v <= 1
