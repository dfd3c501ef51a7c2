"""Synthetic temporal networks generated from known strategy distributions.

Authors hold private distributions over composite strategies. Each content
is written by a co-author group whose consensus distribution is a
Dirichlet-weighted blend of the members' distributions. Every citation and
the venue are drawn by first sampling a strategy from that blend and then a
target from the strategy's candidate-normalised likelihood. Content utility
depends on the blend's most likely strategies.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .analysis import preference_order, spearman
from .errors import ConfigError, KeyMismatch
from .features import FIELD_DIM, EmbeddingStore, FieldStore, fallback_embed
from .graph import TemporalGraph, View, to_records, write_jsonl
from .strategies import Space, StrategyParams, ViewContext


@dataclass(frozen=True)
class SimConfig:
    n_authors: int = 50
    n_snapshots: int = 5
    contents_per_author: int = 4
    citations_per_content: int = 5
    group_size_probs: tuple = (0.3, 0.4, 0.3)   # P(group of 1, 2, 3, ...)
    drift: float = 0.0
    concentration: float = 0.1
    n_venues: int = 10
    n_topics: int = 5
    n_background: int = 300
    background_years: int = 3
    fresh_author_rate: float = 0.1
    topic_noise: float = 0.3
    utility_horizon: int = 3
    utility_noise: float = 1.0
    payoff_citation: tuple | None = None
    payoff_venue: tuple | None = None
    fixed_citation_strategy: int | None = None
    fixed_venue_strategy: int | None = None
    embedding_dim: int = 16
    epoch: int = 2000
    seed: int = 0

    def problems(self) -> list[str]:
        out = []
        for name in ("n_authors", "n_snapshots", "contents_per_author", "citations_per_content",
                     "n_venues", "n_topics", "background_years", "utility_horizon", "embedding_dim"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be a positive integer")
        if self.n_background < self.n_venues:
            out.append("n_background must be at least n_venues (every venue is seeded)")
        probs = np.asarray(self.group_size_probs, dtype=float)
        if probs.ndim != 1 or len(probs) == 0 or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
            out.append("group_size_probs must be a probability vector")
        if not 0.0 <= self.drift <= 1.0:
            out.append("drift must lie in [0, 1]")
        if self.concentration <= 0:
            out.append("concentration must be positive")
        if not 0.0 <= self.fresh_author_rate < 1.0:
            out.append("fresh_author_rate must lie in [0, 1)")
        if self.topic_noise < 0 or self.utility_noise < 0:
            out.append("noise scales must be non-negative")
        for name, space in (("payoff_citation", Space.CITATION), ("payoff_venue", Space.VENUE)):
            table = getattr(self, name)
            if table is not None and len(table) != space.m:
                out.append(f"{name} needs {space.m} entries")
        for name, space in (("fixed_citation_strategy", Space.CITATION), ("fixed_venue_strategy", Space.VENUE)):
            code = getattr(self, name)
            if code is not None and not 0 <= code < space.m:
                out.append(f"{name} must lie in [0, {space.m})")
        return out

    def validate(self) -> "SimConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self


@dataclass
class GroundTruth:
    dist: dict                      # space value -> {(a, t): vector}
    r: dict                         # (a, c) -> share
    payoff: dict                    # space value -> (m,) mean utility per strategy
    spread: float

    def records(self, g: TemporalGraph) -> list[dict]:
        return [{"author": g.author_keys[a], "t": t + g.epoch, "space": space,
                 "dist": [float(x) for x in vec]}
                for space in sorted(self.dist) for (a, t), vec in sorted(self.dist[space].items())]


@dataclass
class SimResult:
    graph: TemporalGraph
    embeddings: EmbeddingStore
    fields: FieldStore
    truth: GroundTruth
    config: SimConfig = field(default_factory=SimConfig)


class _Builder:
    """Growing lists of contents from which partial graphs are rebuilt."""

    def __init__(self, cfg: SimConfig, n_venues: int):
        self.cfg = cfg
        self.n_venues = n_venues
        self.time, self.venue, self.cites, self.authors, self.fields = [], [], [], [], []

    def add(self, t, authors, venue, cites, field_vec) -> int:
        self.time.append(t)
        self.venue.append(venue)
        self.cites.append(tuple(cites))
        self.authors.append(tuple(authors))
        self.fields.append(field_vec)
        return len(self.time) - 1

    def graph(self, utilities=None) -> TemporalGraph:
        cfg = self.cfg
        return TemporalGraph(
            epoch=cfg.epoch, n_snapshots=cfg.n_snapshots,
            author_keys=[f"a{i}" for i in range(cfg.n_authors)],
            content_keys=[f"c{i}" for i in range(len(self.time))],
            venue_keys=[f"v{i}" for i in range(self.n_venues)],
            content_time=self.time, content_venue=self.venue, content_cites=self.cites,
            authorship=[(a, c) for c, auth in enumerate(self.authors) for a in auth],
            author_time=[cfg.epoch] * cfg.n_authors, venue_time=[cfg.epoch] * self.n_venues,
            utilities=utilities,
        )

    def field_store(self) -> FieldStore:
        return FieldStore(np.array(self.fields).reshape(-1, FIELD_DIM))


def sample_targets(ctx: ViewContext, source, code: int, n: int, rng) -> np.ndarray:
    """Draw ``n`` targets (node indices) of one composite strategy."""
    probs = ctx.composite_probabilities(source)[code]
    return ctx.pool[rng.choice(len(ctx.pool), size=n, p=probs)]


def _topic_field(rng, centers, topic, noise):
    v = centers[topic] + noise * rng.standard_normal(FIELD_DIM) / np.sqrt(FIELD_DIM)
    return v / np.linalg.norm(v)


def _initial_dist(rng, space: Space, cfg: SimConfig):
    fixed = cfg.fixed_citation_strategy if space is Space.CITATION else cfg.fixed_venue_strategy
    if fixed is not None:
        d = np.zeros(space.m)
        d[fixed] = 1.0
        return d
    return rng.dirichlet(np.full(space.m, cfg.concentration))


def simulate(cfg: SimConfig, sparams: StrategyParams | None = None) -> SimResult:
    cfg.validate()
    sparams = sparams or StrategyParams()
    rng = np.random.default_rng(cfg.seed)
    n_a = cfg.n_authors

    payoff = {}
    for space, given in ((Space.CITATION, cfg.payoff_citation), (Space.VENUE, cfg.payoff_venue)):
        payoff[space.value] = (np.asarray(given, dtype=float) if given is not None
                               else rng.uniform(1.0, 10.0, size=space.m))

    centers = rng.standard_normal((cfg.n_topics, FIELD_DIM))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    author_topic = rng.integers(cfg.n_topics, size=n_a)
    entry = np.zeros(n_a, dtype=np.int64)
    if cfg.n_snapshots > 1:
        fresh = rng.random(n_a) < cfg.fresh_author_rate
        entry[fresh] = rng.integers(1, cfg.n_snapshots, size=int(fresh.sum()))
    dist = {space.value: np.array([_initial_dist(rng, space, cfg) for _ in range(n_a)]) for space in Space}

    b = _Builder(cfg, cfg.n_venues)
    veterans = np.flatnonzero(entry == 0)
    bg_times = np.sort(rng.integers(-cfg.background_years, 0, size=cfg.n_background))
    indeg = []
    for i, t in enumerate(bg_times):
        k = 1 + int(rng.random() < 0.5)
        authors = sorted(set(int(a) for a in rng.choice(veterans, size=k)))
        venue = i if i < cfg.n_venues else int(rng.integers(cfg.n_venues))
        earlier = [c for c in range(i) if bg_times[c] < t]
        cites = []
        if earlier:
            w = np.array([indeg[c] + 1.0 for c in earlier])
            n_cite = min(3, len(earlier))
            cites = [earlier[j] for j in rng.choice(len(earlier), size=n_cite, replace=False, p=w / w.sum())]
            for c in cites:
                indeg[c] += 1
        indeg.append(0)
        b.add(int(t), authors, venue, cites, _topic_field(rng, centers, author_topic[authors[0]], cfg.topic_noise))

    collab = np.zeros((n_a, n_a))
    sizes = np.arange(1, len(cfg.group_size_probs) + 1)
    truth_dist = {space.value: {} for space in Space}
    r_true = {}
    utilities = {}
    for t in range(cfg.n_snapshots):
        g_now = b.graph()
        f_now = b.field_store()
        ctx = {view: ViewContext(g_now, f_now, view, t, sparams)
               for view in (View.CONTENT_CITES_CONTENT, View.CONTENT_AT_VENUE)}
        active = np.flatnonzero(entry <= t)
        written = set()
        for lead in active:
            for _ in range(cfg.contents_per_author):
                size = min(int(rng.choice(sizes, p=cfg.group_size_probs)), len(active))
                others = active[active != lead]
                w = collab[lead, others] + 1.0
                co = rng.choice(others, size=size - 1, replace=False, p=w / w.sum()) if size > 1 else []
                group = sorted([int(lead)] + [int(x) for x in co])
                share = rng.dirichlet(np.ones(len(group)))
                blend = {s: share @ dist[s][group] for s in dist}
                field_vec = _topic_field(rng, centers, author_topic[lead], cfg.topic_noise)

                cc = ctx[View.CONTENT_CITES_CONTENT]
                cites = set()
                if len(cc.pool):
                    probs = cc.composite_probabilities(cc.source_from(group, field_vec, t))
                    for _ in range(cfg.citations_per_content):
                        code = rng.choice(Space.CITATION.m, p=blend["citation"])
                        cites.add(int(cc.pool[rng.choice(len(cc.pool), p=probs[code])]))
                cu = ctx[View.CONTENT_AT_VENUE]
                probs = cu.composite_probabilities(cu.source_from(group, field_vec, t))
                code = rng.choice(Space.VENUE.m, p=blend["venue"])
                venue = int(cu.pool[rng.choice(len(cu.pool), p=probs[code])])

                c = b.add(t, group, venue, sorted(cites), field_vec)
                mean = 0.5 * (payoff["citation"][int(np.argmax(blend["citation"]))]
                              + payoff["venue"][int(np.argmax(blend["venue"]))])
                base = max(0.0, float(rng.normal(mean, cfg.utility_noise)))
                utilities[c] = {k: base * k for k in range(1, cfg.utility_horizon + 1)}
                for a, s in zip(group, share):
                    r_true[(a, c)] = float(s)
                    written.add(a)
                for x in group:
                    for y in group:
                        if x != y:
                            collab[x, y] += 1
        for s in dist:
            for a in sorted(written):
                truth_dist[s][(a, t)] = dist[s][a].copy()
        if cfg.drift > 0:
            for space in Space:
                noise = rng.dirichlet(np.full(space.m, cfg.concentration), size=n_a)
                dist[space.value] = (1 - cfg.drift) * dist[space.value] + cfg.drift * noise

    g = b.graph(utilities)
    fields = b.field_store()
    emb = fallback_embed(g, cfg.embedding_dim, cfg.seed)
    return SimResult(g, emb, fields, GroundTruth(truth_dist, r_true, payoff, cfg.utility_noise), cfg)


def write_simulation(result: SimResult, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    g = result.graph
    nodes, edges, utils = to_records(g)
    paths = {name: out_dir / f"{name}.jsonl"
             for name in ("nodes", "edges", "utilities", "embeddings", "fields", "ground_truth")}
    write_jsonl(paths["nodes"], nodes)
    write_jsonl(paths["edges"], edges)
    write_jsonl(paths["utilities"], utils)
    write_jsonl(paths["embeddings"], result.embeddings.to_records(g))
    write_jsonl(paths["fields"], result.fields.to_records(g))
    write_jsonl(paths["ground_truth"], result.truth.records(g))
    with open(out_dir / "sim_config.json", "w") as fh:
        json.dump(asdict(result.config), fh, sort_keys=True)
    return paths


def load_truth(path, g: TemporalGraph) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                a = g.node("author", rec["author"]).index
                out.setdefault(rec["space"], {})[(a, rec["t"] - g.epoch)] = np.array(rec["dist"])
    return out


# -- recovery metrics -------------------------------------------------------------

def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def recovery_report(truth: dict, fitted: dict) -> dict:
    """TV distance and preference-order Spearman per (space, author, t).

    ``truth`` and ``fitted`` map space value -> {(a, t): distribution} and
    must cover the same keys.
    """
    if set(truth) != set(fitted):
        raise KeyMismatch(f"spaces differ: {sorted(truth)} vs {sorted(fitted)}")
    rows = []
    for space in sorted(truth):
        if set(truth[space]) != set(fitted[space]):
            missing = set(truth[space]) ^ set(fitted[space])
            raise KeyMismatch(f"{space}: {len(missing)} author/time keys differ")
        for key in sorted(truth[space]):
            p, q = truth[space][key], fitted[space][key]
            rows.append({"space": space, "author": key[0], "t": key[1],
                         "tv": total_variation(p, q),
                         "spearman": spearman(preference_order(p), preference_order(q))})
    summary = {}
    for metric in ("tv", "spearman"):
        vals = np.array([r[metric] for r in rows])
        summary[metric] = {"mean": float(vals.mean()), "q25": float(np.quantile(vals, 0.25)),
                           "median": float(np.median(vals)), "q75": float(np.quantile(vals, 0.75))}
    return {"rows": rows, "summary": summary}


def bootstrap_ci(values, n_boot: int = 2000, level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval of the mean."""
    values = np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    means = values[rng.integers(len(values), size=(n_boot, len(values)))].mean(axis=1)
    lo = (1 - level) / 2
    return float(np.quantile(means, lo)), float(np.quantile(means, 1 - lo))
