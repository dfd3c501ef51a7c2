"""Pure and composite strategies and candidate-normalised edge likelihoods.

A composite strategy picks one variant per aspect. Its integer code has the
popularity bit as the least significant bit, so citation strategy 4 is
(popularity 0, field 0, familiarity 1, time 0). The likelihood of an edge
under a composite strategy is the product of per-aspect weights, normalised
over the candidate targets.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np
from scipy import stats

from .errors import EmptyCandidates, InvalidParameter, TimeViolation
from .features import FieldStore
from .graph import Kind, TemporalGraph, View, pool_indices


class Aspect(IntEnum):
    POPULARITY = 0
    FIELD = 1
    FAMILIARITY = 2
    TIME = 3


PURE_MEANING = {
    (Aspect.POPULARITY, 0): "preferential attachment",
    (Aspect.POPULARITY, 1): "uniform attachment",
    (Aspect.FIELD, 0): "preferring similar fields",
    (Aspect.FIELD, 1): "preferring distinct fields",
    (Aspect.FAMILIARITY, 0): "preferring familiar nodes",
    (Aspect.FAMILIARITY, 1): "preferring unfamiliar nodes",
    (Aspect.TIME, 0): "preferring small time gaps",
    (Aspect.TIME, 1): "choosing random time gaps",
}


@dataclass(frozen=True)
class PureStrategy:
    aspect: Aspect
    variant: int

    @property
    def name(self) -> str:
        return f"s_{self.aspect + 1},{self.variant}"

    @property
    def meaning(self) -> str:
        return PURE_MEANING[(self.aspect, self.variant)]


@dataclass(frozen=True, order=True)
class CompositeStrategy:
    code: int
    n_aspects: int

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.code >> i) & 1 for i in range(self.n_aspects))

    @property
    def label(self) -> str:
        """Variant bits in aspect order (popularity first)."""
        return "".join(str(b) for b in self.bits)

    @property
    def pure(self) -> tuple[PureStrategy, ...]:
        return tuple(PureStrategy(Aspect(i), b) for i, b in enumerate(self.bits))


class Space(str, Enum):
    CITATION = "citation"
    VENUE = "venue"

    @property
    def n_aspects(self) -> int:
        return 4 if self is Space.CITATION else 3

    @property
    def m(self) -> int:
        return 2 ** self.n_aspects

    @property
    def views(self) -> tuple[View, View]:
        if self is Space.CITATION:
            return (View.CONTENT_CITES_CONTENT, View.AUTHOR_CITES_AUTHOR)
        return (View.CONTENT_AT_VENUE, View.AUTHOR_AT_VENUE)


def space_of(view: View) -> Space:
    return Space.CITATION if view.is_citation else Space.VENUE


@dataclass(frozen=True)
class StrategySpace:
    view: View
    members: tuple[CompositeStrategy, ...]

    @property
    def m(self) -> int:
        return len(self.members)

    @classmethod
    def for_view(cls, view: View) -> "StrategySpace":
        n = space_of(view).n_aspects
        return cls(view, tuple(CompositeStrategy(code, n) for code in range(2 ** n)))


def strategy_bits(n_aspects: int) -> np.ndarray:
    """(2**n, n) matrix of variant bits, row = composite code."""
    codes = np.arange(2 ** n_aspects)
    return (codes[:, None] >> np.arange(n_aspects)[None, :]) & 1


@dataclass(frozen=True)
class StrategyParams:
    familiarity_p: float = 0.9
    beta_alpha: float = 10.0
    beta_beta: float = 1.0
    smoothing: float = 1.0
    negative_samples: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.5 < self.familiarity_p < 1.0:
            raise InvalidParameter(f"familiarity p must lie in (0.5, 1), got {self.familiarity_p}")
        if self.beta_alpha <= 0 or self.beta_beta <= 0:
            raise InvalidParameter("Beta parameters must be positive")
        if self.smoothing < 0:
            raise InvalidParameter("popularity smoothing must be non-negative")


# -- per-aspect weights (scalar reference forms) ----------------------------

def popularity_weight(indegree: float, variant: int, smoothing: float = 1.0) -> float:
    return float(indegree) + smoothing if variant == 0 else 1.0


def field_weight(source_f: np.ndarray, target_f: np.ndarray, variant: int) -> float:
    if not np.any(source_f) or not np.any(target_f):
        return 1.0
    d = float(np.linalg.norm(np.asarray(source_f) - np.asarray(target_f)))
    return math.exp(-d) if variant == 0 else 1.0 - math.exp(-d)


def familiarity_weight(familiar: bool, variant: int, p: float = 0.9) -> float:
    if not 0.5 < p < 1.0:
        raise InvalidParameter(f"familiarity p must lie in (0.5, 1), got {p}")
    return p if bool(familiar) == (variant == 0) else 1.0 - p


def normalized_gap(source_t: float, target_t: float, t_min: float) -> float:
    if target_t > source_t:
        raise TimeViolation(f"target time {target_t} after source time {source_t}")
    span = source_t - t_min
    return 0.0 if span == 0 else (source_t - target_t) / span


def time_weight(source_t: float, target_t: float, t_min: float, variant: int,
                alpha: float = 10.0, beta: float = 1.0) -> float:
    delta = normalized_gap(source_t, target_t, t_min)
    if variant == 1:
        return 1.0
    return float(stats.beta.pdf(1.0 - delta, alpha, beta))


# -- vectorised candidate context ---------------------------------------------

@dataclass
class Source:
    """What the likelihood needs to know about an edge's source node."""
    time: int
    field: np.ndarray
    familiar: frozenset = frozenset()


@dataclass
class ViewContext:
    """Candidate pool and target statistics for one (view, snapshot)."""
    g: TemporalGraph
    fields: FieldStore
    view: View
    t: int
    params: StrategyParams = field(default_factory=StrategyParams)

    def __post_init__(self):
        g, view, t = self.g, self.view, self.t
        self.space = space_of(view)
        self.pool = pool_indices(g, view, t)
        self.position = {int(x): i for i, x in enumerate(self.pool)}
        self.indegree = g.indegree_before(view, t)[self.pool] if len(self.pool) else np.zeros(0)
        if view is View.CONTENT_CITES_CONTENT:
            self.target_field = self.fields.vectors[self.pool]
            self.target_time = g.content_time[self.pool].astype(float)
        elif view is View.AUTHOR_CITES_AUTHOR:
            self.target_field = self.fields.author_matrix(g, self.pool, t)
            self.target_time = np.array([self._latest_before(a) for a in self.pool], dtype=float)
        else:
            self.target_field = self.fields.venue_matrix(g, self.pool, t)
            self.target_time = np.zeros(len(self.pool))

    def _latest_before(self, a: int) -> int:
        times = [int(self.g.content_time[c]) for c in self.g.author_contents[a]
                 if self.g.content_time[c] < self.t]
        return max(times) if times else self.t

    # sources ---------------------------------------------------------------

    def source_for(self, node: int) -> Source:
        g, t = self.g, self.t
        if self.view.source_kind is Kind.CONTENT:
            return self.source_from(g.content_authors[node], self.fields.vectors[node],
                                    int(g.content_time[node]))
        group = {node} | set(g.coauthors_at(node, t))
        past_co = {b for c in g.author_contents_before(node, t) for b in g.content_authors[c]}
        return self.source_from(group, self.fields.author_matrix(g, [node], t)[0], t, past_co)

    def source_from(self, group, field_vec: np.ndarray, time: int, past_coauthors=()) -> Source:
        """Source whose co-author group is ``group`` (need not exist in the graph).

        Familiar targets: contents written before ``t`` by the group, venues the
        group published at before ``t``, or (author view) the group plus the
        source author's past co-authors.
        """
        g, t = self.g, self.t
        group = set(group)
        if self.view is View.CONTENT_CITES_CONTENT:
            familiar = {c for a in group for c in g.author_contents[a] if g.content_time[c] < t}
        elif self.view is View.AUTHOR_CITES_AUTHOR:
            familiar = group | set(past_coauthors)
        else:
            familiar = {g.content_venue[c] for a in group for c in g.author_contents[a]
                        if g.content_time[c] < t and g.content_venue[c] is not None}
        return Source(time, np.asarray(field_vec, dtype=float), frozenset(familiar))

    def positions(self, targets) -> np.ndarray:
        try:
            return np.array([self.position[int(x)] for x in targets], dtype=np.int64)
        except KeyError as exc:
            raise EmptyCandidates(f"target {exc.args[0]} not in the {self.view.value} pool at t={self.t}") from None

    # weights ---------------------------------------------------------------

    def aspect_weights(self, source: Source, cand: np.ndarray | None = None) -> np.ndarray:
        """(n_aspects, 2, n) weights for candidate positions ``cand``."""
        if cand is None:
            cand = np.arange(len(self.pool))
        p = self.params
        n = len(cand)
        w = np.ones((self.space.n_aspects, 2, n))
        w[Aspect.POPULARITY, 0] = self.indegree[cand] + p.smoothing
        tf = self.target_field[cand]
        if np.any(source.field):
            d = np.linalg.norm(tf - source.field[None, :], axis=1)
            known = np.any(tf != 0, axis=1)
            w[Aspect.FIELD, 0] = np.where(known, np.exp(-d), 1.0)
            w[Aspect.FIELD, 1] = np.where(known, 1.0 - np.exp(-d), 1.0)
        fam = np.array([int(self.pool[i]) in source.familiar for i in cand], dtype=bool)
        w[Aspect.FAMILIARITY, 0] = np.where(fam, p.familiarity_p, 1.0 - p.familiarity_p)
        w[Aspect.FAMILIARITY, 1] = np.where(fam, 1.0 - p.familiarity_p, p.familiarity_p)
        if self.space is Space.CITATION:
            tt = self.target_time[cand]
            if np.any(tt > source.time):
                raise TimeViolation("candidate created after the source")
            span = source.time - self.g.t_min
            delta = np.zeros(n) if span == 0 else (source.time - tt) / span
            w[Aspect.TIME, 0] = stats.beta.pdf(1.0 - delta, p.beta_alpha, p.beta_beta)
        return w

    def composite_probabilities(self, source: Source, cand: np.ndarray | None = None) -> np.ndarray:
        """(m, n) matrix; row S is P(target | S) over the candidates."""
        w = self.aspect_weights(source, cand)
        if w.shape[2] == 0:
            raise EmptyCandidates(f"no candidates for {self.view.value} at t={self.t}")
        return composite_from_aspects(w)


def composite_from_aspects(w: np.ndarray) -> np.ndarray:
    n_aspects = w.shape[0]
    bits = strategy_bits(n_aspects)
    comp = np.prod(w[np.arange(n_aspects)[None, :], bits, :], axis=1)
    totals = comp.sum(axis=1, keepdims=True)
    # An all-zero row (every candidate ruled out) degrades to uniform.
    n = comp.shape[1]
    return np.where(totals > 0, comp / np.where(totals > 0, totals, 1.0), 1.0 / n)


def reference_weights(ctx: ViewContext, source: Source, candidates) -> dict:
    """Scalar per-aspect weights {candidate: {(aspect, variant): w}} (loop reference)."""
    p = ctx.params
    out = {}
    for x in candidates:
        i = ctx.position[x]
        w = {}
        for aspect in Aspect:
            if aspect is Aspect.TIME and ctx.space is not Space.CITATION:
                continue
            for variant in (0, 1):
                if aspect is Aspect.POPULARITY:
                    w[aspect, variant] = popularity_weight(ctx.indegree[i], variant, p.smoothing)
                elif aspect is Aspect.FIELD:
                    w[aspect, variant] = field_weight(source.field, ctx.target_field[i], variant)
                elif aspect is Aspect.FAMILIARITY:
                    w[aspect, variant] = familiarity_weight(x in source.familiar, variant, p.familiarity_p)
                else:
                    w[aspect, variant] = time_weight(source.time, ctx.target_time[i], ctx.g.t_min,
                                                     variant, p.beta_alpha, p.beta_beta)
        out[x] = w
    return out


def reference_distribution(ctx: ViewContext, source: Source, strategy: CompositeStrategy,
                           candidates=None, weights: dict | None = None) -> dict:
    """P(x | strategy) for every candidate x, from scalar weights."""
    if candidates is None:
        candidates = [int(x) for x in ctx.pool]
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidates("empty candidate set")
    weights = weights if weights is not None else reference_weights(ctx, source, candidates)
    prods = {}
    for x in candidates:
        total = 1.0
        for pure in strategy.pure:
            total *= weights[x][pure.aspect, pure.variant]
        prods[x] = total
    z = sum(prods.values())
    if z == 0:
        return {x: 1.0 / len(candidates) for x in candidates}
    return {x: v / z for x, v in prods.items()}


def composite_edge_probability(ctx: ViewContext, source: Source, target: int,
                               strategy: CompositeStrategy, candidates=None) -> float:
    """Reference (loop) evaluation of P(target | strategy) over ``candidates``."""
    if candidates is None:
        candidates = [int(x) for x in ctx.pool]
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidates("empty candidate set")
    if target not in candidates:
        raise EmptyCandidates(f"target {target} not among the candidates")
    return reference_distribution(ctx, source, strategy, candidates)[target]


# -- likelihood tables ------------------------------------------------------

@dataclass
class LikelihoodTable:
    view: View
    t: int
    edges: np.ndarray            # (n, 2) source/target indices
    probs: np.ndarray            # (n, m)
    skipped: int = 0             # edges whose target lies outside the pool

    @property
    def m(self) -> int:
        return self.probs.shape[1]


def likelihood_table(g: TemporalGraph, fields: FieldStore, view: View, t: int,
                     params: StrategyParams | None = None, edges=None,
                     ctx: ViewContext | None = None) -> LikelihoodTable:
    """P(edge | S) for every edge of ``view`` at ``t`` and every composite S.

    With ``params.negative_samples`` set, each source is normalised over its
    observed targets plus a seeded sample of that many other pool members
    (a self-normalised approximation for large pools).
    """
    params = params or StrategyParams()
    ctx = ctx or ViewContext(g, fields, view, t, params)
    m = ctx.space.m
    if edges is None:
        edges = g.edges(view, t)
    by_source = {}
    skipped = 0
    for s, d in edges:
        if d in ctx.position:
            by_source.setdefault(int(s), []).append(int(d))
        else:
            skipped += 1
    rows, kept = [], []
    for s in sorted(by_source):
        targets = by_source[s]
        source = ctx.source_for(s)
        tpos = ctx.positions(targets)
        if params.negative_samples is None:
            probs = ctx.composite_probabilities(source)
            rows.append(probs[:, tpos].T)
        else:
            rng = np.random.default_rng([params.seed, t, list(View).index(view), s])
            others = np.setdiff1d(np.arange(len(ctx.pool)), tpos)
            k = min(params.negative_samples, len(others))
            sample = np.sort(rng.choice(others, size=k, replace=False)) if k else others[:0]
            cand = np.concatenate([tpos, sample])
            probs = ctx.composite_probabilities(source, cand)
            rows.append(probs[:, : len(tpos)].T)
        kept.extend((s, d) for d in targets)
    probs = np.vstack(rows) if rows else np.zeros((0, m))
    return LikelihoodTable(view, t, np.array(kept, dtype=np.int64).reshape(-1, 2), probs, skipped)


def export_table_csv(table: LikelihoodTable, g: TemporalGraph, path):
    src_keys = g.keys(table.view.source_kind)
    dst_keys = g.keys(table.view.target_kind)
    n_aspects = space_of(table.view).n_aspects
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge_id", "view", "t", "source", "target", "strategy", "label", "probability"])
        for i, (s, d) in enumerate(table.edges):
            for code in range(table.m):
                w.writerow([i, table.view.value, table.t + g.epoch, src_keys[s], dst_keys[d], code,
                            CompositeStrategy(code, n_aspects).label, repr(float(table.probs[i, code]))])
