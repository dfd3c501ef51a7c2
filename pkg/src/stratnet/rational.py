"""Utility allocation to maximum-likelihood strategies and the myopic rational agent.

Each content's utility is split evenly between the citation and the venue
space, attributed to its authors by their contribution shares, normalised by
content count and elapsed time, and credited to the author's most likely
strategy. The rational agent plays the strategy with the highest mean
credited utility so far.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import EmptyContentSet, EmptyTable, InvalidParameter, MissingUtility
from .graph import TemporalGraph

SPACE_SHARE = 0.5


def content_utility(g: TemporalGraph, c: int, k: int) -> float:
    try:
        return g.utilities[c][k]
    except KeyError:
        raise MissingUtility(f"content {g.content_keys[c]!r} has no utility at k={k}") from None


def author_utility(g: TemporalGraph, a: int, t: int, k: int, r: dict) -> float:
    """Sum of mu_c(k) * r(a|c) over the contents ``a`` wrote at ``t``."""
    return sum(content_utility(g, c, k) * r[(a, c)] for c in g.author_contents_at(a, t))


def normalized_utility(shares, k: int) -> float:
    """(1/k) * mean of the author's per-content utility shares."""
    if k < 1:
        raise InvalidParameter(f"elapsed time k must be >= 1, got {k}")
    shares = list(shares)
    if not shares:
        raise EmptyContentSet("no contents to normalise over")
    return sum(shares) / len(shares) / k


def allocate_to_ml_strategy(dist) -> int:
    """Most likely strategy; the first (lowest) code wins ties."""
    return int(np.argmax(np.asarray(dist)))


@dataclass(frozen=True)
class Allocation:
    author: int
    t: int          # creation snapshot of the contents (t - k)
    space: str
    strategy: int
    utility: float  # normalised utility
    k: int


def horizon_for(g: TemporalGraph, contents, horizon="max") -> int | None:
    """Elapsed time used for a content set.

    ``"max"`` takes the largest k recorded for every content in the set; an
    integer is used as given. None means the contents share no recorded k.
    """
    if horizon != "max":
        return int(horizon)
    common = None
    for c in contents:
        ks = set(g.utilities.get(c, ()))
        common = ks if common is None else common & ks
    return max(common) if common else None


def compute_allocations(g: TemporalGraph, state, horizon="max",
                        share: float = SPACE_SHARE) -> list[Allocation]:
    out = []
    for space in sorted(state.d_author):
        r = state.r.get(space, {})
        for (a, t), dist in sorted(state.d_author[space].items()):
            contents = g.author_contents_at(a, t)
            if not contents:
                continue
            k = horizon_for(g, contents, horizon)
            if k is None:
                continue
            shares = [share * content_utility(g, c, k) * r.get((a, c), 0.0) for c in contents]
            out.append(Allocation(a, t, space, allocate_to_ml_strategy(dist),
                                  normalized_utility(shares, k), k))
    return out


@dataclass
class GlobalStrategyUtility:
    """Mean allocated utility per (t, space, strategy); absent cells are undefined."""
    mean: dict
    count: dict

    def cells(self, t: int, space: str) -> dict:
        return {s: v for (tt, sp, s), v in self.mean.items() if tt == t and sp == space}


def global_expected_utility(allocations, times=None) -> GlobalStrategyUtility:
    """Cumulative mean of allocated utilities per strategy over all times <= t."""
    allocations = list(allocations)
    if times is None:
        times = sorted({al.t for al in allocations})
    mean, count = {}, {}
    for t in times:
        sums = defaultdict(float)
        ns = defaultdict(int)
        for al in allocations:
            if al.t <= t:
                sums[(al.space, al.strategy)] += al.utility
                ns[(al.space, al.strategy)] += 1
        for (space, s), n in ns.items():
            mean[(t, space, s)] = sums[(space, s)] / n
            count[(t, space, s)] = n
    return GlobalStrategyUtility(mean, count)


def rational_choice(table: GlobalStrategyUtility, t: int, space: str) -> int:
    """Strategy with the highest mean utility at ``t``; lowest code on ties."""
    cells = table.cells(t, space)
    if not cells:
        raise EmptyTable(f"no allocations for {space} by t={t}")
    best = max(cells.values())
    return min(s for s, v in cells.items() if v == best)


def rational_replay(allocations, table: GlobalStrategyUtility) -> list[dict]:
    """Compare the agent's pick at t with what authors earned at t + 1.

    The agent's outcome is the empirical mean utility of its chosen strategy
    among next-snapshot allocations; it is None when nobody played it.
    """
    allocations = list(allocations)
    times = sorted({t for t, _, _ in table.mean})
    rows = []
    for space in sorted({al.space for al in allocations}):
        for t in times:
            nxt = [al for al in allocations if al.space == space and al.t == t + 1]
            if not nxt or not table.cells(t, space):
                continue
            choice = rational_choice(table, t, space)
            played = [al.utility for al in nxt if al.strategy == choice]
            rows.append({
                "t": t, "space": space, "rational_strategy": choice,
                "rational_mean": float(np.mean(played)) if played else None,
                "observed_mean": float(np.mean([al.utility for al in nxt])),
                "n_played": len(played), "n_observed": len(nxt),
            })
    return rows


def export_table_csv(table: GlobalStrategyUtility, g: TemporalGraph, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "space", "strategy", "mean_utility", "count"])
        for key in sorted(table.mean):
            t, space, s = key
            w.writerow([t + g.epoch, space, s, repr(table.mean[key]), table.count[key]])


def export_allocations_csv(allocations, g: TemporalGraph, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["author", "t", "space", "strategy", "normalized_utility", "k"])
        for al in sorted(allocations, key=lambda x: (x.space, x.t, x.author)):
            w.writerow([g.author_keys[al.author], al.t + g.epoch, al.space, al.strategy,
                        repr(al.utility), al.k])

