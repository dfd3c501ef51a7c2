"""Preference orders, their year-over-year stability, utility cohorts and plot data.

Nothing here renders figures; every public exporter writes a CSV whose
columns are listed in the README.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import LengthMismatch

COHORTS = ("top1", "top1_10", "bottom90")


def preference_order(dist) -> list[int]:
    """Strategy codes by descending probability, ascending code on ties."""
    dist = np.asarray(dist, dtype=float)
    return sorted(range(len(dist)), key=lambda s: (-dist[s], s))


def rank_positions(order) -> np.ndarray:
    """Position of every strategy code within a ranking."""
    pos = np.empty(len(order), dtype=float)
    pos[np.asarray(order)] = np.arange(len(order))
    return pos


def spearman(r1, r2) -> float:
    """Spearman coefficient of two rankings (permutations of the same codes)."""
    if len(r1) != len(r2):
        raise LengthMismatch(f"rankings of length {len(r1)} and {len(r2)}")
    n = len(r1)
    if n < 2:
        raise LengthMismatch("rankings need at least two entries")
    d = rank_positions(r1) - rank_positions(r2)
    return 1.0 - 6.0 * float(d @ d) / (n * (n * n - 1))


def career_years(state, space: str) -> dict:
    """author -> sorted snapshots with a fitted distribution (career order)."""
    years = defaultdict(list)
    for a, t in state.d_author.get(space, {}):
        years[a].append(t)
    return {a: sorted(ts) for a, ts in years.items()}


def correlation_series(state, space: str, min_years: int = 5) -> dict:
    """author -> Spearman of consecutive career years' preference orders.

    Entry i compares career year i + 1 with year i + 2 (1-based years).
    """
    table = state.d_author.get(space, {})
    out = {}
    for a, ts in career_years(state, space).items():
        if len(ts) < min_years:
            continue
        orders = [preference_order(table[(a, t)]) for t in ts]
        out[a] = [spearman(x, y) for x, y in zip(orders, orders[1:])]
    return out


def author_utilities(allocations) -> dict:
    """Mean normalised utility per author, summed over spaces."""
    per = defaultdict(lambda: defaultdict(list))
    for al in allocations:
        per[al.author][al.space].append(al.utility)
    return {a: sum(float(np.mean(v)) for v in spaces.values()) for a, spaces in per.items()}


def assign_cohorts(utility: dict, top: float = 0.01, upper: float = 0.10) -> dict:
    """Split authors into top 1%, top 1-10% and bottom 90% by utility.

    Cohort sizes are ceil(top * n) and ceil(upper * n) - ceil(top * n); ties in
    utility are broken by author id.
    """
    ranked = sorted(utility, key=lambda a: (-utility[a], a))
    n = len(ranked)
    n_top = math.ceil(top * n)
    n_upper = math.ceil(upper * n)
    return {a: COHORTS[0] if i < n_top else COHORTS[1] if i < n_upper else COHORTS[2]
            for i, a in enumerate(ranked)}


def stability_curves(state, allocations, space: str, min_years: int = 5,
                     top: float = 0.01, upper: float = 0.10) -> list[dict]:
    """Mean and median consecutive-year coefficient per cohort and career year."""
    series = correlation_series(state, space, min_years)
    cohorts = assign_cohorts({a: u for a, u in author_utilities(allocations).items() if a in series},
                             top, upper)
    buckets = defaultdict(list)
    for a, vals in series.items():
        if a not in cohorts:
            continue
        for i, v in enumerate(vals):
            buckets[(cohorts[a], i + 2)].append(v)
    return [{"space": space, "cohort": cohort, "career_year": year,
             "mean": float(np.mean(v)), "median": float(np.median(v)), "n": len(v)}
            for (cohort, year), v in sorted(buckets.items(), key=lambda kv: (COHORTS.index(kv[0][0]), kv[0][1]))]


def strategy_utility_histograms(allocations, space: str, m: int, bins: int = 10,
                                authors=None) -> list[dict]:
    """Histogram of allocated normalised utilities for each strategy.

    All strategies share bin edges spanning the observed utilities, so the
    counts add up to the number of allocations considered.
    """
    vals = [al for al in allocations if al.space == space and (authors is None or al.author in authors)]
    if not vals:
        return []
    us = np.array([al.utility for al in vals])
    lo, hi = float(us.min()), float(us.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    rows = []
    for s in range(m):
        mine = np.array([al.utility for al in vals if al.strategy == s])
        counts, _ = np.histogram(mine, bins=edges)
        for b in range(bins):
            rows.append({"space": space, "strategy": s, "bin_lo": float(edges[b]),
                         "bin_hi": float(edges[b + 1]), "count": int(counts[b])})
    return rows


def career_marginals(state, space: str, authors=None, years=None) -> list[dict]:
    """Average strategy distribution over authors at each career year."""
    table = state.d_author.get(space, {})
    acc = defaultdict(list)
    for a, ts in career_years(state, space).items():
        if authors is not None and a not in authors:
            continue
        for i, t in enumerate(ts):
            if years is None or i + 1 in years:
                acc[i + 1].append(table[(a, t)])
    rows = []
    for year in sorted(acc):
        mean = np.mean(acc[year], axis=0)
        mean = mean / mean.sum()
        rows.extend({"space": space, "career_year": year, "strategy": s,
                     "probability": float(p), "n_authors": len(acc[year])}
                    for s, p in enumerate(mean))
    return rows


def utility_over_time(allocations) -> list[dict]:
    per = defaultdict(float)
    for al in allocations:
        per[(al.author, al.t)] += al.utility
    return [{"author": a, "t": t, "normalized_utility": u} for (a, t), u in sorted(per.items())]


def write_rows(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in columns)])


def export_plot_data(state, allocations, g, out_dir, min_years: int = 5,
                     top: float = 0.01, upper: float = 0.10, bins: int = 10,
                     top_years=(1, 5, 10, 15)) -> dict:
    """Write the plot-data CSVs and return their paths by name."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spaces = sorted(state.d_author)
    paths = {}

    curves = [r for s in spaces for r in stability_curves(state, allocations, s, min_years, top, upper)]
    paths["combined_curves"] = out_dir / "combined_curves.csv"
    write_rows(paths["combined_curves"], curves, ["space", "cohort", "career_year", "mean", "median", "n"])

    over_time = [dict(r, author=g.author_keys[r["author"]], t=r["t"] + g.epoch)
                 for r in utility_over_time(allocations)]
    paths["author_utility_over_time"] = out_dir / "author_utility_over_time.csv"
    write_rows(paths["author_utility_over_time"], over_time, ["author", "t", "normalized_utility"])

    cohorts = assign_cohorts(author_utilities(allocations), top, upper)
    top_authors = {a for a, c in cohorts.items() if c == COHORTS[0]}
    marg = [r for s in spaces for r in career_marginals(state, s, top_authors, set(top_years))]
    paths["top1"] = out_dir / "top1.csv"
    write_rows(paths["top1"], marg, ["space", "career_year", "strategy", "probability", "n_authors"])

    hist = [r for s in spaces
            for r in strategy_utility_histograms(allocations, s, len(next(iter(state.d_author[s].values()))), bins)]
    paths["utility_histograms"] = out_dir / "utility_histograms.csv"
    write_rows(paths["utility_histograms"], hist, ["space", "strategy", "bin_lo", "bin_hi", "count"])
    return paths
