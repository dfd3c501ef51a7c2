"""Acceptance criteria 1-8. Each test records one PASS/FAIL line, printed in
the terminal summary, and then asserts the criterion at its stated tolerance.
"""

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ACCEPTANCE_LINES
from helpers import max_relative_error, random_citation_context, random_source, tiny_instance
from stratnet import analysis, ddan, rational
from stratnet.cli import dispatch
from stratnet.evaluation import EvalSettings, average_precision, evaluate
from stratnet.rational import Allocation
from stratnet.simulate import SimConfig, bootstrap_ci, recovery_report, simulate
from stratnet.strategies import (
    CompositeStrategy, Space, composite_edge_probability, reference_distribution, reference_weights, time_weight,
)

RECOVERY = SimConfig(n_authors=200, n_snapshots=5, concentration=0.1, seed=1)
RECOVERY_TRAIN = ddan.TrainConfig(learning_rate=0.01, max_epochs=200, tolerance=1e-9)


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_criterion_1_distribution_validity():
    start = time.perf_counter()
    sim = simulate(SimConfig(n_authors=60, n_snapshots=5, seed=11))
    seen = {"passes": 0, "d_err": 0.0, "d_min": 1.0, "alpha_err": 0.0, "beta_lo": 1.0, "beta_hi": 0.0, "m": set()}

    def observer(data, space, fw):
        seen["passes"] += 1
        for d in (fw.d_content.value, fw.d_author.value):
            seen["m"].add(d.shape[1])
            seen["d_err"] = max(seen["d_err"], float(np.abs(d.sum(axis=1) - 1).max()))
            seen["d_min"] = min(seen["d_min"], float(d.min()))
        for alpha, seg, n in ((fw.alpha_author.value, data.pair_content, len(data.contents)),
                              (fw.alpha_content.value, data.pair_author, len(data.authors))):
            sums = np.bincount(seg, weights=alpha, minlength=n)
            seen["alpha_err"] = max(seen["alpha_err"], float(np.abs(sums - 1).max()))
        seen["beta_lo"] = min(seen["beta_lo"], float(fw.beta.value.min()))
        seen["beta_hi"] = max(seen["beta_hi"], float(fw.beta.value.max()))

    state = ddan.train(sim.graph, sim.embeddings, sim.fields,
                       ddan.TrainConfig(max_epochs=30, tolerance=1e-9), observer=observer)
    for space, table in state.d_author.items():
        for vec in table.values():
            seen["d_err"] = max(seen["d_err"], abs(float(vec.sum()) - 1))
            seen["d_min"] = min(seen["d_min"], float(vec.min()))
    elapsed = time.perf_counter() - start
    ok = (seen["d_min"] >= 0 and seen["d_err"] <= 1e-9 and seen["alpha_err"] <= 1e-9
          and 0 < seen["beta_lo"] and seen["beta_hi"] < 1 and seen["m"] == {16, 8} and elapsed < 60)
    record(1, ok, f"{seen['passes']} forward passes, max |sum D - 1| {seen['d_err']:.1e}, min D "
                  f"{seen['d_min']:.1e}, max |sum alpha - 1| {seen['alpha_err']:.1e}, beta min "
                  f"{seen['beta_lo']:.1e}, 1 - beta max {1 - seen['beta_hi']:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_gradient_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        data, params, cfg = tiny_instance(rng)
        _, analytic, _ = ddan.loss_and_grad(data, params, cfg)
        numeric = ddan.finite_difference_grad(data, params, cfg, h=1e-5)
        worst = max(worst, max_relative_error(analytic, numeric))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 60
    record(2, ok, f"20 tiny instances, max relative error {worst:.2e} (< 1e-4), {elapsed:.1f}s")
    assert ok


def test_criterion_3_likelihood_normalisation():
    rng = np.random.default_rng(33)
    contexts = [random_citation_context(rng, 1000)[1] for _ in range(4)]
    worst, checked, spot = 0.0, 0, 0.0
    for i in range(100):
        ctx = contexts[i % len(contexts)]
        source = random_source(rng, ctx)
        size = int(rng.integers(1, 1001))
        cand = sorted(rng.choice(ctx.pool, size=size, replace=False).tolist())
        weights = reference_weights(ctx, source, cand)
        for code in range(16):
            strategy = CompositeStrategy(code, 4)
            dist = reference_distribution(ctx, source, strategy, cand, weights)
            worst = max(worst, abs(math.fsum(dist[x] for x in cand) - 1.0))
            checked += 1
        # the per-target entry point agrees with the enumerated distribution
        x = cand[int(rng.integers(len(cand)))]
        code = int(rng.integers(16))
        spot = max(spot, abs(composite_edge_probability(ctx, source, x, CompositeStrategy(code, 4), cand)
                             - reference_distribution(ctx, source, CompositeStrategy(code, 4), cand, weights)[x]))
    deltas = rng.uniform(0, 1, size=1000)
    beta_err = max(abs(time_weight(1.0, 1.0 - d, 0.0, 0) - 10 * (1 - d) ** 9) for d in deltas)
    ok = worst <= 1e-9 and beta_err <= 1e-12 and spot == 0.0
    record(3, ok, f"{checked} pool/strategy sums, max |sum - 1| {worst:.1e}; "
                  f"Beta(10,1) max error {beta_err:.1e}")
    assert ok


def test_criterion_4_training_descent():
    start = time.perf_counter()
    sim = simulate(SimConfig(n_authors=60, n_snapshots=5, seed=4))
    state = ddan.train(sim.graph, sim.embeddings, sim.fields, ddan.TrainConfig(tolerance=1e-6))
    elapsed = time.perf_counter() - start
    drops = {t: (h[0], h[-1], len(h) - 1) for t, h in state.loss_history.items()}
    finite = all(np.all(np.isfinite(h)) for h in state.loss_history.values())
    ok = finite and all(last < first for first, last, _ in drops.values()) and elapsed < 300
    detail = ", ".join(f"t{t}: {a:.1f}->{b:.1f} ({n} steps)" for t, (a, b, n) in sorted(drops.items()))
    record(4, ok, f"{detail}; finite={finite}, {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def recovery():
    start = time.perf_counter()
    sim = simulate(RECOVERY)
    state = ddan.train(sim.graph, sim.embeddings, sim.fields, RECOVERY_TRAIN)
    return sim, state, time.perf_counter() - start


def _flat_dirichlet(truth):
    """The untrained starting points: one flat Dirichlet draw per author and snapshot."""
    return {space: {(a, t): ddan._dirichlet(RECOVERY_TRAIN.seed, t, Space(space), 1, a, Space(space).m)
                    for (a, t) in table}
            for space, table in truth.items()}


def test_criterion_5_strategy_recovery(recovery):
    sim, state, elapsed = recovery
    truth = sim.truth.dist
    fitted = recovery_report(truth, state.d_author)
    flat = recovery_report(truth, _flat_dirichlet(truth))
    untrained = ddan.train(sim.graph, sim.embeddings, sim.fields,
                           ddan.TrainConfig(**{**RECOVERY_TRAIN.__dict__, "max_epochs": 0}))
    net0 = recovery_report(truth, untrained.d_author)
    rho = [r["spearman"] for r in fitted["rows"]]
    lo, hi = bootstrap_ci(rho, seed=5)
    tv, tv_flat, tv_net0 = (fitted["summary"]["tv"]["mean"], flat["summary"]["tv"]["mean"],
                            net0["summary"]["tv"]["mean"])
    ok = tv < tv_flat and np.mean(rho) > 0 and lo > 0 and elapsed < 900
    record(5, ok, f"mean TV {tv:.4f} vs flat Dirichlet {tv_flat:.4f}; Spearman {np.mean(rho):.4f} "
                  f"CI ({lo:.4f}, {hi:.4f}); {len(rho)} author-snapshots, {elapsed:.0f}s "
                  f"[diagnostic: untrained network TV {tv_net0:.4f}, "
                  f"{'beaten' if tv < tv_net0 else 'not beaten'}]")
    assert ok


def test_criterion_6_map_harness(recovery):
    sim, state, _ = recovery
    g = sim.graph
    oracle = lambda fold, space, ids, probs: np.isin(ids, fold.positives[space]).astype(float)
    perfect = evaluate(g, sim.embeddings, sim.fields, state, RECOVERY_TRAIN, scorer=oracle)
    perfect_ok = len(perfect.rows) > 0 and all(v == 1.0 for v in perfect.map().values())

    rng = np.random.default_rng(66)
    ap_ok = True
    for _ in range(2000):
        n = int(rng.integers(1, 51))
        labels = rng.random(n) < rng.random()
        if not labels.any():
            labels[int(rng.integers(n))] = True
        brute = sum(labels[:k].sum() / k for k in range(1, n + 1) if labels[k - 1]) / labels.sum()
        ap_ok &= average_precision(labels) == pytest.approx(brute, abs=1e-15)

    result = evaluate(g, sim.embeddings, sim.fields, state, RECOVERY_TRAIN, settings=EvalSettings(seed=1))
    overall = result.overall()
    cmp = {space: (overall[("ddan", space)], overall[("lr", space)]) for space in ("citation", "venue")}
    direction = all(d >= l for d, l in cmp.values())
    ok = perfect_ok and ap_ok and direction
    record(6, ok, f"oracle MAP 1.0 on {len(perfect.rows)} items: {perfect_ok}; AP brute force on 2000 "
                  f"instances: {bool(ap_ok)}; DDAN vs LR MAP " +
                  ", ".join(f"{s} {d:.4f} vs {l:.4f}" for s, (d, l) in cmp.items()))
    assert ok


def _reference_normalized_utility(shares, k):
    total = 0.0
    for s in shares:
        total = total + s
    mean = total / len(shares)
    return mean / k


def test_criterion_7_rational_arithmetic():
    rng = np.random.default_rng(77)
    exact = 0
    for _ in range(1000):
        shares = (rng.exponential(5.0, size=int(rng.integers(1, 12))) * rng.random()).tolist()
        k = int(rng.integers(1, 20))
        exact += rational.normalized_utility(shares, k) == _reference_normalized_utility(shares, k)
    stable = 0
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        allocs = [Allocation(i, int(rng.integers(3)), "citation", int(rng.integers(16)),
                             float(rng.exponential(3.0)), 1) for i in range(n)]
        lam = float(np.exp(rng.uniform(-5, 5)))
        scaled = [Allocation(a.author, a.t, a.space, a.strategy, lam * a.utility, a.k) for a in allocs]
        t = max(a.t for a in allocs)
        before = rational.rational_choice(rational.global_expected_utility(allocs), t, "citation")
        after = rational.rational_choice(rational.global_expected_utility(scaled), t, "citation")
        stable += before == after
    ok = exact == 1000 and stable == 1000
    record(7, ok, f"normalized_utility exact on {exact}/1000; choice unchanged under scaling on {stable}/1000")
    assert ok


PIPELINE = """seed = 8
[paths]
data_dir = "data"
output_dir = "out"
[simulate]
n_authors = 40
n_snapshots = 3
n_background = 100
[train]
max_epochs = 10
[evaluate]
lr_iterations = 100
[analysis]
min_years = 2
"""

METRIC_FILES = ("loss.csv", "distributions.csv", "evaluation/results.csv", "evaluation/summary.json",
                "rational/table.csv", "rational/allocations.csv", "rational/replay.csv",
                "analysis/combined_curves.csv", "analysis/author_utility_over_time.csv", "analysis/top1.csv",
                "analysis/utility_histograms.csv", "analysis/recovery.csv", "analysis/recovery_summary.json")


def test_criterion_8_determinism(tmp_path):
    runs = []
    for name in ("first", "second"):
        root = tmp_path / name
        root.mkdir()
        (root / "run.toml").write_text(PIPELINE)
        codes = [dispatch([cmd, "--config", str(root / "run.toml")])
                 for cmd in ("simulate", "train", "evaluate", "rational", "analyze")]
        assert codes == [0] * 5
        runs.append(root / "out")
    same = [f for f in METRIC_FILES if (runs[0] / f).read_bytes() == (runs[1] / f).read_bytes()]
    ok = len(same) == len(METRIC_FILES)
    record(8, ok, f"{len(same)}/{len(METRIC_FILES)} metric files byte-identical across two pipeline runs")
    assert ok
