"""Command-line entry point: ``stratnet <subcommand> --config run.toml``.

Exit codes: 0 on success, 1 on validation errors (bad config, bad data,
missing artifacts, unknown subcommands), 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis, ddan, evaluation, rational, simulate
from .config import RunConfig, validate_config
from .errors import ConfigError, MissingArtifact, NumericalError, StratNetError
from .features import empty_fields, fallback_embed, load_embeddings, load_fields
from .graph import View, ingest_dir, load_graph, save_graph
from .strategies import export_table_csv, likelihood_table

log = logging.getLogger("stratnet")

COMMANDS = ("simulate", "ingest", "train", "evaluate", "rational", "analyze", "export")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stratnet", description="Infer author strategies in temporal bipartite networks.")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)
    helps = {
        "simulate": "generate a synthetic dataset into the data directory",
        "ingest": "validate JSONL input and write graph.json",
        "train": "fit the attention network snapshot by snapshot",
        "evaluate": "five-fold link-prediction MAP for the model and the LR baseline",
        "rational": "allocate utilities and run the myopic rational agent",
        "analyze": "export plot data (and recovery metrics for simulated data)",
        "export": "write per-view likelihood tables as CSV",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--data-dir", help="override [paths] data_dir")
        p.add_argument("--output-dir", help="override [paths] output_dir")
        p.add_argument("--workers", type=int, default=1, help="worker processes (evaluate)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "train":
            p.add_argument("--max-epochs", type=int, help="override [train] max_epochs")
        if name == "evaluate":
            p.add_argument("--snapshots", type=int, nargs="+", help="raw snapshot times to evaluate")
    return parser


# -- artifact helpers ----------------------------------------------------------------

def _graph(cfg: RunConfig):
    path = cfg.output_dir / "graph.json"
    if path.exists():
        return load_graph(path)
    if not (cfg.data_dir / "nodes.jsonl").exists():
        raise MissingArtifact(f"no graph.json in {cfg.output_dir} and no nodes.jsonl in {cfg.data_dir}")
    return ingest_dir(cfg.data_dir, cfg.epoch, cfg.n_snapshots)


def _features(cfg: RunConfig, g):
    emb_path = cfg.data_dir / "embeddings.jsonl"
    emb = (load_embeddings(emb_path, g) if emb_path.exists()
           else fallback_embed(g, cfg.embedding_dim, cfg.seed))
    field_path = cfg.data_dir / "fields.jsonl"
    fields = load_fields(field_path, g) if field_path.exists() else empty_fields(g)
    return emb, fields


def _model(cfg: RunConfig):
    return ddan.load_state(cfg.output_dir / "model")


def _dump_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


# -- subcommands ----------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, args):
    result = simulate.simulate(cfg.sim, cfg.strategy)
    paths = simulate.write_simulation(result, cfg.data_dir)
    log.info("wrote %d files to %s (%r)", len(paths), cfg.data_dir, result.graph)


def cmd_ingest(cfg: RunConfig, args):
    if not cfg.data_dir.exists():
        raise MissingArtifact(f"data directory {cfg.data_dir} does not exist")
    g = ingest_dir(cfg.data_dir, cfg.epoch, cfg.n_snapshots)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    save_graph(g, cfg.output_dir / "graph.json")
    log.info("ingested %r", g)


def cmd_train(cfg: RunConfig, args):
    g = _graph(cfg)
    emb, fields = _features(cfg, g)
    train_cfg = cfg.train if args.max_epochs is None else replace(cfg.train, max_epochs=args.max_epochs)
    state = ddan.train(g, emb, fields, train_cfg, cfg.strategy, log=log.info)
    out = cfg.output_dir
    ddan.save_state(state, out / "model")
    ddan.export_loss_csv(state, g, out / "loss.csv")
    ddan.export_distributions_csv(state, g, out / "distributions.csv")


def cmd_evaluate(cfg: RunConfig, args):
    g = _graph(cfg)
    state = _model(cfg)
    emb, fields = _features(cfg, g)
    raw = args.snapshots if args.snapshots else cfg.eval_snapshots
    snapshots = None if raw is None else [t - g.epoch for t in raw]
    result = evaluation.evaluate(g, emb, fields, state, state.config, cfg.strategy, cfg.evaluate,
                                 snapshots=snapshots, workers=args.workers)
    out = cfg.output_dir / "evaluation"
    out.mkdir(parents=True, exist_ok=True)
    evaluation.export_results(result, g, out / "results.csv", out / "summary.json")
    for (method, space), v in result.overall().items():
        log.info("MAP %s %s: %.4f", method, space, v)


def cmd_rational(cfg: RunConfig, args):
    g = _graph(cfg)
    state = _model(cfg)
    allocs = rational.compute_allocations(g, state, cfg.horizon)
    table = rational.global_expected_utility(allocs, range(g.n_snapshots))
    out = cfg.output_dir / "rational"
    out.mkdir(parents=True, exist_ok=True)
    rational.export_table_csv(table, g, out / "table.csv")
    rational.export_allocations_csv(allocs, g, out / "allocations.csv")
    replay = [dict(r, t=r["t"] + g.epoch) for r in rational.rational_replay(allocs, table)]
    analysis.write_rows(out / "replay.csv", replay,
                        ["t", "space", "rational_strategy", "rational_mean", "observed_mean",
                         "n_played", "n_observed"])


def cmd_analyze(cfg: RunConfig, args):
    g = _graph(cfg)
    state = _model(cfg)
    allocs = rational.compute_allocations(g, state, cfg.horizon)
    an = cfg.analysis
    out = cfg.output_dir / "analysis"
    analysis.export_plot_data(state, allocs, g, out, an["min_years"], an["top"], an["upper"], an["bins"])
    truth_path = cfg.data_dir / "ground_truth.jsonl"
    if truth_path.exists():
        truth = simulate.load_truth(truth_path, g)
        report = simulate.recovery_report(truth, state.d_author)
        rows = [dict(r, author=g.author_keys[r["author"]], t=r["t"] + g.epoch) for r in report["rows"]]
        analysis.write_rows(out / "recovery.csv", rows, ["space", "author", "t", "tv", "spearman"])
        _dump_json(out / "recovery_summary.json", report["summary"])


def cmd_export(cfg: RunConfig, args):
    g = _graph(cfg)
    _, fields = _features(cfg, g)
    out = cfg.output_dir / "tables"
    out.mkdir(parents=True, exist_ok=True)
    for t in range(g.n_snapshots):
        for view in View:
            table = likelihood_table(g, fields, view, t, cfg.strategy)
            export_table_csv(table, g, out / f"{view.short}_{t + g.epoch}.csv")


HANDLERS = {
    "simulate": cmd_simulate, "ingest": cmd_ingest, "train": cmd_train, "evaluate": cmd_evaluate,
    "rational": cmd_rational, "analyze": cmd_analyze, "export": cmd_export,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = validate_config(args.config)
        if args.data_dir:
            cfg = replace(cfg, data_dir=Path(args.data_dir).resolve())
        if args.output_dir:
            cfg = replace(cfg, output_dir=Path(args.output_dir).resolve())
        if args.workers < 1:
            raise ConfigError(["--workers must be >= 1"])
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: ConfigError: {len(exc.problems)} problem(s)", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return 1
    except StratNetError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(json.dumps(diag, default=str, sort_keys=True), file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
