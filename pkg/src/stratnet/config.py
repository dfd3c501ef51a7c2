"""Run configuration: one TOML file drives every pipeline stage.

Every table and key is optional except the top-level ``seed``. Unknown keys,
wrong types and out-of-range values are all collected and reported together.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import tomli

from .ddan import TrainConfig
from .errors import ConfigError, StratNetError
from .evaluation import EvalSettings
from .simulate import SimConfig
from .strategies import StrategyParams

DEFAULTS = {
    "paths": {"data_dir": "data", "output_dir": "out"},
    "data": {"epoch": 2000, "n_snapshots": None},
    "strategy": {"familiarity_p": 0.9, "beta_alpha": 10.0, "beta_beta": 1.0, "smoothing": 1.0,
                 "negative_samples": None},
    "train": {"unroll_steps": 2, "max_epochs": 200, "learning_rate": 1e-2, "tolerance": 1e-4,
              "optimizer": "adam", "hidden_dim": 8, "leaky_slope": 0.2, "embedding_dim": 16},
    "simulate": {f.name: f.default for f in fields(SimConfig) if f.name not in ("seed", "epoch", "embedding_dim")},
    "evaluate": {"n_folds": 5, "min_contents": 6, "refit": "warm", "methods": ["ddan", "lr"],
                 "snapshots": None, "lr_iterations": 500},
    "rational": {"horizon": "max"},
    "analysis": {"min_years": 5, "top": 0.01, "upper": 0.10, "bins": 10},
}

# Keys whose default is None still need a type.
NULLABLE = {
    ("data", "n_snapshots"): int, ("strategy", "negative_samples"): int,
    ("evaluate", "snapshots"): list, ("simulate", "payoff_citation"): list,
    ("simulate", "payoff_venue"): list, ("simulate", "fixed_citation_strategy"): int,
    ("simulate", "fixed_venue_strategy"): int,
}


@dataclass
class RunConfig:
    seed: int
    data_dir: Path
    output_dir: Path
    epoch: int = 2000
    n_snapshots: int | None = None
    embedding_dim: int = 16
    strategy: StrategyParams = field(default_factory=StrategyParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    evaluate: EvalSettings = field(default_factory=EvalSettings)
    eval_snapshots: list | None = None
    horizon: object = "max"
    analysis: dict = field(default_factory=lambda: dict(DEFAULTS["analysis"]))
    source: Path | None = None


def _type_ok(value, default, nullable_type=None) -> bool:
    if value is None:
        return default is None
    expect = nullable_type or type(default)
    if isinstance(value, bool) or expect is bool:
        return isinstance(value, bool) and expect is bool
    if expect is float:
        return isinstance(value, (int, float))
    if expect is tuple:
        expect = list
    return isinstance(value, expect)


def _merge(doc: dict, problems: list) -> dict:
    merged = {}
    for section, defaults in DEFAULTS.items():
        given = doc.get(section, {})
        if not isinstance(given, dict):
            problems.append(f"[{section}] must be a table")
            given = {}
        for key in sorted(set(given) - set(defaults)):
            problems.append(f"[{section}] unknown key {key!r}")
        out = dict(defaults)
        for key, value in given.items():
            if key not in defaults:
                continue
            if key == "horizon":
                if value != "max" and not (isinstance(value, int) and not isinstance(value, bool) and value >= 1):
                    problems.append("[rational] horizon must be \"max\" or a positive integer")
                    continue
            elif not _type_ok(value, defaults[key], NULLABLE.get((section, key))):
                problems.append(f"[{section}] {key} has the wrong type ({type(value).__name__})")
                continue
            out[key] = value
        merged[section] = out
    return merged


def _build(factory, kwargs, label, problems):
    try:
        return factory(**kwargs)
    except StratNetError as exc:
        problems.append(f"[{label}] {exc}")
    except (TypeError, ValueError) as exc:
        problems.append(f"[{label}] {exc}")
    return None


def config_from_dict(doc: dict, base_dir: Path | None = None) -> RunConfig:
    problems = []
    seed = doc.get("seed")
    if seed is None:
        problems.append("seed is required (top-level integer 'seed')")
    elif isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        problems.append("seed must be a non-negative integer")
        seed = None
    top_known = set(DEFAULTS) | {"seed"}
    for key in sorted(set(doc) - top_known):
        problems.append(f"unknown top-level key {key!r}")
    m = _merge(doc, problems)
    seed_val = seed if isinstance(seed, int) else 0

    sp = _build(StrategyParams, dict(m["strategy"], seed=seed_val), "strategy", problems)
    tr_kwargs = {k: v for k, v in m["train"].items() if k != "embedding_dim"}
    tr = _build(TrainConfig, dict(tr_kwargs, seed=seed_val), "train", problems)
    if m["train"]["embedding_dim"] < 2:
        problems.append("[train] embedding_dim must be >= 2")
    sim_kwargs = dict(m["simulate"], seed=seed_val, epoch=m["data"]["epoch"],
                      embedding_dim=m["train"]["embedding_dim"])
    for key in ("group_size_probs", "payoff_citation", "payoff_venue"):
        if sim_kwargs.get(key) is not None:
            sim_kwargs[key] = tuple(sim_kwargs[key])
    sim = _build(SimConfig, sim_kwargs, "simulate", problems)
    if sim is not None:
        problems.extend(f"[simulate] {p}" for p in sim.problems())
    ev = m["evaluate"]
    if ev["refit"] not in ("warm", "scratch"):
        problems.append("[evaluate] refit must be \"warm\" or \"scratch\"")
    if not set(ev["methods"]) <= {"ddan", "lr"} or not ev["methods"]:
        problems.append("[evaluate] methods must be a non-empty subset of [\"ddan\", \"lr\"]")
    if ev["n_folds"] < 2:
        problems.append("[evaluate] n_folds must be >= 2")
    if ev["min_contents"] < ev["n_folds"]:
        problems.append("[evaluate] min_contents must be at least n_folds")
    an = m["analysis"]
    if not 0 < an["top"] < an["upper"] < 1:
        problems.append("[analysis] need 0 < top < upper < 1")
    if an["min_years"] < 2 or an["bins"] < 1:
        problems.append("[analysis] min_years must be >= 2 and bins >= 1")
    if problems:
        raise ConfigError(problems)

    base_dir = base_dir or Path.cwd()
    settings = EvalSettings(seed=seed, n_folds=ev["n_folds"], min_contents=ev["min_contents"],
                            refit=ev["refit"], methods=tuple(ev["methods"]),
                            lr_iterations=ev["lr_iterations"])
    return RunConfig(
        seed=seed,
        data_dir=(base_dir / m["paths"]["data_dir"]).resolve(),
        output_dir=(base_dir / m["paths"]["output_dir"]).resolve(),
        epoch=m["data"]["epoch"], n_snapshots=m["data"]["n_snapshots"],
        embedding_dim=m["train"]["embedding_dim"],
        strategy=sp, train=tr, sim=sim, evaluate=settings,
        eval_snapshots=ev["snapshots"], horizon=m["rational"]["horizon"], analysis=an,
    )


def validate_config(path) -> RunConfig:
    """Parse, fill defaults and check a TOML run configuration.

    Relative paths resolve against the config file's directory.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file {path} does not exist"]) from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    return replace(config_from_dict(doc, path.parent), source=path)
