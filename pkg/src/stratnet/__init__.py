"""Strategy inference for authors in temporal author-content-venue networks."""

from .errors import NumericalError, StratNetError
from .graph import Kind, TemporalGraph, View, ingest, ingest_dir
from .strategies import CompositeStrategy, Space, StrategyParams
from .ddan import ModelState, TrainConfig, train

__all__ = [
    "CompositeStrategy", "Kind", "ModelState", "NumericalError", "Space", "StratNetError",
    "StrategyParams", "TemporalGraph", "TrainConfig", "View", "ingest", "ingest_dir", "train",
]
__version__ = "0.1.0"
