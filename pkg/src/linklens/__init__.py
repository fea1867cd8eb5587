"""Link-privacy analysis for social-token platforms spanning an L1 and an L2 chain."""

from .detect import detect_bonus_hunters, detect_wash_trading, infer_cross_layer_links
from .entropy import entropy_series, growth_correlation, structural_entropy
from .graph import Mode, build_graph, components
from .ingest import Dataset, assemble, load_bundle
from .model import Account, Address, Layer, Transaction
from .synth import generate, load_spec
from .ties import classify_ties, holding_relation

__version__ = "0.1.0"

__all__ = [
    "Account",
    "Address",
    "Dataset",
    "Layer",
    "Mode",
    "Transaction",
    "assemble",
    "build_graph",
    "classify_ties",
    "components",
    "detect_bonus_hunters",
    "detect_wash_trading",
    "entropy_series",
    "generate",
    "growth_correlation",
    "holding_relation",
    "infer_cross_layer_links",
    "load_bundle",
    "load_spec",
    "structural_entropy",
]
