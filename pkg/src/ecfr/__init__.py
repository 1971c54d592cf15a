"""Embedding CFR for hold'em-style poker with reduced decks."""

__version__ = "0.1.0"

from .cards import GameConfig, load_config, preset
from .embedding_cfr import EmbeddingCFR
from .solver_core import TabularCFR
from .best_response import exploitability

__all__ = ["GameConfig", "load_config", "preset", "EmbeddingCFR", "TabularCFR", "exploitability", "__version__"]
