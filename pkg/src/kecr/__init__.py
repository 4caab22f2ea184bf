"""Conversational recommender that plans its replies over a knowledge graph.

The engine embeds graph entities with a relational graph convolution,
tracks dialogue context with a GRU, aligns the two representation spaces
by maximising a mutual-information bound, and serves each turn through a
three-way action policy plus an explicit two-step walk over the graph.
"""

__version__ = "0.1.0"

from .errors import KecrError
from .kg import KnowledgeGraph, expand_graph, load_triples
from .params import ParameterStore, load_checkpoint, save_checkpoint

__all__ = [
    "KecrError",
    "KnowledgeGraph",
    "expand_graph",
    "load_triples",
    "ParameterStore",
    "load_checkpoint",
    "save_checkpoint",
    "__version__",
]
