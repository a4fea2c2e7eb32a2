"""Top-k approximate subgraph matching on vertex-labeled graphs.

Candidate matches are ranked by the chi-square significance of their
two-hop neighborhood similarity against the target graph's background
similarity distribution.
"""

from sigmatch.graph import GraphFormatError, LabeledGraph, load_graph, save_graph
from sigmatch.index import (
    DistributionStats,
    IndexSet,
    SymbolTable,
    build_index_set,
    build_indexes,
    build_symbol_table,
    compute_distribution,
    load_index,
    persist_index,
)
from sigmatch.matcher import CandidatePair, MatchResult, top_k_match
from sigmatch.similarity import chi_square, symbolize, vertex_similarity

__all__ = [
    "CandidatePair",
    "DistributionStats",
    "GraphFormatError",
    "IndexSet",
    "LabeledGraph",
    "MatchResult",
    "SymbolTable",
    "build_index_set",
    "build_indexes",
    "build_symbol_table",
    "chi_square",
    "compute_distribution",
    "load_graph",
    "load_index",
    "persist_index",
    "save_graph",
    "symbolize",
    "top_k_match",
    "vertex_similarity",
]
