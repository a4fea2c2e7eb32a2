"""Vertex-pair similarity, deviation symbols, symbol sequences and chi-square.

Neighborhoods are label multisets stored as label-count vectors (LCVs): row
``u`` counts the labels of ``u`` and of every neighbor of ``u``.  For a target
vertex ``u`` and a query vertex ``v``::

    I   = sum_l min(lcv_u[l], lcv_v[l])     # recalled labels
    D   = sum_l max(0, lcv_v[l] - lcv_u[l]) # query labels not recalled
    eta = I / (I + D ** gamma)

Extra labels on the target side never lower ``eta``; unrecalled query
labels are penalized through the exponent ``gamma``.
"""

from __future__ import annotations

from collections import Counter
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from sigmatch.graph import LabeledGraph
    from sigmatch.index import DistributionStats, SymbolTable

# Upper bound on elements materialized per block in the broadcast kernels.
_BLOCK_ELEMENTS = 1 << 21


def as_sets(lcv: np.ndarray) -> np.ndarray:
    """Clip counts to presence flags (set semantics instead of multisets)."""
    return np.minimum(lcv, 1)


def _eta_from_counts(inter: np.ndarray, query_size: np.ndarray, gamma: float) -> np.ndarray:
    inter = inter.astype(np.float64)
    missing = query_size.astype(np.float64) - inter
    denom = inter + np.power(missing, gamma)
    out = np.zeros(np.broadcast(inter, denom).shape, dtype=np.float64)
    np.divide(inter, denom, out=out, where=inter > 0)
    return out


def vertex_similarity(lcv_u: Sequence[int], lcv_v: Sequence[int], gamma: float = 3.0) -> float:
    """Similarity of target neighborhood ``lcv_u`` recalling query neighborhood ``lcv_v``."""
    a = np.asarray(lcv_u)
    b = np.asarray(lcv_v)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"label-count vectors differ in shape: {a.shape} vs {b.shape}")
    inter = int(np.minimum(a, b).sum())
    missing = int(b.sum()) - inter
    if inter == 0:
        return 0.0
    return inter / (inter + float(missing) ** gamma)


def _pad_to_common_width(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    width = max(a.shape[1], b.shape[1])

    def pad(m: np.ndarray) -> np.ndarray:
        if m.shape[1] == width:
            return m
        return np.hstack([m, np.zeros((len(m), width - m.shape[1]), dtype=m.dtype)])

    return pad(a), pad(b)


def similarity_matrix(target_lcv: np.ndarray, query_lcv: np.ndarray, gamma: float = 3.0) -> np.ndarray:
    """``out[i, j]`` = similarity of target row ``i`` recalling query row ``j``.

    A narrower matrix is zero-padded on the right; empty label columns do not
    change any similarity.
    """
    a, b = _pad_to_common_width(np.asarray(target_lcv), np.asarray(query_lcv))
    sizes = b.sum(axis=1)
    out = np.empty((len(a), len(b)), dtype=np.float64)
    step = max(1, _BLOCK_ELEMENTS // max(1, b.shape[0] * b.shape[1]))
    for lo in range(0, len(a), step):
        block = a[lo : lo + step]
        inter = np.minimum(block[:, None, :], b[None, :, :]).sum(axis=2)
        out[lo : lo + step] = _eta_from_counts(inter, sizes[None, :], gamma)
    return out


def paired_similarity(target_lcv: np.ndarray, query_lcv: np.ndarray, gamma: float = 3.0) -> np.ndarray:
    """Row-aligned similarities: ``out[p]`` compares ``target_lcv[p]`` with ``query_lcv[p]``."""
    inter = np.minimum(target_lcv, query_lcv).sum(axis=1)
    return _eta_from_counts(inter, query_lcv.sum(axis=1), gamma)


def symbolize_array(eta: np.ndarray, stats: DistributionStats, table: SymbolTable) -> np.ndarray:
    """Vectorized :func:`symbolize`; returns 1-based symbol ids as ``int64``."""
    eta = np.asarray(eta, dtype=np.float64)
    ones = np.ones(eta.shape, dtype=np.int64)
    if stats.delta == 0 or table.tau == 1:
        return ones
    kappa = table.kappa
    t = (eta - stats.psi) / stats.delta
    with np.errstate(invalid="ignore"):
        raw = np.floor((t - 1.0) / kappa) + 1.0
    idx = np.clip(np.nan_to_num(raw, nan=1.0), 1, table.tau).astype(np.int64)
    # Snap to the half-open interval edges 1 + i*kappa exactly as written.
    lower = 1.0 + (idx - 1) * kappa
    idx = np.where((idx > 1) & (t < lower), idx - 1, idx)
    upper = 1.0 + idx * kappa
    idx = np.where((idx < table.tau) & (t >= upper), idx + 1, idx)
    return np.where(eta <= stats.psi, ones, idx)


def symbolize(eta: float, stats: DistributionStats, table: SymbolTable) -> int:
    """Map a similarity to its deviation symbol (1-based).

    Similarities at or below the mean fold into symbol 1; deviations past
    the last symbol's range clamp to ``tau``.
    """
    return int(symbolize_array(np.array([eta]), stats, table)[0])


def chi_square(sequence: Sequence[int], table: SymbolTable) -> float:
    """Pearson chi-square of observed symbol counts against ``len(sequence) * Pr``.

    Only observed symbols are visited; every unobserved symbol ``i``
    contributes exactly its expected count ``L * Pr(i)``, summed in one go.
    """
    if len(sequence) == 0:
        raise ValueError("cannot score an empty symbol sequence")
    length = len(sequence)
    probs = table.probabilities
    total = 0.0
    observed_mass = 0.0
    counts = Counter(sequence)
    for symbol in sorted(counts):
        p = float(probs[symbol - 1])
        expected = length * p
        total += (counts[symbol] - expected) ** 2 / expected
        observed_mass += p
    if len(counts) < table.tau:
        total += length * max(0.0, 1.0 - observed_mass)
    return total


def greedy_mapping_from_matrix(
    target_nbrs: np.ndarray, query_nbrs: np.ndarray, eta_sub: np.ndarray
) -> list[tuple[int | None, int]]:
    """Greedy best-first assignment on a ``(len(target_nbrs), len(query_nbrs))`` block.

    Repeatedly takes the highest-similarity pair (ties: smaller query id,
    then smaller target id) among unused vertices.  Query neighbors left
    over once the target side runs out map to ``None``, in ascending id order.
    """
    nt, nq = eta_sub.shape
    mapping: list[tuple[int | None, int]] = []
    if nq == 0:
        return mapping
    if nt:
        # Neighbor ids are ascending, so column-major position encodes the
        # (query id, target id) tie-break and a stable sort preserves it.
        flat = np.ascontiguousarray(eta_sub.T).ravel()
        order = np.argsort(-flat, kind="stable").tolist()
        tn = target_nbrs.tolist()
        qn = query_nbrs.tolist()
        used_t: set[int] = set()
        used_q: set[int] = set()
        limit = min(nt, nq)
        for pos in order:
            j, i = divmod(pos, nt)
            if i in used_t or j in used_q:
                continue
            used_t.add(i)
            used_q.add(j)
            mapping.append((tn[i], qn[j]))
            if len(mapping) == limit:
                break
    matched = {q for _, q in mapping}
    mapping.extend((None, int(q)) for q in query_nbrs if int(q) not in matched)
    return mapping


class PairScorer:
    """Scores (target vertex, query vertex) pairs for one query against one target.

    Holds the full target-by-query similarity matrix and its symbol matrix so
    every pair lookup during seeding and expansion is an array read.  Query
    LCVs must already live in the target's label id space (see
    :func:`sigmatch.matcher.index_query`).
    """

    def __init__(
        self,
        target: LabeledGraph,
        query: LabeledGraph,
        target_lcv: np.ndarray,
        query_lcv: np.ndarray,
        stats: DistributionStats,
        table: SymbolTable,
        gamma: float = 3.0,
    ):
        self.target = target
        self.query = query
        self.stats = stats
        self.table = table
        self.gamma = gamma
        self.eta = similarity_matrix(target_lcv, query_lcv, gamma)
        self.symbols = symbolize_array(self.eta, stats, table)
        self._scores: dict[tuple[int, int], float] = {}

    def mapping(self, v: int, q: int) -> list[tuple[int | None, int]]:
        tn = self.target.neighbors(v)
        qn = self.query.neighbors(q)
        return greedy_mapping_from_matrix(tn, qn, self.eta[tn][:, qn])

    def sequence(self, v: int, q: int) -> list[int]:
        seq = [int(self.symbols[v, q])]
        for t, qq in self.mapping(v, q):
            seq.append(1 if t is None else int(self.symbols[t, qq]))
        return seq

    def score(self, v: int, q: int) -> float:
        key = (v, q)
        cached = self._scores.get(key)
        if cached is None:
            cached = self._scores[key] = chi_square(self.sequence(v, q), self.table)
        return cached


def greedy_neighbor_mapping(
    v: int,
    q: int,
    target: LabeledGraph,
    query: LabeledGraph,
    target_lcv: np.ndarray,
    query_lcv: np.ndarray,
    gamma: float = 3.0,
) -> list[tuple[int | None, int]]:
    tn = target.neighbors(v)
    qn = query.neighbors(q)
    eta = similarity_matrix(target_lcv[tn], query_lcv[qn], gamma)
    return greedy_mapping_from_matrix(tn, qn, eta)


def vertex_symbol_sequence(
    v: int,
    q: int,
    target: LabeledGraph,
    query: LabeledGraph,
    target_lcv: np.ndarray,
    query_lcv: np.ndarray,
    stats: DistributionStats,
    table: SymbolTable,
    gamma: float = 3.0,
) -> list[int]:
    """Symbol of ``(v, q)`` followed by one symbol per neighbor of ``q``.

    Length is ``deg(q) + 1``; unmatched query neighbors contribute symbol 1.
    """
    target_lcv, query_lcv = _pad_to_common_width(target_lcv, query_lcv)
    seq = [symbolize(vertex_similarity(target_lcv[v], query_lcv[q], gamma), stats, table)]
    for t, qq in greedy_neighbor_mapping(v, q, target, query, target_lcv, query_lcv, gamma):
        if t is None:
            seq.append(1)
        else:
            seq.append(symbolize(vertex_similarity(target_lcv[t], query_lcv[qq], gamma), stats, table))
    return seq

