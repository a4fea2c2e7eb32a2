"""Online query answering: seed pairs, heap-driven greedy expansion, top-k."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

import numpy as np

from sigmatch.graph import EdgeList, LabeledGraph
from sigmatch.index import CSRList, IndexSet, build_indexes, label_count_vectors
from sigmatch.similarity import PairScorer, as_sets


@dataclass(frozen=True)
class CandidatePair:
    target_vertex: int
    query_vertex: int
    score: float = float("nan")
    eta: float = float("nan")

    def heap_key(self) -> tuple[float, float, int, int]:
        # heapq is a min-heap: negate score and similarity for max-first order.
        return (-self.score, -self.eta, self.query_vertex, self.target_vertex)

    @classmethod
    def from_key(cls, key: tuple[float, float, int, int]) -> CandidatePair:
        return cls(key[3], key[2], -key[0], -key[1])


@dataclass
class MatchResult:
    pairs: dict[int, int]
    matched_edges: EdgeList
    aggregate_score: float
    seed_score: float
    rank: int
    heap_pushes: int = 0

    @property
    def target_vertices(self) -> set[int]:
        return set(self.pairs.values())

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "score": self.aggregate_score,
            "seed_score": self.seed_score,
            "pairs": [[q, v] for q, v in sorted(self.pairs.items())],
            "edges": [list(e) for e in self.matched_edges],
        }


@dataclass(frozen=True, eq=False)
class QueryIndex:
    """Query-side indexes expressed in the target's label id space.

    Query labels unknown to the target get ids past the target's label
    range, so they never pair with a target vertex but still count as
    unrecalled labels in the similarity.
    """

    labels: np.ndarray
    label_names: tuple[str, ...]
    il: dict[int, np.ndarray]
    lnl: CSRList
    lcv: np.ndarray


def index_query(query: LabeledGraph, target_label_names: tuple[str, ...]) -> QueryIndex:
    vocab = {name: i for i, name in enumerate(target_label_names)}
    names = list(target_label_names)
    for name in query.label_names:
        if name not in vocab:
            vocab[name] = len(names)
            names.append(name)
    remap = np.array([vocab[name] for name in query.label_names], dtype=np.int32)
    labels = remap[query.labels] if query.num_vertices else np.empty(0, np.int32)
    _, lnl, _ = build_indexes(query)
    lnl = CSRList(lnl.offsets, remap[lnl.values].astype(np.int64) if len(lnl.values) else lnl.values)
    il = {}
    for q in range(query.num_vertices):
        il.setdefault(int(labels[q]), []).append(q)
    lcv = label_count_vectors(labels, query.indptr, query.indices, len(names))
    return QueryIndex(
        labels=labels,
        label_names=tuple(names),
        il={k: np.array(v, dtype=np.int64) for k, v in sorted(il.items())},
        lnl=lnl,
        lcv=lcv,
    )


def make_scorer(target: LabeledGraph, query: LabeledGraph, idx: IndexSet, qidx: QueryIndex) -> PairScorer:
    q_lcv = as_sets(qidx.lcv) if idx.set_semantics else qidx.lcv
    return PairScorer(target, query, idx.scoring_lcv(), q_lcv, idx.stats, idx.symbols, idx.gamma)


def generate_candidate_pairs(idx: IndexSet, qidx: QueryIndex) -> list[CandidatePair]:
    """Label-equality cross product, ordered by label id, query vertex, target vertex."""
    pairs = []
    n_labels = len(idx.il)
    for label, qverts in qidx.il.items():
        if label >= n_labels:
            continue
        tverts = idx.il[label]
        for q in qverts.tolist():
            pairs.extend(CandidatePair(v, q) for v in tverts.tolist())
    return pairs


def score_candidates(pairs: list[CandidatePair], scorer: PairScorer) -> list[CandidatePair]:
    return [
        CandidatePair(p.target_vertex, p.query_vertex, scorer.score(p.target_vertex, p.query_vertex),
                      float(scorer.eta[p.target_vertex, p.query_vertex]))
        for p in pairs
    ]


def induced_edges(g: LabeledGraph, pairs: dict[int, int]) -> EdgeList:
    image = set(pairs.values())
    out = []
    for v in sorted(image):
        for w in g.neighbors(v).tolist():
            if w > v and w in image:
                out.append((v, w))
    return out


@dataclass
class MatchSession:
    """State for one top-k run: the primary heap and targets already consumed."""

    target: LabeledGraph
    query: LabeledGraph
    scorer: PairScorer
    target_labels: np.ndarray
    query_labels: np.ndarray
    k: int
    primary_heap: list = field(default_factory=list)
    done_targets: set[int] = field(default_factory=set)

    def _pair(self, v: int, q: int) -> CandidatePair:
        return CandidatePair(v, q, self.scorer.score(v, q), float(self.scorer.eta[v, q]))

    def seed(self, pairs: list[CandidatePair]) -> None:
        self.primary_heap = [p.heap_key() for p in pairs]
        heapq.heapify(self.primary_heap)

    def _expand(self, v: int, q: int, matched_q: dict[int, int], heap: list) -> int:
        pushes = 0
        for qn in self.query.neighbors(q).tolist():
            if qn in matched_q:
                continue
            want = self.query_labels[qn]
            for vn in self.target.neighbors(v).tolist():
                if vn in self.done_targets or self.target_labels[vn] != want:
                    continue
                pair = self._pair(vn, qn)
                heapq.heappush(heap, pair.heap_key())
                pushes += 1
        return pushes

    def next_match(self, rank: int) -> MatchResult | None:
        while self.primary_heap:
            seed = CandidatePair.from_key(heapq.heappop(self.primary_heap))
            if seed.target_vertex not in self.done_targets:
                break
        else:
            return None

        matched: dict[int, int] = {}
        scores: list[float] = []
        secondary: list = []
        pushes = 0

        def add(pair: CandidatePair) -> int:
            matched[pair.query_vertex] = pair.target_vertex
            self.done_targets.add(pair.target_vertex)
            scores.append(pair.score)
            return self._expand(pair.target_vertex, pair.query_vertex, matched, secondary)

        pushes += add(seed)
        size = self.query.num_vertices
        while secondary and len(matched) < size:
            pair = CandidatePair.from_key(heapq.heappop(secondary))
            if pair.target_vertex in self.done_targets or pair.query_vertex in matched:
                continue
            pushes += add(pair)

        return MatchResult(
            pairs=matched,
            matched_edges=induced_edges(self.target, matched),
            aggregate_score=float(sum(scores)),
            seed_score=seed.score,
            rank=rank,
            heap_pushes=pushes,
        )


def top_k_match(target: LabeledGraph, query: LabeledGraph, idx: IndexSet, k: int = 1) -> list[MatchResult]:
    """Return up to ``k`` greedy matches of ``query`` in ``target``, best seed first.

    Target vertices consumed by one match are unavailable to later ones, so
    fewer than ``k`` matches come back once the seed heap runs dry.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    qidx = index_query(query, idx.label_names)
    scorer = make_scorer(target, query, idx, qidx)
    target_labels = target.labels
    # Unknown query labels sit past the target range and never compare equal.
    session = MatchSession(target, query, scorer, target_labels, qidx.labels, k)
    session.seed(score_candidates(generate_candidate_pairs(idx, qidx), scorer))
    results = []
    while len(results) < k:
        match = session.next_match(len(results) + 1)
        if match is None:
            break
        results.append(match)
    return results


def format_matches(matches: list[MatchResult], fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps([m.to_dict() for m in matches], indent=2) + "\n"
    if not matches:
        return "0 matches\n"
    lines = []
    for m in matches:
        lines.append(f"match {m.rank} {m.aggregate_score!r}")
        lines.extend(f"m {q} {v}" for q, v in sorted(m.pairs.items()))
        lines.extend(f"me {u} {w}" for u, w in m.matched_edges)
    return "\n".join(lines) + "\n"
