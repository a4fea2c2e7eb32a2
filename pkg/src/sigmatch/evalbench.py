"""Benchmark harness: query extraction, noise injection, accuracy, BA graphs.

A benchmark protocol crosses query sizes with noise types and draws a fixed
number of queries per cell.  Every query is cut out of the target graph by a
seeded breadth-first walk (the *exact* query, which also serves as ground
truth), optionally perturbed, then matched; accuracy is the fraction of
ground-truth edges whose endpoint-label pair is recovered by the top match.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from sigmatch.graph import LabeledGraph, save_graph
from sigmatch.index import IndexSet
from sigmatch.matcher import MatchResult, top_k_match

logger = logging.getLogger(__name__)

NOISE_TYPES = ("exact", "nLabel", "nVAdd", "nVDel", "nEAdd", "nEDel")
DEFAULT_SIZES = (3, 5, 7, 9, 11, 13)
CSV_COLUMNS = (
    "query_id", "size", "noise_type", "noise_count", "seed",
    "accuracy", "latency_s", "matched_vertices", "matched_edges",
)


@dataclass(frozen=True)
class QuerySpec:
    size: int
    noise_type: str = "exact"
    noise_count: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.noise_type not in NOISE_TYPES:
            raise ValueError(f"unknown noise type {self.noise_type!r}")
        if self.size < 1:
            raise ValueError("query size must be positive")
        if (self.noise_type == "exact") != (self.noise_count == 0):
            raise ValueError("noise_count must be 0 exactly for exact queries")
        if self.noise_count not in (0, 1, 2):
            raise ValueError("noise_count must be 1 or 2 for noisy queries")


def derive_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence([int(e) for e in entropy]).generate_state(1)[0])


def generate_barabasi_albert(n: int, avg_degree: int, num_labels: int, seed: int = 0) -> LabeledGraph:
    """Preferential-attachment graph with ``m = ceil(avg_degree / 2)`` edges per new vertex.

    Starts from a star on ``m + 1`` vertices, so the edge count is exactly
    ``m * (n - m)``.  Labels ``"0" .. str(num_labels - 1)`` are drawn uniformly.
    """
    m = math.ceil(avg_degree / 2)
    if m < 1 or num_labels < 1 or n <= m:
        raise ValueError(f"invalid BA parameters n={n}, avg_degree={avg_degree}, num_labels={num_labels}")
    rng = np.random.default_rng(seed)
    edges = [(0, i) for i in range(1, m + 1)]
    repeated = [0] * m + list(range(1, m + 1))
    for source in range(m + 1, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(repeated[int(rng.integers(len(repeated)))])
        chosen = sorted(targets)
        edges.extend((t, source) for t in chosen)
        repeated.extend(chosen)
        repeated.extend([source] * m)
    labels = rng.integers(num_labels, size=n)
    return LabeledGraph.from_edges([str(x) for x in labels], edges)


def extract_exact_query(
    g: LabeledGraph, size: int, seed: int = 0, max_retries: int = 100
) -> tuple[LabeledGraph, list[int]]:
    """Connected induced query of ``size`` vertices grown breadth-first from a random start.

    Returns the query and its provenance: query vertex ``i`` is target vertex
    ``provenance[i]``.
    """
    if size < 1 or g.num_vertices < size:
        raise ValueError(f"cannot extract a {size}-vertex query from {g!r}")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        start = int(rng.integers(g.num_vertices))
        visited = [start]
        seen = {start}
        frontier = deque([start])
        while frontier and len(visited) < size:
            u = frontier.popleft()
            nbrs = g.neighbors(u).copy()
            rng.shuffle(nbrs)
            for w in nbrs.tolist():
                if w not in seen:
                    seen.add(w)
                    visited.append(w)
                    frontier.append(w)
                    if len(visited) == size:
                        break
        if len(visited) == size:
            return g.subgraph(visited), visited
    raise RuntimeError(f"no connected {size}-vertex region found after {max_retries} starts")


# -- perturbation --------------------------------------------------------------


def _components(vertices: set[int], adj: dict[int, set[int]]) -> list[set[int]]:
    left = set(vertices)
    comps = []
    while left:
        start = min(left)
        comp = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w in left and w not in comp:
                    comp.add(w)
                    stack.append(w)
        left -= comp
        comps.append(comp)
    return comps


def _connected_without(adj: dict[int, set[int]], vertex: int | None = None, edge=None) -> bool:
    verts = set(adj) - ({vertex} if vertex is not None else set())
    if not verts:
        return True
    sub = {u: adj[u] - ({vertex} if vertex is not None else set()) for u in verts}
    if edge is not None:
        a, b = edge
        sub[a] = sub[a] - {b}
        sub[b] = sub[b] - {a}
    return len(_components(verts, sub)) == 1


@dataclass
class PerturbedQuery:
    graph: LabeledGraph
    applied: int
    warnings: list[str] = field(default_factory=list)


def perturb_query(
    q: LabeledGraph, spec: QuerySpec, label_universe: Sequence[str], rng: np.random.Generator | None = None
) -> PerturbedQuery:
    """Apply ``spec.noise_count`` edits of type ``spec.noise_type`` to ``q``.

    The result is always connected; deletions that would split the query
    prefer non-cut vertices / non-bridge edges and otherwise keep the
    largest component.  Impossible edits are skipped and reported.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    labels = dict(enumerate(q.vertex_label_names()))
    adj = {u: set(q.neighbors(u).tolist()) for u in range(q.num_vertices)}
    universe = sorted(set(label_universe))
    warnings: list[str] = []
    applied = 0

    def pick(options):
        return options[int(rng.integers(len(options)))]

    def keep_largest():
        comps = _components(set(adj), adj)
        best = max(comps, key=lambda c: (len(c), -min(c)))
        for u in set(adj) - best:
            for w in adj.pop(u):
                if w in adj:
                    adj[w].discard(u)
            labels.pop(u)

    for _ in range(spec.noise_count):
        kind = spec.noise_type
        verts = sorted(adj)
        if kind == "nLabel":
            u = pick(verts) if verts else None
            choices = [x for x in universe if u is not None and x != labels[u]]
            if not choices:
                warnings.append("nLabel: no alternative label available")
                continue
            labels[u] = pick(choices)
        elif kind == "nVAdd":
            if not universe:
                warnings.append("nVAdd: empty label universe")
                continue
            new = max(adj, default=-1) + 1
            anchor = pick(verts) if verts else None
            labels[new] = pick(universe)
            adj[new] = set()
            if anchor is not None:
                adj[new].add(anchor)
                adj[anchor].add(new)
        elif kind == "nVDel":
            if len(verts) <= 1:
                warnings.append("nVDel: query too small to delete a vertex")
                continue
            safe = [u for u in verts if _connected_without(adj, vertex=u)]
            u = pick(safe or verts)
            for w in adj.pop(u):
                adj[w].discard(u)
            labels.pop(u)
            if not safe:
                keep_largest()
        elif kind == "nEAdd":
            missing = [(a, b) for i, a in enumerate(verts) for b in verts[i + 1:] if b not in adj[a]]
            if not missing:
                warnings.append("nEAdd: query is complete")
                continue
            a, b = pick(missing)
            adj[a].add(b)
            adj[b].add(a)
        elif kind == "nEDel":
            present = [(a, b) for a in verts for b in sorted(adj[a]) if a < b]
            if not present:
                warnings.append("nEDel: query has no edges")
                continue
            safe = [e for e in present if _connected_without(adj, edge=e)]
            a, b = pick(safe or present)
            adj[a].discard(b)
            adj[b].discard(a)
            if not safe:
                keep_largest()
        applied += 1

    for w in warnings:
        logger.warning("perturbation skipped (seed %d): %s", spec.seed, w)
    order = sorted(adj)
    pos = {u: i for i, u in enumerate(order)}
    edges = [(pos[a], pos[b]) for a in order for b in adj[a] if a < b]
    graph = LabeledGraph.from_edges([labels[u] for u in order], edges)
    return PerturbedQuery(graph, applied, warnings)


# -- accuracy ------------------------------------------------------------------


def _label_pairs(g: LabeledGraph, edges) -> Counter:
    return Counter(tuple(sorted((g.label_of(u), g.label_of(w)))) for u, w in edges)


def edge_retrieval_accuracy(query: LabeledGraph, match: MatchResult | None, g: LabeledGraph) -> float:
    """Fraction of ``query`` edges whose endpoint-label pair is covered by the
    match's induced edges in ``g`` (multiset intersection, each retrieved
    edge used at most once)."""
    if match is None or not match.pairs:
        return 0.0
    if query.num_edges == 0:
        wanted = set(query.vertex_label_names())
        return 1.0 if any(g.label_of(v) in wanted for v in match.pairs.values()) else 0.0
    want = _label_pairs(query, query.edges())
    got = _label_pairs(g, match.matched_edges)
    return sum((want & got).values()) / query.num_edges


# -- protocol ------------------------------------------------------------------


@dataclass(frozen=True)
class Protocol:
    sizes: tuple[int, ...] = DEFAULT_SIZES
    noise_types: tuple[str, ...] = NOISE_TYPES
    queries_per_cell: int = 20
    master_seed: int = 0
    noise_counts: tuple[int, ...] = (1, 2)
    # Share the exact base query across noise types within (size, i).
    paired_bases: bool = True

    def __post_init__(self):
        for t in self.noise_types:
            if t not in NOISE_TYPES:
                raise ValueError(f"unknown noise type {t!r}")
        for s in self.sizes:
            if s < 1:
                raise ValueError(f"invalid query size {s}")
        if self.queries_per_cell < 1:
            raise ValueError("queries_per_cell must be positive")
        if not self.noise_counts or any(c not in (1, 2) for c in self.noise_counts):
            raise ValueError("noise counts must be drawn from {1, 2}")

    @property
    def total(self) -> int:
        return len(self.sizes) * len(self.noise_types) * self.queries_per_cell


@dataclass
class QueryCase:
    query_id: int
    spec: QuerySpec
    base: LabeledGraph
    provenance: list[int]
    query: LabeledGraph
    applied: int
    warnings: list[str]


def generate_queries(g: LabeledGraph, protocol: Protocol) -> Iterator[QueryCase]:
    """Deterministic query corpus for ``protocol``, ordered by (size, noise type, i)."""
    universe = g.label_names
    qid = 0
    for size in protocol.sizes:
        for t_idx, noise in enumerate(protocol.noise_types):
            type_code = NOISE_TYPES.index(noise)
            for i in range(protocol.queries_per_cell):
                seed = derive_seed(protocol.master_seed, size, type_code, i)
                base_seed = derive_seed(protocol.master_seed, size, i) if protocol.paired_bases else seed
                base, prov = extract_exact_query(g, size, base_seed)
                if noise == "exact":
                    spec = QuerySpec(size, "exact", 0, seed)
                    yield QueryCase(qid, spec, base, prov, base, 0, [])
                else:
                    count = protocol.noise_counts[i % len(protocol.noise_counts)]
                    spec = QuerySpec(size, noise, count, seed)
                    pert = perturb_query(base, spec, universe)
                    yield QueryCase(qid, spec, base, prov, pert.graph, pert.applied, pert.warnings)
                qid += 1


def write_query_corpus(cases: Sequence[QueryCase], outdir: str | os.PathLike) -> Path:
    """Write each query (and its exact base) in graph text format plus ``manifest.json``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for case in cases:
        qname = f"q{case.query_id:04d}.graph"
        bname = f"q{case.query_id:04d}.exact.graph"
        save_graph(case.query, out / qname)
        save_graph(case.base, out / bname)
        manifest.append({
            "query_id": case.query_id,
            "file": qname,
            "ground_truth": bname,
            "size": case.spec.size,
            "noise_type": case.spec.noise_type,
            "noise_count": case.spec.noise_count,
            "applied": case.applied,
            "seed": case.spec.seed,
            "provenance": case.provenance,
            "warnings": case.warnings,
        })
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return path


@dataclass(frozen=True)
class QueryRecord:
    query_id: int
    size: int
    noise_type: str
    noise_count: int
    seed: int
    accuracy: float
    latency_s: float
    matched_vertices: int
    matched_edges: int


@dataclass
class BenchmarkReport:
    records: list[QueryRecord]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([r.accuracy for r in self.records])) if self.records else float("nan")

    @property
    def mean_latency(self) -> float:
        return float(np.mean([r.latency_s for r in self.records])) if self.records else float("nan")

    def group_means(self, by: Sequence[str] = ("noise_type", "size")) -> dict[tuple, tuple[float, float]]:
        """``{group key: (mean accuracy, mean latency)}``."""
        groups: dict[tuple, list[QueryRecord]] = {}
        for r in self.records:
            groups.setdefault(tuple(getattr(r, f) for f in by), []).append(r)
        return {
            key: (float(np.mean([r.accuracy for r in rs])), float(np.mean([r.latency_s for r in rs])))
            for key, rs in groups.items()
        }

    def accuracy_by_noise(self) -> dict[str, float]:
        return {key[0]: acc for key, (acc, _) in self.group_means(("noise_type",)).items()}

    def to_csv(self, path: str | os.PathLike | None = None, timing: bool = True) -> str:
        """Serialize one row per query.  With ``timing=False`` the latency column
        is left empty so reports can be compared byte for byte."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in sorted(self.records, key=lambda r: r.query_id):
            writer.writerow([
                r.query_id, r.size, r.noise_type, r.noise_count, r.seed,
                repr(r.accuracy), repr(r.latency_s) if timing else "",
                r.matched_vertices, r.matched_edges,
            ])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def run_benchmark(
    g: LabeledGraph, idx: IndexSet, protocol: Protocol = Protocol(), k: int = 1, check_digest: bool = True
) -> BenchmarkReport:
    """Run every query of ``protocol`` against ``g`` and score its top-1 match
    against the exact base query.  Latency covers the online phase only."""
    if check_digest:
        idx.check_graph(g)
    records = []
    for case in generate_queries(g, protocol):
        start = time.perf_counter()
        matches = top_k_match(g, case.query, idx, k=k)
        latency = time.perf_counter() - start
        best = matches[0] if matches else None
        records.append(QueryRecord(
            query_id=case.query_id,
            size=case.spec.size,
            noise_type=case.spec.noise_type,
            noise_count=case.spec.noise_count,
            seed=case.spec.seed,
            accuracy=edge_retrieval_accuracy(case.base, best, g),
            latency_s=latency,
            matched_vertices=len(best.pairs) if best else 0,
            matched_edges=len(best.matched_edges) if best else 0,
        ))
    return BenchmarkReport(records)
