"""Undirected vertex-labeled graphs and their plain-text file format.

The text format is one record per line::

    # comment
    v <id> <label>
    e <src> <dst>

Vertex ids in a file may be sparse; they are compacted to ``0..n-1`` in
ascending order on load.  Labels are interned to dense integer ids in
sorted string order, so two graphs with the same label set always agree on
ids.  A leading ``t`` header line and trailing tokens on ``v``/``e`` lines
(degree columns, edge labels) are tolerated and ignored, which covers the
common public subgraph-matching dataset dumps.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

EdgeList = list[tuple[int, int]]


class GraphFormatError(ValueError):
    """Raised when a graph file cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class LabeledGraph:
    """Immutable undirected graph in CSR form with one label per vertex.

    ``labels[u]`` indexes into ``label_names``; ``indices[indptr[u]:indptr[u+1]]``
    is the ascending neighbor list of ``u``.
    """

    labels: np.ndarray
    label_names: tuple[str, ...]
    indptr: np.ndarray
    indices: np.ndarray

    @classmethod
    def from_edges(
        cls, vertex_labels: Sequence[str], edges: Iterable[tuple[int, int]]
    ) -> LabeledGraph:
        """Build a graph from per-vertex label strings and an edge iterable.

        Edges are symmetrized and deduplicated.  Self-loops and endpoints
        outside ``0..n-1`` raise ``ValueError``.
        """
        n = len(vertex_labels)
        names = tuple(sorted(set(vertex_labels)))
        for name in names:
            if not name or any(ch.isspace() for ch in name):
                raise ValueError(f"labels must be non-empty and whitespace-free, got {name!r}")
        lookup = {name: i for i, name in enumerate(names)}
        labels = np.fromiter((lookup[s] for s in vertex_labels), dtype=np.int32, count=n)

        pairs = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if len(pairs):
            if pairs.min() < 0 or pairs.max() >= n:
                bad = pairs[(pairs < 0).any(axis=1) | (pairs >= n).any(axis=1)][0]
                raise ValueError(f"edge {tuple(bad)} references a vertex outside 0..{n - 1}")
            loops = pairs[:, 0] == pairs[:, 1]
            if loops.any():
                raise ValueError(f"self-loop on vertex {pairs[loops][0, 0]}")
            pairs = np.sort(pairs, axis=1)
            pairs = np.unique(pairs, axis=0)
        return cls._from_canonical(labels, names, pairs)

    @classmethod
    def _from_canonical(
        cls, labels: np.ndarray, names: tuple[str, ...], pairs: np.ndarray
    ) -> LabeledGraph:
        n = len(labels)
        both = np.concatenate([pairs, pairs[:, ::-1]]) if len(pairs) else pairs
        order = np.lexsort((both[:, 1], both[:, 0])) if len(both) else np.empty(0, np.int64)
        both = both[order]
        counts = np.bincount(both[:, 0], minlength=n) if len(both) else np.zeros(n, np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = both[:, 1].astype(np.int64) if len(both) else np.empty(0, np.int64)
        for arr in (labels, indptr, indices):
            arr.flags.writeable = False
        return cls(labels=labels, label_names=names, indptr=indptr, indices=indices)

    @property
    def num_vertices(self) -> int:
        return len(self.labels)

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    @property
    def num_labels(self) -> int:
        return len(self.label_names)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, u: int) -> np.ndarray:
        if not 0 <= u < self.num_vertices:
            raise IndexError(f"vertex {u} out of range 0..{self.num_vertices - 1}")
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def degree(self, u: int) -> int:
        return int(self.indptr[u + 1] - self.indptr[u])

    def label_of(self, u: int) -> str:
        return self.label_names[self.labels[u]]

    def vertex_label_names(self) -> list[str]:
        return [self.label_names[i] for i in self.labels]

    def has_edge(self, u: int, w: int) -> bool:
        nbrs = self.neighbors(u)
        i = np.searchsorted(nbrs, w)
        return bool(i < len(nbrs) and nbrs[i] == w)

    def edge_array(self) -> np.ndarray:
        """Canonical ``(m, 2)`` array of edges with ``u < w``, lexicographically sorted."""
        src = np.repeat(np.arange(self.num_vertices, dtype=np.int64), self.degrees)
        keep = src < self.indices
        return np.stack([src[keep], self.indices[keep]], axis=1)

    def edges(self) -> EdgeList:
        return [(int(u), int(w)) for u, w in self.edge_array()]

    def subgraph(self, vertices: Sequence[int]) -> LabeledGraph:
        """Induced subgraph; vertex ``i`` of the result is ``vertices[i]``."""
        position = {int(v): i for i, v in enumerate(vertices)}
        if len(position) != len(vertices):
            raise ValueError("duplicate vertex in subgraph selection")
        names = [self.label_of(int(v)) for v in vertices]
        edges = []
        for v, i in position.items():
            for w in self.neighbors(v):
                j = position.get(int(w))
                if j is not None and i < j:
                    edges.append((i, j))
        return LabeledGraph.from_edges(names, edges)

    def is_connected(self) -> bool:
        n = self.num_vertices
        if n <= 1:
            return True
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            u = stack.pop()
            for w in self.neighbors(u):
                if not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
        return bool(seen.all())

    def digest(self) -> str:
        """SHA-256 over the canonical (labels, edges) content."""
        h = hashlib.sha256()
        h.update(np.int64(self.num_vertices).tobytes())
        for name in self.vertex_label_names():
            h.update(name.encode("utf-8") + b"\0")
        h.update(self.edge_array().astype("<i8").tobytes())
        return h.hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabeledGraph):
            return NotImplemented
        return (
            self.vertex_label_names() == other.vertex_label_names()
            and np.array_equal(self.edge_array(), other.edge_array())
        )

    def __repr__(self) -> str:
        return (
            f"LabeledGraph(n={self.num_vertices}, m={self.num_edges}, "
            f"labels={self.num_labels})"
        )


def neighbors(g: LabeledGraph, u: int) -> np.ndarray:
    return g.neighbors(u)


def parse_graph(lines: Iterable[str]) -> LabeledGraph:
    declared: dict[int, str] = {}
    raw_edges: list[tuple[int, int, int]] = []
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens or tokens[0].startswith("#") or tokens[0] == "t":
            continue
        kind = tokens[0]
        if kind == "v":
            if len(tokens) < 2:
                raise GraphFormatError("vertex record without id", lineno)
            vid = _parse_id(tokens[1], lineno)
            if len(tokens) < 3:
                raise GraphFormatError(f"label missing for vertex {vid}", lineno)
            if vid in declared:
                raise GraphFormatError(f"vertex {vid} declared twice", lineno)
            declared[vid] = tokens[2]
        elif kind == "e":
            if len(tokens) < 3:
                raise GraphFormatError("edge record needs two endpoints", lineno)
            u, w = _parse_id(tokens[1], lineno), _parse_id(tokens[2], lineno)
            if u == w:
                raise GraphFormatError(f"self-loop on vertex {u}", lineno)
            raw_edges.append((u, w, lineno))
        else:
            raise GraphFormatError(f"unknown record type {kind!r}", lineno)

    order = sorted(declared)
    compact = {vid: i for i, vid in enumerate(order)}
    edges = []
    for u, w, lineno in raw_edges:
        for end in (u, w):
            if end not in compact:
                raise GraphFormatError(f"edge endpoint {end} is not a declared vertex", lineno)
        edges.append((compact[u], compact[w]))
    return LabeledGraph.from_edges([declared[vid] for vid in order], edges)


def _parse_id(token: str, lineno: int) -> int:
    if not token.isdigit():
        raise GraphFormatError(f"vertex id must be a non-negative integer, got {token!r}", lineno)
    return int(token)


def load_graph(path: str | os.PathLike, format: str = "vertex-edge-text") -> LabeledGraph:
    if format != "vertex-edge-text":
        raise ValueError(f"unsupported graph format {format!r}")
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh)


def format_graph(g: LabeledGraph) -> str:
    out = [f"v {u} {name}\n" for u, name in enumerate(g.vertex_label_names())]
    out.extend(f"e {u} {w}\n" for u, w in g.edge_array())
    return "".join(out)


def save_graph(g: LabeledGraph, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_graph(g))
