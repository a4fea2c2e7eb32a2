"""Offline indexing of a target graph.

Builds the inverted label list, the label-neighbor list and the label-count
vectors, estimates the background similarity distribution over vertex pairs,
and turns it into a table of deviation symbols whose probabilities come from
a symmetric one-sided Chebyshev bound.  Everything can be persisted to a
compact little-endian binary file.
"""

from __future__ import annotations

import io
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from sigmatch.graph import LabeledGraph
from sigmatch.similarity import _BLOCK_ELEMENTS, as_sets, paired_similarity, similarity_matrix

DEFAULT_GAMMA = 3.0
DEFAULT_KAPPA = 0.001

MAGIC = b"SGMX"
FORMAT_VERSION = 1

# Fixed chunking keeps reductions identical for any worker count.
_SAMPLE_CHUNK = 1 << 16


class IndexFormatError(ValueError):
    """Unreadable index file: bad magic, unknown version or truncated data."""


class IndexDigestError(ValueError):
    """The index was built from a different graph than the one supplied."""


class DegenerateStatsError(ValueError):
    """Fewer than two vertices: no vertex pairs to aggregate."""


@dataclass(frozen=True, eq=False)
class CSRList:
    """Ragged list of int arrays: ``self[i] == values[offsets[i]:offsets[i+1]]``."""

    offsets: np.ndarray
    values: np.ndarray

    def __getitem__(self, i: int) -> np.ndarray:
        return self.values[self.offsets[i] : self.offsets[i + 1]]

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CSRList):
            return NotImplemented
        return np.array_equal(self.offsets, other.offsets) and np.array_equal(self.values, other.values)

    def as_dict(self) -> dict[int, list[int]]:
        return {i: self[i].tolist() for i in range(len(self))}


@dataclass(frozen=True)
class DistributionStats:
    psi: float
    delta: float
    max_dev: float
    pair_count: int
    sampled: bool = False
    seed: int | None = None


@dataclass(frozen=True, eq=False)
class SymbolTable:
    kappa: float
    tau: int
    probabilities: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SymbolTable):
            return NotImplemented
        return (
            self.kappa == other.kappa
            and self.tau == other.tau
            and np.array_equal(self.probabilities, other.probabilities)
        )


@dataclass(frozen=True, eq=False)
class IndexSet:
    il: CSRList
    lnl: CSRList
    lcv: np.ndarray
    stats: DistributionStats
    symbols: SymbolTable
    gamma: float
    graph_digest: str
    label_names: tuple[str, ...]
    set_semantics: bool = False

    @property
    def kappa(self) -> float:
        return self.symbols.kappa

    def scoring_lcv(self) -> np.ndarray:
        return as_sets(self.lcv) if self.set_semantics else self.lcv

    def check_graph(self, g: LabeledGraph) -> None:
        digest = g.digest()
        if digest != self.graph_digest:
            raise IndexDigestError(
                f"index digest {self.graph_digest[:12]} does not match graph digest {digest[:12]}"
            )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndexSet):
            return NotImplemented
        return (
            self.il == other.il
            and self.lnl == other.lnl
            and np.array_equal(self.lcv, other.lcv)
            and self.stats == other.stats
            and self.symbols == other.symbols
            and self.gamma == other.gamma
            and self.graph_digest == other.graph_digest
            and self.label_names == other.label_names
            and self.set_semantics == other.set_semantics
        )


def label_count_vectors(labels: np.ndarray, indptr: np.ndarray, indices: np.ndarray, width: int) -> np.ndarray:
    """Count labels over ``{u} + adj(u)`` for every vertex ``u``."""
    n = len(labels)
    lcv = np.zeros((n, width), dtype=np.int32)
    src = np.repeat(np.arange(n), np.diff(indptr))
    np.add.at(lcv, (src, labels[indices]), 1)
    lcv[np.arange(n), labels] += 1
    return lcv


def build_indexes(g: LabeledGraph) -> tuple[CSRList, CSRList, np.ndarray]:
    """Return ``(inverted label list, label-neighbor list, label-count vectors)``."""
    order = np.argsort(g.labels, kind="stable").astype(np.int64)
    il_offsets = np.zeros(g.num_labels + 1, dtype=np.int64)
    np.cumsum(np.bincount(g.labels, minlength=g.num_labels), out=il_offsets[1:])
    il = CSRList(il_offsets, order)

    src = np.repeat(np.arange(g.num_vertices), g.degrees)
    nbr_labels = g.labels[g.indices].astype(np.int64)
    lnl = CSRList(g.indptr.copy(), nbr_labels[np.lexsort((nbr_labels, src))])

    lcv = label_count_vectors(g.labels, g.indptr, g.indices, g.num_labels)
    return il, lnl, lcv


@dataclass
class _Moments:
    count: int
    mean: float
    m2: float
    lo: float
    hi: float

    @classmethod
    def of(cls, values: np.ndarray) -> _Moments:
        mean = float(values.mean())
        return cls(len(values), mean, float(((values - mean) ** 2).sum()), float(values.min()), float(values.max()))

    def merge(self, other: _Moments) -> _Moments:
        # Chan et al. pairwise update.
        total = self.count + other.count
        d = other.mean - self.mean
        return _Moments(
            total,
            self.mean + d * other.count / total,
            self.m2 + other.m2 + d * d * self.count * other.count / total,
            min(self.lo, other.lo),
            max(self.hi, other.hi),
        )


def _row_block_moments(lcv: np.ndarray, lo: int, hi: int, gamma: float) -> _Moments:
    eta = similarity_matrix(lcv[lo:hi], lcv, gamma)
    keep = np.ones(eta.shape, dtype=bool)
    rows = np.arange(hi - lo)
    keep[rows, rows + lo] = False
    return _Moments.of(eta[keep])


def _sample_block_moments(lcv: np.ndarray, gamma: float, seed_seq: np.random.SeedSequence, size: int) -> _Moments:
    n = len(lcv)
    rng = np.random.default_rng(seed_seq)
    u = rng.integers(0, n, size=size)
    w = rng.integers(0, n - 1, size=size)
    w += w >= u
    return _Moments.of(paired_similarity(lcv[u], lcv[w], gamma))


def compute_distribution(
    lcv: np.ndarray,
    gamma: float = DEFAULT_GAMMA,
    sample_pairs: int | None = None,
    seed: int = 0,
    workers: int = 1,
) -> DistributionStats:
    """Mean, sample standard deviation and maximum standardized deviation of
    the similarity over ordered vertex pairs ``u != w`` (``u`` recalls ``w``).

    With ``sample_pairs`` set below the number of ordered pairs, that many
    pairs are drawn uniformly with replacement from ``seed`` instead.
    """
    if gamma < 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    n = len(lcv)
    if n < 2:
        raise DegenerateStatsError(f"need at least 2 vertices for pair statistics, got {n}")
    total_pairs = n * (n - 1)
    sampled = sample_pairs is not None and sample_pairs < total_pairs
    if sample_pairs is not None and sample_pairs < 1:
        raise ValueError("sample_pairs must be positive")

    if sampled:
        sizes = [_SAMPLE_CHUNK] * (sample_pairs // _SAMPLE_CHUNK)
        if sample_pairs % _SAMPLE_CHUNK:
            sizes.append(sample_pairs % _SAMPLE_CHUNK)
        seeds = np.random.SeedSequence(seed).spawn(len(sizes))
        jobs = [(_sample_block_moments, (lcv, gamma, s, k)) for s, k in zip(seeds, sizes)]
    else:
        step = max(1, _BLOCK_ELEMENTS // max(1, n * lcv.shape[1]))
        jobs = [(_row_block_moments, (lcv, lo, min(n, lo + step), gamma)) for lo in range(0, n, step)]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: job[0](*job[1]), jobs))
    else:
        parts = [fn(*args) for fn, args in jobs]

    acc = parts[0]
    for part in parts[1:]:
        acc = acc.merge(part)

    delta = math.sqrt(acc.m2 / (acc.count - 1)) if acc.count > 1 else 0.0
    psi = min(1.0, max(0.0, acc.mean))
    if delta > 0:
        max_dev = max(acc.hi - psi, psi - acc.lo) / delta
    else:
        delta, max_dev = 0.0, 0.0
    return DistributionStats(
        psi=psi,
        delta=delta,
        max_dev=max_dev,
        pair_count=acc.count,
        sampled=sampled,
        seed=seed if sampled else None,
    )


def symbol_count(max_dev: float, kappa: float) -> int:
    return max(1, math.ceil((max_dev - 1.0) / kappa))


def symbol_mass(i: int | np.ndarray, kappa: float):
    """One-sided Chebyshev mass of symbol ``i >= 2``."""
    return 0.5 * (1.0 / (1.0 + (i - 1) * kappa) ** 2 - 1.0 / (1.0 + i * kappa) ** 2)


def build_symbol_table(stats: DistributionStats, kappa: float = DEFAULT_KAPPA) -> SymbolTable:
    if not kappa > 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    tau = symbol_count(stats.max_dev, kappa)
    probs = np.empty(tau, dtype=np.float64)
    if tau > 1:
        probs[1:] = symbol_mass(np.arange(2, tau + 1, dtype=np.float64), kappa)
    probs[0] = 1.0 - math.fsum(probs[1:])
    probs.flags.writeable = False
    return SymbolTable(kappa=float(kappa), tau=tau, probabilities=probs)


def build_index_set(
    g: LabeledGraph,
    gamma: float = DEFAULT_GAMMA,
    kappa: float = DEFAULT_KAPPA,
    sample_pairs: int | None = None,
    seed: int = 0,
    workers: int = 1,
    set_semantics: bool = False,
) -> IndexSet:
    """Run the whole offline phase for ``g``."""
    if not kappa > 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    il, lnl, lcv = build_indexes(g)
    scoring = as_sets(lcv) if set_semantics else lcv
    stats = compute_distribution(scoring, gamma, sample_pairs=sample_pairs, seed=seed, workers=workers)
    return IndexSet(
        il=il,
        lnl=lnl,
        lcv=lcv,
        stats=stats,
        symbols=build_symbol_table(stats, kappa),
        gamma=float(gamma),
        graph_digest=g.digest(),
        label_names=g.label_names,
        set_semantics=set_semantics,
    )


def with_kappa(idx: IndexSet, kappa: float) -> IndexSet:
    """Same indexes and distribution, different symbol step size."""
    return IndexSet(
        il=idx.il,
        lnl=idx.lnl,
        lcv=idx.lcv,
        stats=idx.stats,
        symbols=build_symbol_table(idx.stats, kappa),
        gamma=idx.gamma,
        graph_digest=idx.graph_digest,
        label_names=idx.label_names,
        set_semantics=idx.set_semantics,
    )


# -- persistence -------------------------------------------------------------


def _write_array(fh: BinaryIO, arr: np.ndarray, dtype: str) -> None:
    data = np.ascontiguousarray(arr, dtype=dtype)
    fh.write(struct.pack("<Q", data.size))
    fh.write(data.tobytes())


def _read_array(buf: io.BytesIO, dtype: str) -> np.ndarray:
    (size,) = _unpack(buf, "<Q")
    itemsize = np.dtype(dtype).itemsize
    raw = buf.read(size * itemsize)
    if len(raw) != size * itemsize:
        raise IndexFormatError("truncated index file")
    return np.frombuffer(raw, dtype=dtype).copy()


def _unpack(buf: io.BytesIO, fmt: str) -> tuple:
    size = struct.calcsize(fmt)
    raw = buf.read(size)
    if len(raw) != size:
        raise IndexFormatError("truncated index file")
    return struct.unpack(fmt, raw)


def persist_index(idx: IndexSet, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(bytes.fromhex(idx.graph_digest))
        fh.write(struct.pack("<ddB", idx.gamma, idx.symbols.kappa, int(idx.set_semantics)))
        n, width = idx.lcv.shape
        fh.write(struct.pack("<QQ", n, width))
        for name in idx.label_names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        _write_array(fh, idx.il.offsets, "<i8")
        _write_array(fh, idx.il.values, "<i8")
        _write_array(fh, idx.lnl.offsets, "<i8")
        _write_array(fh, idx.lnl.values, "<i8")
        _write_array(fh, idx.lcv, "<i4")
        s = idx.stats
        fh.write(struct.pack("<dddQBq", s.psi, s.delta, s.max_dev, s.pair_count, int(s.sampled),
                             -1 if s.seed is None else s.seed))
        fh.write(struct.pack("<Q", idx.symbols.tau))
        _write_array(fh, idx.symbols.probabilities, "<f8")


def load_index(path: str | os.PathLike, graph: LabeledGraph | None = None) -> IndexSet:
    """Read an index file; with ``graph`` given, also verify the content digest."""
    with open(path, "rb") as fh:
        buf = io.BytesIO(fh.read())
    if buf.read(4) != MAGIC:
        raise IndexFormatError(f"{path}: not an index file (bad magic bytes)")
    (version,) = _unpack(buf, "<I")
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"{path}: unsupported index format version {version}")
    digest = buf.read(32).hex()
    gamma, kappa, set_flag = _unpack(buf, "<ddB")
    n, width = _unpack(buf, "<QQ")
    names = []
    for _ in range(width):
        (length,) = _unpack(buf, "<I")
        names.append(buf.read(length).decode("utf-8"))
    il = CSRList(_read_array(buf, "<i8"), _read_array(buf, "<i8"))
    lnl = CSRList(_read_array(buf, "<i8"), _read_array(buf, "<i8"))
    lcv = _read_array(buf, "<i4").reshape(n, width)
    psi, delta, max_dev, pair_count, sampled, seed = _unpack(buf, "<dddQBq")
    (tau,) = _unpack(buf, "<Q")
    probs = _read_array(buf, "<f8")
    if len(probs) != tau:
        raise IndexFormatError(f"{path}: symbol table length {len(probs)} != tau {tau}")
    probs.flags.writeable = False
    idx = IndexSet(
        il=il,
        lnl=lnl,
        lcv=lcv,
        stats=DistributionStats(psi, delta, max_dev, int(pair_count), bool(sampled), None if seed < 0 else seed),
        symbols=SymbolTable(kappa=kappa, tau=int(tau), probabilities=probs),
        gamma=gamma,
        graph_digest=digest,
        label_names=tuple(names),
        set_semantics=bool(set_flag),
    )
    if graph is not None:
        idx.check_graph(graph)
    return idx
