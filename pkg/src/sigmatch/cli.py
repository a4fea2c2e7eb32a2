"""Command-line entry point: ``sigmatch {index,query,bench,gen}``.

Engine settings come from, in increasing priority: built-in defaults, a JSON
file given with ``--config``, ``SIGMATCH_*`` environment variables, and
command-line flags.  Machine-readable results go to stdout; timings and
diagnostics go to stderr.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, fields, replace

from sigmatch.evalbench import (
    NOISE_TYPES,
    Protocol,
    generate_barabasi_albert,
    generate_queries,
    run_benchmark,
    write_query_corpus,
)
from sigmatch.graph import GraphFormatError, load_graph, save_graph
from sigmatch.index import (
    DEFAULT_GAMMA,
    DEFAULT_KAPPA,
    IndexDigestError,
    IndexFormatError,
    build_index_set,
    load_index,
    persist_index,
    with_kappa,
)
from sigmatch.matcher import format_matches, top_k_match

ENV_PREFIX = "SIGMATCH_"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class EngineConfig:
    gamma: float = DEFAULT_GAMMA
    kappa: float = DEFAULT_KAPPA
    k: int = 1
    sample_pairs: int | None = None
    master_seed: int = 0
    thread_count: int | None = None

    def validate(self) -> EngineConfig:
        if not self.gamma >= 1:
            raise UsageError(f"gamma must be >= 1 (got {self.gamma})")
        if not self.kappa > 0:
            raise UsageError(f"kappa must be > 0 (got {self.kappa})")
        if self.k < 1:
            raise UsageError(f"k must be >= 1 (got {self.k})")
        if self.sample_pairs is not None and self.sample_pairs < 1:
            raise UsageError("sample-pairs must be positive")
        if self.master_seed < 0:
            raise UsageError("seed must be non-negative")
        if self.thread_count is not None and self.thread_count < 1:
            raise UsageError("threads must be positive")
        return self


# flag dest -> (config field, parser)
_CONFIG_KEYS = {
    "gamma": ("gamma", float),
    "kappa": ("kappa", float),
    "k": ("k", int),
    "sample_pairs": ("sample_pairs", int),
    "seed": ("master_seed", int),
    "threads": ("thread_count", int),
}


def resolve_config(args: argparse.Namespace, environ=os.environ) -> tuple[EngineConfig, set[str]]:
    """Merge defaults, config file, environment and flags; also report which
    fields were set explicitly by any of those sources."""
    values: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from exc
        known = {f.name for f in fields(EngineConfig)}
        for key, value in raw.items():
            name = _CONFIG_KEYS.get(key.replace("-", "_"), (key, None))[0]
            if name not in known:
                raise UsageError(f"unknown config key {key!r}")
            values[name] = value
    for dest, (name, parse) in _CONFIG_KEYS.items():
        env = environ.get(ENV_PREFIX + dest.upper())
        if env is not None:
            try:
                values[name] = parse(env)
            except ValueError as exc:
                raise UsageError(f"bad value for {ENV_PREFIX + dest.upper()}: {env!r}") from exc
        flag = getattr(args, dest, None)
        if flag is not None:
            values[name] = flag
    try:
        config = replace(EngineConfig(), **values)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc
    return config.validate(), set(values)


def _sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(x) for x in text.split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be comma-separated integers, got {text!r}")
    for s in sizes:
        if s < 3 or s % 2 == 0:
            raise argparse.ArgumentTypeError(f"query sizes must be odd and >= 3, got {s}")
    return sizes


def _noise_types(text: str) -> tuple[str, ...]:
    types = tuple(x for x in text.split(",") if x)
    for t in types:
        if t not in NOISE_TYPES:
            raise argparse.ArgumentTypeError(f"unknown noise type {t!r}; choose from {', '.join(NOISE_TYPES)}")
    return types


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma", type=float, help=f"penalty exponent (default {DEFAULT_GAMMA})")
    p.add_argument("--kappa", type=float, help=f"symbol step size in std-devs (default {DEFAULT_KAPPA})")
    p.add_argument("--k", type=int, help="number of matches to return (default 1)")
    p.add_argument("--sample-pairs", type=int, help="estimate the pair distribution from this many sampled pairs")
    p.add_argument("--seed", type=int, help="master random seed (default 0)")
    p.add_argument("--threads", type=int, help="worker threads for the offline pair pass")
    p.add_argument("--config", help="JSON file with engine settings")


def _add_protocol_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sizes", type=_sizes, default=(3, 5, 7, 9, 11, 13), help="comma-separated odd query sizes")
    p.add_argument("--noise-types", type=_noise_types, default=NOISE_TYPES, help="comma-separated noise types")
    p.add_argument("--queries-per-cell", type=int, default=20, help="queries per (size, noise type)")
    p.add_argument("--fresh-bases", action="store_true",
                   help="draw a separate exact base per noise type instead of sharing one")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigmatch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and save the offline index of a target graph")
    p.add_argument("graph")
    p.add_argument("out")
    p.add_argument("--set-semantics", action="store_true", help="compare label sets instead of multisets")
    _add_engine_flags(p)

    p = sub.add_parser("query", help="match a query graph against an indexed target")
    p.add_argument("index")
    p.add_argument("query")
    p.add_argument("--graph", required=True, help="target graph the index was built from")
    p.add_argument("--format", choices=("text", "json"), default="text")
    _add_engine_flags(p)

    p = sub.add_parser("bench", help="run the noisy-query benchmark protocol")
    p.add_argument("index")
    p.add_argument("graph")
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--no-timing", action="store_true", help="leave latency_s empty (byte-reproducible CSV)")
    _add_protocol_flags(p)
    _add_engine_flags(p)

    p = sub.add_parser("gen", help="generate synthetic graphs or query corpora")
    gen = p.add_subparsers(dest="what", required=True)
    ba = gen.add_parser("ba", help="Barabasi-Albert labeled graph")
    ba.add_argument("out")
    ba.add_argument("--n", type=int, required=True)
    ba.add_argument("--avg-degree", type=int, required=True)
    ba.add_argument("--labels", type=int, required=True)
    ba.add_argument("--seed", type=int, default=0)
    qs = gen.add_parser("queries", help="query corpus extracted from a graph")
    qs.add_argument("graph")
    qs.add_argument("outdir")
    qs.add_argument("--seed", type=int, default=0)
    _add_protocol_flags(qs)
    return parser


def _load_index_for(args, config: EngineConfig, explicit: set[str]):
    graph = load_graph(args.graph)
    idx = load_index(args.index, graph=graph)
    if "gamma" in explicit and config.gamma != idx.gamma:
        raise UsageError(f"index was built with gamma={idx.gamma}; re-index to use gamma={config.gamma}")
    if "kappa" in explicit and config.kappa != idx.kappa:
        idx = with_kappa(idx, config.kappa)
    return graph, idx


def cmd_index(args) -> int:
    config, _ = resolve_config(args)
    g = load_graph(args.graph)
    start = time.perf_counter()
    idx = build_index_set(
        g,
        gamma=config.gamma,
        kappa=config.kappa,
        sample_pairs=config.sample_pairs,
        seed=config.master_seed,
        workers=config.thread_count or 1,
        set_semantics=args.set_semantics,
    )
    elapsed = time.perf_counter() - start
    persist_index(idx, args.out)
    s = idx.stats
    print(f"psi={s.psi!r}")
    print(f"delta={s.delta!r}")
    print(f"max_dev={s.max_dev!r}")
    print(f"tau={idx.symbols.tau}")
    print(f"pairs={s.pair_count} sampled={str(s.sampled).lower()}")
    print(f"offline_s={elapsed:.3f}")
    return 0


def cmd_query(args) -> int:
    config, explicit = resolve_config(args)
    graph, idx = _load_index_for(args, config, explicit)
    query = load_graph(args.query)
    start = time.perf_counter()
    matches = top_k_match(graph, query, idx, k=config.k)
    elapsed = time.perf_counter() - start
    sys.stdout.write(format_matches(matches, args.format))
    print(f"latency_s={elapsed:.6f} matches={len(matches)}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    config, explicit = resolve_config(args)
    graph, idx = _load_index_for(args, config, explicit)
    protocol = Protocol(
        sizes=args.sizes,
        noise_types=args.noise_types,
        queries_per_cell=args.queries_per_cell,
        master_seed=config.master_seed,
        paired_bases=not args.fresh_bases,
    )
    report = run_benchmark(graph, idx, protocol, k=config.k)
    report.to_csv(args.out, timing=not args.no_timing)
    print(f"queries={len(report.records)} mean_accuracy={report.mean_accuracy:.4f} "
          f"mean_latency_s={report.mean_latency:.6f}", file=sys.stderr)
    for noise, acc in report.accuracy_by_noise().items():
        print(f"  {noise:7s} accuracy={acc:.4f}", file=sys.stderr)
    return 0


def cmd_gen(args) -> int:
    if args.what == "ba":
        try:
            g = generate_barabasi_albert(args.n, args.avg_degree, args.labels, seed=args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        save_graph(g, args.out)
        print(f"vertices={g.num_vertices} edges={g.num_edges}", file=sys.stderr)
        return 0
    g = load_graph(args.graph)
    protocol = Protocol(
        sizes=args.sizes,
        noise_types=args.noise_types,
        queries_per_cell=args.queries_per_cell,
        master_seed=args.seed,
        paired_bases=not args.fresh_bases,
    )
    manifest = write_query_corpus(list(generate_queries(g, protocol)), args.outdir)
    print(f"queries={protocol.total} manifest={manifest}", file=sys.stderr)
    return 0


COMMANDS = {"index": cmd_index, "query": cmd_query, "bench": cmd_bench, "gen": cmd_gen}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the diagnostic
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, GraphFormatError) as exc:
        print(f"sigmatch: error: {exc}", file=sys.stderr)
        return 2
    except (IndexDigestError, IndexFormatError, OSError, RuntimeError, ValueError) as exc:
        print(f"sigmatch: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
