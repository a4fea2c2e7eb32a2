import json

import numpy as np
import pytest

from conftest import random_graph
from sigmatch.cli import build_parser, main, resolve_config
from sigmatch.evalbench import extract_exact_query, generate_barabasi_albert
from sigmatch.graph import LabeledGraph, load_graph, save_graph
from sigmatch.index import load_index


@pytest.fixture
def unique_graph(tmp_path):
    base = random_graph(np.random.default_rng(0), 30, 1, 0.12)
    g = LabeledGraph.from_edges([f"V{i}" for i in range(30)], base.edges())
    path = tmp_path / "g.txt"
    save_graph(g, path)
    return g, path


@pytest.fixture
def indexed(tmp_path, unique_graph):
    g, gpath = unique_graph
    ipath = tmp_path / "g.idx"
    assert main(["index", str(gpath), str(ipath)]) == 0
    return g, gpath, ipath


def test_index_writes_file(unique_graph, tmp_path, capsys):
    _, gpath = unique_graph
    ipath = tmp_path / "fresh.idx"
    assert main(["index", str(gpath), str(ipath)]) == 0
    assert ipath.exists()
    out = capsys.readouterr().out
    assert "psi=" in out and "tau=" in out and "offline_s=" in out


def test_malformed_graph_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("v 0 A\ne 0 7\n")
    assert main(["index", str(bad), str(tmp_path / "o.idx")]) == 2
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("kappa", ["0", "-1"])
def test_bad_kappa_exit_2(indexed, tmp_path, kappa):
    _, gpath, _ = indexed
    assert main(["index", str(gpath), str(tmp_path / "o.idx"), "--kappa", kappa]) == 2


def test_missing_graph_exit_1(tmp_path):
    assert main(["index", str(tmp_path / "nope.txt"), str(tmp_path / "o.idx")]) == 1


def test_query_full_mapping(indexed, tmp_path, capsys):
    g, gpath, ipath = indexed
    q, origin = extract_exact_query(g, 7, seed=1)
    qpath = tmp_path / "q.txt"
    save_graph(q, qpath)
    capsys.readouterr()
    assert main(["query", str(ipath), str(qpath), "--graph", str(gpath)]) == 0
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    assert lines[0].startswith("match 1 ")
    assert [line for line in lines if line.startswith("m ")] == [f"m {i} {v}" for i, v in enumerate(origin)]
    assert "latency_s=" in captured.err


def test_query_json(indexed, tmp_path, capsys):
    g, gpath, ipath = indexed
    q, origin = extract_exact_query(g, 5, seed=2)
    save_graph(q, tmp_path / "q.txt")
    capsys.readouterr()
    assert main(["query", str(ipath), str(tmp_path / "q.txt"), "--graph", str(gpath), "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data[0]["pairs"] == [[i, v] for i, v in enumerate(origin)]


def test_query_no_shared_labels(indexed, tmp_path, capsys):
    _, gpath, ipath = indexed
    save_graph(LabeledGraph.from_edges(["X", "Y"], [(0, 1)]), tmp_path / "q.txt")
    capsys.readouterr()
    assert main(["query", str(ipath), str(tmp_path / "q.txt"), "--graph", str(gpath)]) == 0
    assert capsys.readouterr().out == "0 matches\n"


def test_twin_copies_k3_gives_two(tmp_path, capsys):
    h = LabeledGraph.from_edges(list("ABCDE"), [(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)])
    g = LabeledGraph.from_edges(list("ABCDE") * 2, h.edges() + [(u + 5, w + 5) for u, w in h.edges()])
    save_graph(g, tmp_path / "g.txt")
    save_graph(h, tmp_path / "q.txt")
    assert main(["index", str(tmp_path / "g.txt"), str(tmp_path / "g.idx")]) == 0
    capsys.readouterr()
    args = ["query", str(tmp_path / "g.idx"), str(tmp_path / "q.txt"), "--graph", str(tmp_path / "g.txt"), "--k", "3"]
    assert main(args) == 0
    out = capsys.readouterr().out
    assert [line.split()[1] for line in out.splitlines() if line.startswith("match ")] == ["1", "2"]


def test_digest_mismatch_exit_1(indexed, tmp_path, capsys):
    g, _, ipath = indexed
    names = g.vertex_label_names()
    names[0] = "W"
    save_graph(LabeledGraph.from_edges(names, g.edges()), tmp_path / "other.txt")
    save_graph(g.subgraph([0, 1]), tmp_path / "q.txt")
    assert main(["query", str(ipath), str(tmp_path / "q.txt"), "--graph", str(tmp_path / "other.txt")]) == 1
    assert "digest" in capsys.readouterr().err


def test_gamma_mismatch_exit_2(indexed, tmp_path):
    g, gpath, ipath = indexed
    save_graph(g.subgraph([0, 1]), tmp_path / "q.txt")
    assert main(["query", str(ipath), str(tmp_path / "q.txt"), "--graph", str(gpath), "--gamma", "2"]) == 2


def test_bench_rows_and_reproducible(tmp_path):
    g = generate_barabasi_albert(150, 4, 6, seed=0)
    save_graph(g, tmp_path / "g.txt")
    assert main(["index", str(tmp_path / "g.txt"), str(tmp_path / "g.idx")]) == 0
    common = ["bench", str(tmp_path / "g.idx"), str(tmp_path / "g.txt"), "--sizes", "3,5",
              "--noise-types", "exact,nEDel", "--queries-per-cell", "3", "--no-timing", "--seed", "4"]
    assert main(common + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(common + ["--out", str(tmp_path / "b.csv")]) == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    assert len(a.decode().splitlines()) == 1 + 2 * 2 * 3


def test_gen_ba(tmp_path):
    out = tmp_path / "ba.txt"
    assert main(["gen", "ba", str(out), "--n", "1000", "--avg-degree", "8", "--labels", "20", "--seed", "1"]) == 0
    g = load_graph(out)
    assert g.num_vertices == 1000 and g.num_edges == 4 * 996


def test_gen_ba_invalid(tmp_path):
    assert main(["gen", "ba", str(tmp_path / "x"), "--n", "2", "--avg-degree", "8", "--labels", "2"]) == 2


def test_gen_queries(tmp_path):
    g = generate_barabasi_albert(200, 6, 8, seed=0)
    save_graph(g, tmp_path / "g.txt")
    outdir = tmp_path / "qs"
    assert main(["gen", "queries", str(tmp_path / "g.txt"), str(outdir), "--queries-per-cell", "1"]) == 0
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert len(manifest) == 36
    assert {m["size"] for m in manifest} == {3, 5, 7, 9, 11, 13}
    assert (outdir / manifest[-1]["file"]).exists()


def test_even_size_exit_2(tmp_path):
    assert main(["gen", "queries", str(tmp_path / "g.txt"), str(tmp_path / "qs"), "--sizes", "3,4"]) == 2


class TestConfigPrecedence:
    def parse(self, *argv):
        return build_parser().parse_args(["index", "g", "o", *argv])

    def test_defaults(self):
        config, explicit = resolve_config(self.parse(), environ={})
        assert (config.gamma, config.kappa, config.k) == (3.0, 0.001, 1)
        assert explicit == set()

    def test_layers(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"kappa": 0.1, "gamma": 2.0, "seed": 7}))
        args = self.parse("--config", str(cfg))
        config, _ = resolve_config(args, environ={})
        assert (config.kappa, config.gamma, config.master_seed) == (0.1, 2.0, 7)
        config, _ = resolve_config(args, environ={"SIGMATCH_KAPPA": "0.2"})
        assert config.kappa == 0.2 and config.gamma == 2.0
        args = self.parse("--config", str(cfg), "--kappa", "0.3")
        config, explicit = resolve_config(args, environ={"SIGMATCH_KAPPA": "0.2"})
        assert config.kappa == 0.3 and "kappa" in explicit

    def test_env_applies_to_index(self, indexed, tmp_path, monkeypatch):
        _, gpath, _ = indexed
        monkeypatch.setenv("SIGMATCH_KAPPA", "0.25")
        assert main(["index", str(gpath), str(tmp_path / "e.idx")]) == 0
        assert load_index(tmp_path / "e.idx").kappa == 0.25

    def test_bad_env_exit_2(self, indexed, tmp_path, monkeypatch):
        _, gpath, _ = indexed
        monkeypatch.setenv("SIGMATCH_GAMMA", "three")
        assert main(["index", str(gpath), str(tmp_path / "e.idx")]) == 2

    def test_unknown_config_key(self, indexed, tmp_path):
        _, gpath, _ = indexed
        cfg = tmp_path / "c.json"
        cfg.write_text('{"speed": 1}')
        assert main(["index", str(gpath), str(tmp_path / "e.idx"), "--config", str(cfg)]) == 2
