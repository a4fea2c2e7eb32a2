import numpy as np
import pytest
from hypothesis import strategies as st

from sigmatch.graph import LabeledGraph


def random_graph(rng: np.random.Generator, n: int, num_labels: int, p: float) -> LabeledGraph:
    labels = [f"L{int(x)}" for x in rng.integers(num_labels, size=n)]
    edges = [(u, w) for u in range(n) for w in range(u + 1, n) if rng.random() < p]
    return LabeledGraph.from_edges(labels, edges)


def plain(g: LabeledGraph) -> tuple[list[str], list[tuple[int, int]]]:
    return g.vertex_label_names(), g.edges()


@st.composite
def labeled_graphs(draw, min_n=0, max_n=12, max_labels=4):
    n = draw(st.integers(min_n, max_n))
    labels = draw(st.lists(st.sampled_from("ABCDEFGHIJ"[:max_labels]), min_size=n, max_size=n))
    pairs = [(u, w) for u in range(n) for w in range(u + 1, n)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return LabeledGraph.from_edges(labels, edges)


@pytest.fixture
def triangle_abb():
    return LabeledGraph.from_edges(["A", "B", "B"], [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def path_abc():
    return LabeledGraph.from_edges(["A", "B", "C"], [(0, 1), (1, 2)])


@pytest.fixture
def star_a_bbb():
    return LabeledGraph.from_edges(["A", "B", "B", "B"], [(0, 1), (0, 2), (0, 3)])


# One line per acceptance criterion, echoed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
