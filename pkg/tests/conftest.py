import numpy as np
import pytest

from spectral_weights.graph import complete_graph, paper7, path_graph, random_connected_graph, star_graph

# Exact diameter of the 7-node topology, pinned from all-pairs BFS.
D7 = 3
# Node weights reported for the optimised 7-node topology.
W_STAR = np.array([0.9269, 0.2822, 0.4194, 0.2442, 0.9346, 0.2442, 0.6192])


@pytest.fixture
def g7():
    return paper7()


@pytest.fixture
def p3():
    return path_graph(3)


@pytest.fixture
def k3():
    return complete_graph(3)


@pytest.fixture
def s4():
    return star_graph(4)


def random_graphs(count, seed, n_lo=3, n_hi=12, p=0.3):
    rng = np.random.default_rng(seed)
    return [random_connected_graph(int(rng.integers(n_lo, n_hi + 1)), p, rng) for _ in range(count)]


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES = {}


def report(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
