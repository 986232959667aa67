import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import D7, W_STAR, random_graphs
from spectral_weights.graph import (
    Graph, GraphError, bfs_diameter, complete_graph, edge_weighted_laplacian, format_graph,
    incidence, laplacian, load_graph, node_weighted_laplacian, parse_graph, path_graph,
    random_connected_graph, symmetric_weighted_laplacian,
)

FIXTURE = "fixtures/paper7.graph"

# Matrix printed for the optimised weights (rows of diag(w*) L).
L_W_STAR = np.array([
    [1.8539, 0, 0, -0.9269, 0, -0.9269, 0],
    [0, 1.1287, 0, -0.2822, -0.2822, -0.2822, -0.2822],
    [0, 0, 1.2581, -0.4194, -0.4194, -0.4194, 0],
    [-0.2442, -0.2442, -0.2442, 1.2208, 0, -0.2442, -0.2442],
    [0, -0.9346, -0.9346, 0, 1.8692, 0, 0],
    [-0.2442, -0.2442, -0.2442, -0.2442, 0, 1.2208, -0.2442],
    [0, -0.6192, 0, -0.6192, 0, -0.6192, 1.8576],
])


def test_parse_path():
    g = parse_graph("3 2\n1 2\n2 3")
    assert g.n == 3 and g.m == 2
    assert g.adjacency == ((1,), (0, 2), (1,))


def test_parse_fixture_degrees(g7):
    g = load_graph(FIXTURE)
    assert g == g7
    assert tuple(g.degrees()) == (2, 4, 3, 5, 2, 5, 3)


@pytest.mark.parametrize("text, needle", [
    ("2 1\n1 1", "self-loop"),
    ("3 2\n1 2\n2 1", "duplicate"),
    ("3 2\n1 2\n2 4", "out of range"),
    ("4 2\n1 2\n3 4", "not connected"),
    ("3 2\n1 2", "declares 2 edges"),
    ("3 x\n1 2", "header"),
    ("3 2\n1 2\n2 z", "non-integer"),
])
def test_parse_errors(text, needle):
    with pytest.raises(GraphError, match=needle):
        parse_graph(text)


def test_parse_error_names_line():
    with pytest.raises(GraphError, match="line 3"):
        parse_graph("3 2\n1 2\n2 2")


def test_format_roundtrip(g7):
    assert parse_graph(format_graph(g7)) == g7


def test_laplacian_examples(p3, k3, g7):
    assert np.array_equal(laplacian(p3), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    assert np.array_equal(laplacian(k3), 3 * np.eye(3) - np.ones((3, 3)))
    assert np.array_equal(np.diag(laplacian(g7)), [2, 4, 3, 5, 2, 5, 3])


def test_node_weighted_examples(p3, g7):
    assert np.array_equal(node_weighted_laplacian(g7, np.ones(7)), laplacian(g7))
    assert np.array_equal(node_weighted_laplacian(p3, [2, 1, 1])[0], [2, -2, 0])
    assert np.abs(node_weighted_laplacian(g7, W_STAR) - L_W_STAR).max() <= 1e-3
    with pytest.raises(ValueError):
        node_weighted_laplacian(p3, [1, 1])


def test_symmetric_weighted_examples(p3, g7):
    assert np.allclose(symmetric_weighted_laplacian(g7, np.ones(7)), laplacian(g7), atol=0)
    assert symmetric_weighted_laplacian(p3, [4, 1, 1])[0, 1] == -2.0
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = rng.uniform(0.1, 3.0, 7)
        a = np.sort(np.linalg.eigvals(node_weighted_laplacian(g7, w)).real)
        b = np.linalg.eigvalsh(symmetric_weighted_laplacian(g7, w))
        assert np.abs(a - b).max() <= 1e-10
        null = 1.0 / np.sqrt(w)
        assert np.abs(symmetric_weighted_laplacian(g7, w) @ null).max() <= 1e-12


def test_incidence(p3, g7):
    assert np.array_equal(incidence(p3), [[1, -1, 0], [0, 1, -1]])
    B = incidence(g7)
    assert B.shape == (12, 7)
    assert np.all((B != 0).sum(axis=1) == 2)
    assert np.array_equal(B.T @ B, laplacian(g7))


def test_edge_weighted(p3, g7):
    assert np.array_equal(edge_weighted_laplacian(g7, np.ones(12)), laplacian(g7))
    assert np.array_equal(edge_weighted_laplacian(p3, [2, 1]), [[2, -2, 0], [-2, 3, -1], [0, -1, 1]])
    rng = np.random.default_rng(1)
    for _ in range(20):
        M = edge_weighted_laplacian(g7, rng.uniform(0, 2, 12))
        assert np.linalg.eigvalsh(M).min() >= -1e-10


def test_bfs_diameter(p3, k3, g7):
    assert bfs_diameter(p3) == 2
    assert bfs_diameter(k3) == 1
    assert bfs_diameter(g7) == D7


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 12), p=st.floats(0, 1), seed=st.integers(0, 2**32 - 1))
def test_laplacian_properties(n, p, seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, p, rng)
    adj = g.adjacency
    assert all(i in adj[j] for i in range(n) for j in adj[i])
    w = rng.uniform(0.05, 5.0, n)
    we = rng.uniform(0.0, 5.0, g.m)
    for M in (laplacian(g), node_weighted_laplacian(g, w), edge_weighted_laplacian(g, we)):
        assert np.abs(M.sum(axis=1)).max() <= 1e-12
    a = np.sort(np.linalg.eigvals(node_weighted_laplacian(g, w)).real)
    b = np.linalg.eigvalsh(symmetric_weighted_laplacian(g, w))
    assert np.abs(a - b).max() <= 1e-9
    assert b[1] > 0
    assert np.array_equal(edge_weighted_laplacian(g, np.ones(g.m)), laplacian(g))


def test_graph_rejects_bad_construction():
    with pytest.raises(GraphError):
        Graph(3, ((1, 0), (1, 2)))
    with pytest.raises(GraphError):
        Graph(0, ())


def test_random_graphs_connected():
    for g in random_graphs(20, 3):
        assert g.n >= 3
