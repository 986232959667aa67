"""Distributed minimisation of the finite condition number of graph Laplacians."""
from .graph import (
    Graph,
    GraphError,
    bfs_diameter,
    edge_weighted_laplacian,
    incidence,
    laplacian,
    load_graph,
    node_weighted_laplacian,
    paper7,
    parse_graph,
    symmetric_weighted_laplacian,
)
from .eig import condition_number, lmi_feasible, reduced_factor, sym_eig

__version__ = "0.1.0"
