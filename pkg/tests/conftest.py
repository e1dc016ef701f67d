import numpy as np
import pytest

from kgssl.graph import KnowledgeGraph, Triple


def make_graph(edge_rows, n_nodes=None, n_relations=None, features=None,
               type_nodes=(), target_nodes=()):
    """Build a small graph from (head, rel, tail) integer rows."""
    edges = [Triple(h, r, t) for h, r, t in edge_rows]
    if n_nodes is None:
        n_nodes = max([e.head for e in edges] + [e.tail for e in edges], default=-1) + 1
    if n_relations is None:
        n_relations = max([e.relation for e in edges], default=-1) + 1
    return KnowledgeGraph(
        [f"n{i}" for i in range(n_nodes)],
        [f"r{i}" for i in range(n_relations)],
        edges, node_features=features,
        type_nodes=type_nodes, target_nodes=target_nodes,
    )


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))
