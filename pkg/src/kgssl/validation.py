"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

from .graph import KnowledgeGraph

TASKS = ("feature_reconstruction", "relation_reconstruction", "contrastive")
ENCODER_KINDS = ("gcn", "gat", "rgcn", "transgcn", "rotategcn")
FEATURE_DECODERS = ("mlp", "gcn", "gat", "rgcn", "transgcn", "rotategcn")

TASK_DECODERS = {
    "feature_reconstruction": FEATURE_DECODERS,
    "relation_reconstruction": ("distmult",),
    "contrastive": ("contrastive-scoring",),
}


def check_option(name: str, value, options) -> None:
    if value not in options:
        raise ValueError(f"{name} must be one of {sorted(options)}, got {value!r}")


def check_positive(name: str, value) -> None:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")


def check_fraction(name: str, value, inclusive: bool = True) -> None:
    ok = 0.0 <= value <= 1.0 if inclusive else 0.0 <= value < 1.0
    if not ok:
        raise ValueError(f"{name} must lie in [0, 1{']' if inclusive else ')'}, got {value!r}")


def check_graph(graph, require_features: bool = False, require_roles: bool = False,
                require_edges: bool = False) -> KnowledgeGraph:
    if not isinstance(graph, KnowledgeGraph):
        raise TypeError(f"expected a KnowledgeGraph, got {type(graph).__name__}")
    if graph.n_nodes == 0:
        raise ValueError("graph has no nodes")
    if require_features and graph.node_features is None:
        raise ValueError("graph has no node features bound; load a feature file first")
    if require_roles and (not graph.type_nodes or not graph.target_nodes):
        raise ValueError("graph needs designated type and target nodes; load a roles file")
    if require_edges and graph.n_edges == 0:
        raise ValueError("graph has no edges")
    return graph


def check_task_decoder(task: str, decoder: str) -> None:
    check_option("task", task, TASKS)
    allowed = TASK_DECODERS[task]
    if decoder not in allowed:
        raise ValueError(
            f"decoder {decoder!r} is not valid for task {task!r}; expected one of {list(allowed)}"
        )
