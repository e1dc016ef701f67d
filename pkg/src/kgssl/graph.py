"""Knowledge-graph data model, flat-file ingestion, and topology statistics.

Graphs are immutable after construction: loaders and refinement steps build
new instances rather than mutating, so a graph can be shared freely across
concurrent readers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .fileio import read_feature_file, read_index_file, write_feature_file, write_index_file

_WHITESPACE = re.compile(r"\s+")


class GraphFormatError(ValueError):
    """Malformed graph input file."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int
    sentence_id: Optional[str] = None


@dataclass(frozen=True)
class TopologyStats:
    n_nodes: int
    n_edges: int
    n_relations: int
    n_comp: int
    r_giant: float
    avg_deg: float


def normalize_label(label: str) -> str:
    """Lowercase, trim, and collapse inner whitespace."""
    return _WHITESPACE.sub(" ", label.strip()).lower()


def average_degree(n_nodes: int, n_edges: int) -> float:
    """Undirected average degree 2|E|/|V| over duplicate-collapsed edges."""
    if n_nodes <= 0:
        raise ValueError("average degree is undefined for an empty graph")
    return 2.0 * n_edges / n_nodes


class KnowledgeGraph:
    """Nodes, typed directed edges, relation vocabulary, and feature matrices.

    Node and relation handles are dense integers assigned in first-seen
    order; labels map bijectively onto handles. ``type_nodes`` designates
    semantic-type nodes and ``target_nodes`` the terms to be typed; the two
    sets are disjoint.
    """

    __slots__ = (
        "node_labels", "relation_labels", "edges", "node_features",
        "relation_features", "type_nodes", "target_nodes",
        "node_index", "relation_index", "_in_adj", "_out_adj",
    )

    def __init__(self, node_labels, relation_labels, edges,
                 node_features=None, relation_features=None,
                 type_nodes=(), target_nodes=()):
        self.node_labels = tuple(node_labels)
        self.relation_labels = tuple(relation_labels)
        self.edges = tuple(edges)
        self.node_index = {label: i for i, label in enumerate(self.node_labels)}
        self.relation_index = {label: i for i, label in enumerate(self.relation_labels)}
        if len(self.node_index) != len(self.node_labels):
            raise GraphFormatError("node labels are not unique")
        if len(self.relation_index) != len(self.relation_labels):
            raise GraphFormatError("relation labels are not unique")
        n, r = len(self.node_labels), len(self.relation_labels)
        for t in self.edges:
            if not (0 <= t.head < n and 0 <= t.tail < n):
                raise GraphFormatError(f"edge endpoint out of range: {t}")
            if not (0 <= t.relation < r):
                raise GraphFormatError(f"edge relation out of range: {t}")
        self.type_nodes = frozenset(int(v) for v in type_nodes)
        self.target_nodes = frozenset(int(v) for v in target_nodes)
        if self.type_nodes & self.target_nodes:
            raise GraphFormatError("type_nodes and target_nodes must be disjoint")
        for v in self.type_nodes | self.target_nodes:
            if not 0 <= v < n:
                raise GraphFormatError(f"role node handle out of range: {v}")
        self.node_features = self._check_features(node_features, n, "node")
        self.relation_features = self._check_features(relation_features, r, "relation")
        self._in_adj = None
        self._out_adj = None

    @staticmethod
    def _check_features(mat, rows: int, what: str):
        if mat is None:
            return None
        mat = np.asarray(mat, dtype=np.float32)
        if mat.ndim != 2 or mat.shape[0] != rows:
            raise GraphFormatError(
                f"{what} feature matrix has {mat.shape[0] if mat.ndim == 2 else '?'} rows, "
                f"graph has {rows} {what}s"
            )
        if not np.isfinite(mat).all():
            raise GraphFormatError(f"{what} feature matrix contains non-finite values")
        mat = mat.copy()
        mat.setflags(write=False)
        return mat

    @property
    def n_nodes(self) -> int:
        return len(self.node_labels)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_relations(self) -> int:
        return len(self.relation_labels)

    @property
    def feature_dim(self) -> Optional[int]:
        return None if self.node_features is None else int(self.node_features.shape[1])

    def edge_label_triples(self) -> set[tuple[str, str, str]]:
        return {
            (self.node_labels[t.head], self.relation_labels[t.relation], self.node_labels[t.tail])
            for t in self.edges
        }

    def _adjacency(self):
        if self._in_adj is None:
            in_adj = [[] for _ in range(self.n_nodes)]
            out_adj = [[] for _ in range(self.n_nodes)]
            for idx, t in enumerate(self.edges):
                out_adj[t.head].append((t.tail, t.relation, idx))
                in_adj[t.tail].append((t.head, t.relation, idx))
            self._in_adj = in_adj
            self._out_adj = out_adj
        return self._in_adj, self._out_adj

    def with_roles(self, type_nodes: Iterable[int], target_nodes: Iterable[int]) -> "KnowledgeGraph":
        """Copy of this graph with type/target designations replaced."""
        return KnowledgeGraph(
            self.node_labels, self.relation_labels, self.edges,
            self.node_features, self.relation_features,
            type_nodes=type_nodes, target_nodes=target_nodes,
        )

    def with_node_features(self, matrix: np.ndarray) -> "KnowledgeGraph":
        return KnowledgeGraph(
            self.node_labels, self.relation_labels, self.edges,
            matrix, self.relation_features,
            type_nodes=self.type_nodes, target_nodes=self.target_nodes,
        )

    def with_relation_features(self, matrix: np.ndarray) -> "KnowledgeGraph":
        return KnowledgeGraph(
            self.node_labels, self.relation_labels, self.edges,
            self.node_features, matrix,
            type_nodes=self.type_nodes, target_nodes=self.target_nodes,
        )

    def with_edges(self, edges: Iterable[Triple]) -> "KnowledgeGraph":
        return KnowledgeGraph(
            self.node_labels, self.relation_labels, edges,
            self.node_features, self.relation_features,
            type_nodes=self.type_nodes, target_nodes=self.target_nodes,
        )


def load_triples(path, normalize: bool = False) -> KnowledgeGraph:
    """Load a TSV triples file into a structure-only graph.

    Rows are ``head<TAB>relation<TAB>tail[<TAB>sentence_id]``; ``#`` lines
    are comments. Exact-duplicate triples collapse to one edge (the first
    sentence_id wins); node and relation handles follow first-seen order.
    """
    node_labels: list[str] = []
    node_index: dict[str, int] = {}
    relation_labels: list[str] = []
    relation_index: dict[str, int] = {}
    edges: list[Triple] = []
    seen: set[tuple[int, int, int]] = set()

    def intern_node(label: str) -> int:
        handle = node_index.get(label)
        if handle is None:
            handle = len(node_labels)
            node_index[label] = handle
            node_labels.append(label)
        return handle

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise GraphFormatError(
                    f"{path}:{lineno}: expected at least 3 tab-separated columns, got {len(parts)}"
                )
            head, relation, tail = parts[0], parts[1], parts[2]
            sentence_id = parts[3] if len(parts) > 3 and parts[3] != "" else None
            if normalize:
                head = normalize_label(head)
                relation = normalize_label(relation)
                tail = normalize_label(tail)
            if not head or not relation or not tail:
                raise GraphFormatError(f"{path}:{lineno}: empty label")
            h = intern_node(head)
            t = intern_node(tail)
            r = relation_index.get(relation)
            if r is None:
                r = len(relation_labels)
                relation_index[relation] = r
                relation_labels.append(relation)
            key = (h, r, t)
            if key in seen:
                continue
            seen.add(key)
            edges.append(Triple(h, r, t, sentence_id))
    if not node_labels:
        raise GraphFormatError(f"{path}: no triples found")
    return KnowledgeGraph(node_labels, relation_labels, edges)


def save_triples(path, graph: KnowledgeGraph, header: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for t in graph.edges:
            row = [graph.node_labels[t.head], graph.relation_labels[t.relation],
                   graph.node_labels[t.tail]]
            if t.sentence_id is not None:
                row.append(t.sentence_id)
            fh.write("\t".join(row) + "\n")


def load_features(path, index_path, graph: KnowledgeGraph) -> np.ndarray:
    """Load an NTDF feature file and permute rows into NodeId order.

    Every graph node must appear in the index; absent nodes are an error
    rather than a silent zero-fill.
    """
    matrix = read_feature_file(path)
    index = read_index_file(index_path)
    rows = np.empty(graph.n_nodes, dtype=np.int64)
    for node_id, label in enumerate(graph.node_labels):
        row = index.get(label)
        if row is None:
            raise GraphFormatError(f"feature index is missing node label {label!r}")
        if not 0 <= row < matrix.shape[0]:
            raise GraphFormatError(
                f"feature index row {row} for {label!r} exceeds matrix rows {matrix.shape[0]}"
            )
        rows[node_id] = row
    bound = matrix[rows]
    if not np.isfinite(bound).all():
        bad = np.argwhere(~np.isfinite(bound))[0]
        raise GraphFormatError(
            f"non-finite feature value for node {graph.node_labels[int(bad[0])]!r}"
        )
    return bound


def load_relation_features(path, index_path, graph: KnowledgeGraph) -> np.ndarray:
    """Like :func:`load_features` but keyed on relation labels."""
    matrix = read_feature_file(path)
    index = read_index_file(index_path)
    rows = np.empty(graph.n_relations, dtype=np.int64)
    for rel_id, label in enumerate(graph.relation_labels):
        row = index.get(label)
        if row is None:
            raise GraphFormatError(f"feature index is missing relation label {label!r}")
        rows[rel_id] = row
    bound = matrix[rows]
    if not np.isfinite(bound).all():
        raise GraphFormatError("non-finite value in relation features")
    return bound


def save_features(path, index_path, graph: KnowledgeGraph) -> None:
    if graph.node_features is None:
        raise GraphFormatError("graph has no node features to save")
    write_feature_file(path, graph.node_features)
    write_index_file(index_path, graph.node_labels)


def load_roles(path, graph: KnowledgeGraph, create_missing: bool = True) -> KnowledgeGraph:
    """Apply a TSV ``node_label<TAB>role`` file; role is term, type, or other.

    Labels absent from the graph become new isolated nodes by default:
    fragmented graphs legitimately carry edge-free terms, and the role file
    is the only place they can be declared. This must run before features
    are bound so the new nodes get feature rows too.
    """
    type_nodes: set[int] = set()
    target_nodes: set[int] = set()
    extra_labels: list[str] = []
    index = dict(graph.node_index)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected node_label<TAB>role")
            label, role = parts
            node = index.get(label)
            if node is None:
                if not create_missing:
                    raise GraphFormatError(f"{path}:{lineno}: unknown node label {label!r}")
                node = len(graph.node_labels) + len(extra_labels)
                index[label] = node
                extra_labels.append(label)
            if role == "type":
                type_nodes.add(node)
            elif role == "term":
                target_nodes.add(node)
            elif role != "other":
                raise GraphFormatError(f"{path}:{lineno}: unknown role {role!r}")
    if extra_labels:
        if graph.node_features is not None:
            raise GraphFormatError(
                "roles file adds isolated nodes but features are already bound; "
                "load roles before features"
            )
        graph = KnowledgeGraph(
            graph.node_labels + tuple(extra_labels), graph.relation_labels,
            graph.edges, None, graph.relation_features,
        )
    return graph.with_roles(type_nodes, target_nodes)


def save_roles(path, graph: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node_id, label in enumerate(graph.node_labels):
            if node_id in graph.type_nodes:
                role = "type"
            elif node_id in graph.target_nodes:
                role = "term"
            else:
                role = "other"
            fh.write(f"{label}\t{role}\n")


def load_gold(path, graph: KnowledgeGraph) -> dict[int, int]:
    """Load the TSV gold standard mapping each target term to one type node.

    The map must cover ``graph.target_nodes`` exactly; a term listed twice
    with different types is rejected.
    """
    gold: dict[int, int] = {}
    count = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected term_label<TAB>type_label")
            term_label, type_label = parts
            term = graph.node_index.get(term_label)
            if term is None:
                raise GraphFormatError(f"{path}:{lineno}: unknown term label {term_label!r}")
            type_node = graph.node_index.get(type_label)
            if type_node is None:
                raise GraphFormatError(f"{path}:{lineno}: unknown type label {type_label!r}")
            if type_node not in graph.type_nodes:
                raise GraphFormatError(
                    f"{path}:{lineno}: {type_label!r} is not a designated type node"
                )
            if term in gold and gold[term] != type_node:
                raise GraphFormatError(
                    f"{path}:{lineno}: term {term_label!r} mapped to conflicting types"
                )
            gold[term] = type_node
            count += 1
    if count == 0:
        raise GraphFormatError(f"{path}: gold file is empty")
    if graph.target_nodes and set(gold) != graph.target_nodes:
        missing = len(graph.target_nodes - set(gold))
        extra = len(set(gold) - graph.target_nodes)
        raise GraphFormatError(
            f"gold map does not cover target nodes exactly ({missing} missing, {extra} extra)"
        )
    return gold


def save_gold(path, graph: KnowledgeGraph, gold: dict[int, int]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for term in sorted(gold):
            fh.write(f"{graph.node_labels[term]}\t{graph.node_labels[gold[term]]}\n")


def gold_type_counts(graph: KnowledgeGraph, gold: dict[int, int]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for type_node in gold.values():
        label = graph.node_labels[type_node]
        counts[label] = counts.get(label, 0) + 1
    return counts


def topology_stats(graph: KnowledgeGraph) -> TopologyStats:
    """Component and degree statistics over the undirected projection."""
    n = graph.n_nodes
    if n == 0:
        raise GraphFormatError("topology statistics are undefined for an empty graph")
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t in graph.edges:
        a, b = find(t.head), find(t.tail)
        if a != b:
            parent[a] = b
    sizes: dict[int, int] = {}
    for v in range(n):
        root = find(v)
        sizes[root] = sizes.get(root, 0) + 1
    n_comp = len(sizes)
    giant = max(sizes.values())
    return TopologyStats(
        n_nodes=n,
        n_edges=graph.n_edges,
        n_relations=graph.n_relations,
        n_comp=n_comp,
        r_giant=giant / n,
        avg_deg=average_degree(n, graph.n_edges),
    )


def neighbors(graph: KnowledgeGraph, node: int, direction: str = "both"):
    """Adjacency of ``node`` as (neighbor, relation, tag) in edge-insertion order.

    Tags are ``in`` (node is the edge tail) and ``out`` (node is the head);
    a self-loop under ``both`` yields one entry per role.
    """
    if not 0 <= node < graph.n_nodes:
        raise GraphFormatError(f"invalid node handle {node}")
    if direction not in ("in", "out", "both"):
        raise ValueError(f"direction must be in, out, or both, got {direction!r}")
    result = []
    for t in graph.edges:
        if direction in ("out", "both") and t.head == node:
            result.append((t.tail, t.relation, "out"))
        if direction in ("in", "both") and t.tail == node:
            result.append((t.head, t.relation, "in"))
    return result
