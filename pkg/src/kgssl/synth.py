"""Synthetic dual-graph generator: a schema-consistent clean graph paired
with a corrupted copy sharing targets, types, features, and gold labels.

The clean graph is ontology-shaped: every term sits in a shallow is-a
hierarchy rooted at its semantic-type node, and term-term edges always
match their relation's declared domain and range. Corruption drops edges
(severing hierarchy paths the way extraction fragments a text graph),
injects schema-violating spurious edges, isolates terms, and optionally
perturbs features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graph import KnowledgeGraph, Triple

HIERARCHY_RELATION = "is-a"


@dataclass(frozen=True)
class SyntheticSpec:
    n_types: int = 8
    terms_per_type: int = 50
    n_relations: int = 6
    edges_per_term: float = 3.0
    feature_dim: int = 32
    feature_noise: float = 0.8
    relation_schema: Optional[tuple[tuple[int, int], ...]] = None
    edge_drop_frac: float = 0.0
    spurious_frac: float = 0.0
    fragment_frac: float = 0.0
    feature_noise_sigma: float = 0.0

    def __post_init__(self):
        if self.n_types < 2:
            raise ValueError("need at least 2 semantic types")
        if self.terms_per_type < 1 or self.n_relations < 1:
            raise ValueError("terms_per_type and n_relations must be positive")
        for name in ("edge_drop_frac", "spurious_frac", "fragment_frac"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.relation_schema is not None and len(self.relation_schema) != self.n_relations:
            raise ValueError("relation_schema length must equal n_relations")


@dataclass
class SyntheticPair:
    clean: KnowledgeGraph
    corrupted: KnowledgeGraph
    gold: dict[int, int]
    schema: tuple[tuple[int, int], ...]


def _default_schema(spec: SyntheticSpec):
    """Distinct (domain, range) pairs that avoid reverse duplicates.

    A pair and its reverse are indistinguishable to a symmetric triple
    scorer, so the first n_types*(n_types-1)/2 relations use each
    unordered type pair in one orientation only.
    """
    n = spec.n_types
    ordered = []
    for offset in range(1, n // 2 + 1):
        for i in range(n):
            if 2 * offset == n and i >= n // 2:
                continue
            ordered.append((i, (i + offset) % n))
    rest = [(i, j) for i in range(n) for j in range(n)
            if i != j and (i, j) not in ordered]
    ordered += rest
    return tuple(ordered[k % len(ordered)] for k in range(spec.n_relations))


def generate(spec: SyntheticSpec, seed: int = 0) -> SyntheticPair:
    """Build the clean/corrupted pair deterministically from one seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    n_terms = spec.n_types * spec.terms_per_type
    term_labels = [f"term_{t}_{i}" for t in range(spec.n_types)
                   for i in range(spec.terms_per_type)]
    type_labels = [f"type_{t}" for t in range(spec.n_types)]
    node_labels = term_labels + type_labels
    term_type = np.repeat(np.arange(spec.n_types), spec.terms_per_type)
    type_node = {t: n_terms + t for t in range(spec.n_types)}
    gold = {i: type_node[int(term_type[i])] for i in range(n_terms)}

    schema = spec.relation_schema or _default_schema(spec)
    relation_labels = [f"rel_{k}" for k in range(spec.n_relations)] + [HIERARCHY_RELATION]
    isa = spec.n_relations

    terms_of = [np.flatnonzero(term_type == t) for t in range(spec.n_types)]
    edges: list[Triple] = []
    seen: set[tuple[int, int, int]] = set()

    def push(h, r, t):
        key = (h, r, t)
        if key not in seen and h != t:
            seen.add(key)
            edges.append(Triple(h, r, t))

    # shallow is-a hierarchy per type: roughly sqrt(terms) direct children
    # under the type node, every other term under one of those
    breadth = max(1, int(math.ceil(math.sqrt(spec.terms_per_type))))
    for t in range(spec.n_types):
        members = terms_of[t]
        inner = members[:breadth]
        for term in inner:
            push(int(term), isa, gold[int(term)])
        for term in members[breadth:]:
            parent = int(rng.choice(inner))
            push(int(term), isa, parent)

    n_schema_edges = int(spec.edges_per_term * n_terms)
    for k, (dom, ran) in zip(range(spec.n_relations), schema):
        target = n_schema_edges // spec.n_relations
        attempts = 0
        placed = 0
        while placed < target and attempts < target * 20:
            attempts += 1
            h = int(rng.choice(terms_of[dom]))
            t = int(rng.choice(terms_of[ran]))
            before = len(edges)
            push(h, k, t)
            placed += len(edges) - before

    # every node's feature is a noisy draw around its type centroid; the
    # type node itself is just another noisy sample, like its label text
    features = np.zeros((n_terms + spec.n_types, spec.feature_dim), dtype=np.float32)
    centroids = rng.normal(size=(spec.n_types, spec.feature_dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    scale = spec.feature_noise / np.sqrt(spec.feature_dim)
    features[:n_terms] = centroids[term_type] + rng.normal(
        scale=scale, size=(n_terms, spec.feature_dim))
    for t in range(spec.n_types):
        features[type_node[t]] = centroids[t] + rng.normal(
            scale=scale, size=spec.feature_dim)

    clean = KnowledgeGraph(
        node_labels, relation_labels, edges, node_features=features,
        type_nodes=set(type_node.values()), target_nodes=set(range(n_terms)),
    )

    corrupted_edges = list(edges)
    if spec.edge_drop_frac > 0 and corrupted_edges:
        n_drop = int(np.floor(spec.edge_drop_frac * len(corrupted_edges)))
        dropped = set(rng.choice(len(corrupted_edges), size=n_drop, replace=False))
        corrupted_edges = [e for i, e in enumerate(corrupted_edges) if i not in dropped]
    if spec.spurious_frac > 0:
        corrupted_keys = {(e.head, e.relation, e.tail) for e in corrupted_edges}
        n_spurious = int(np.floor(spec.spurious_frac * len(edges)))
        placed = 0
        attempts = 0
        while placed < n_spurious and attempts < n_spurious * 50:
            attempts += 1
            k = int(rng.integers(spec.n_relations))
            dom, ran = schema[k]
            wrong_dom = (dom + 1 + int(rng.integers(spec.n_types - 1))) % spec.n_types
            h = int(rng.choice(terms_of[wrong_dom]))
            t = int(rng.choice(terms_of[int(rng.integers(spec.n_types))]))
            key = (h, k, t)
            if h != t and key not in corrupted_keys:
                corrupted_keys.add(key)
                corrupted_edges.append(Triple(h, k, t))
                placed += 1
    if spec.fragment_frac > 0:
        n_isolate = int(np.floor(spec.fragment_frac * n_terms))
        isolated = set(int(v) for v in rng.choice(n_terms, size=n_isolate, replace=False))
        corrupted_edges = [e for e in corrupted_edges
                           if e.head not in isolated and e.tail not in isolated]

    corrupted_features = features
    if spec.feature_noise_sigma > 0:
        corrupted_features = features + rng.normal(
            scale=spec.feature_noise_sigma, size=features.shape).astype(np.float32)

    corrupted = KnowledgeGraph(
        node_labels, relation_labels, corrupted_edges,
        node_features=corrupted_features,
        type_nodes=set(type_node.values()), target_nodes=set(range(n_terms)),
    )
    return SyntheticPair(clean=clean, corrupted=corrupted, gold=gold, schema=schema)


def schema_violations(graph: KnowledgeGraph, schema, gold: dict[int, int]) -> int:
    """Exhaustive scan counting edges that break domain/range constraints.

    Schema relations must connect terms whose gold types match the declared
    pair; an is-a edge must stay inside one type's hierarchy (same-type
    parent term, or the head's own type node).
    """
    type_of = dict(gold)
    type_ids = sorted(graph.type_nodes)
    type_rank = {v: i for i, v in enumerate(type_ids)}
    violations = 0
    for t in graph.edges:
        rel_label = graph.relation_labels[t.relation]
        if rel_label == HIERARCHY_RELATION:
            if t.tail in graph.type_nodes:
                ok = type_of.get(t.head) == t.tail
            else:
                ok = t.head in type_of and t.tail in type_of \
                    and type_of[t.head] == type_of[t.tail]
            violations += 0 if ok else 1
        elif rel_label.startswith("rel_"):
            k = int(rel_label.split("_", 1)[1])
            dom, ran = schema[k]
            head_ok = t.head in type_of and type_rank.get(type_of[t.head]) == dom
            tail_ok = t.tail in type_of and type_rank.get(type_of[t.tail]) == ran
            if not (head_ok and tail_ok):
                violations += 1
    return violations
