"""Graph refinement: rule-based is-a enrichment and validator-driven cleaning.

Enrichment mines hierarchical edges from multi-word term labels; cleaning
removes edges a binary validator rejects. Both return a new graph plus a
log of what changed, and compose into the combined enrich-then-clean pass.
"""

from __future__ import annotations

import json
import logging
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .graph import (
    GraphFormatError, KnowledgeGraph, TopologyStats, Triple,
    normalize_label, topology_stats,
)

logger = logging.getLogger(__name__)

ISA_RELATION = "is-a"

DEFAULT_STOPLIST = frozenset({"study", "outcome", "method", "approach", "result"})

LabelTriple = tuple[str, str, str]


@dataclass(frozen=True)
class Verdict:
    triple: LabelTriple
    sentence: str
    value: int

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ValueError(f"verdict value must be 0 or 1, got {self.value}")


@dataclass
class RefinementLog:
    added: list[tuple[LabelTriple, str]] = field(default_factory=list)
    removed: list[tuple[LabelTriple, int, str]] = field(default_factory=list)
    stats_before: Optional[TopologyStats] = None
    stats_after: Optional[TopologyStats] = None

    def merge(self, other: "RefinementLog") -> "RefinementLog":
        return RefinementLog(
            added=self.added + other.added,
            removed=self.removed + other.removed,
            stats_before=self.stats_before,
            stats_after=other.stats_after,
        )


class CleaningAborted(RuntimeError):
    """Validator failure mid-clean; carries the log accumulated so far."""

    def __init__(self, message: str, partial_log: RefinementLog):
        super().__init__(message)
        self.partial_log = partial_log


# ---------------------------------------------------------------------------
# is-a augmentation rules


def derive_isa_without_of(term: str) -> list[LabelTriple]:
    """Suffix chain for a multi-word term whose tokens do not include "of".

    ``a b c`` yields (a b c, is-a, b c) and (b c, is-a, c); a single token
    yields nothing.
    """
    label = normalize_label(term)
    if not label:
        raise ValueError("term must be non-empty")
    tokens = label.split(" ")
    if "of" in tokens:
        raise ValueError(f"term {term!r} contains 'of'; use derive_isa_with_of")
    out: list[LabelTriple] = []
    for i in range(len(tokens) - 1):
        out.append((" ".join(tokens[i:]), ISA_RELATION, " ".join(tokens[i + 1:])))
    return out


def derive_isa_with_of(term: str) -> list[LabelTriple]:
    """Head-noun rule for terms containing "of": the term is-a its head.

    The head is everything before the first "of"; a multi-word head also
    contributes its own suffix chain. The remainder after "of" is never
    expanded. Terms that start or end with "of" produce nothing (warning).
    """
    label = normalize_label(term)
    if not label:
        raise ValueError("term must be non-empty")
    tokens = label.split(" ")
    if "of" not in tokens:
        raise ValueError(f"term {term!r} lacks 'of'; use derive_isa_without_of")
    split = tokens.index("of")
    head_tokens = tokens[:split]
    remainder = tokens[split + 1:]
    if not head_tokens or not remainder:
        logger.warning("degenerate 'of' term %r: no is-a emitted", term)
        return []
    head = " ".join(head_tokens)
    out: list[LabelTriple] = [(label, ISA_RELATION, head)]
    if len(head_tokens) > 1:
        out.extend(derive_isa_without_of(head))
    return out


def derive_isa(term: str) -> list[LabelTriple]:
    tokens = normalize_label(term).split(" ")
    if "of" in tokens:
        return derive_isa_with_of(term)
    return derive_isa_without_of(term)


# ---------------------------------------------------------------------------
# validators


class Validator:
    """Binary decision function over (triple, source sentence)."""

    tag = "validator"

    def judge(self, triple: LabelTriple, sentence: str) -> int:
        raise NotImplementedError

    def judge_batch(self, items: Sequence[tuple[LabelTriple, str]]) -> list[int]:
        return [self.judge(triple, sentence) for triple, sentence in items]


class AcceptAllValidator(Validator):
    tag = "accept-all"

    def judge(self, triple, sentence):
        return 1


class RejectAllValidator(Validator):
    tag = "reject-all"

    def judge(self, triple, sentence):
        return 0


class HeuristicMockValidator(Validator):
    """Deterministic stand-in: rejects self-relations and generic endpoints."""

    tag = "heuristic-mock"

    def __init__(self, stoplist=DEFAULT_STOPLIST):
        self.stoplist = frozenset(normalize_label(t) for t in stoplist)

    def judge(self, triple, sentence):
        head, _, tail = triple
        if normalize_label(head) == normalize_label(tail):
            return 0
        if normalize_label(head) in self.stoplist or normalize_label(tail) in self.stoplist:
            return 0
        return 1


class VerdictFileValidator(Validator):
    """Verdicts read from a TSV of ``head<TAB>relation<TAB>tail<TAB>{0|1}``.

    Misses follow ``miss_policy``: strict raises, lenient defaults to 1.
    """

    tag = "verdict-file"

    def __init__(self, path, miss_policy: str = "strict"):
        if miss_policy not in ("strict", "lenient"):
            raise ValueError(f"miss_policy must be strict or lenient, got {miss_policy!r}")
        self.miss_policy = miss_policy
        self.path = str(path)
        self.verdicts: dict[LabelTriple, int] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 4 or parts[3] not in ("0", "1"):
                    raise GraphFormatError(
                        f"{path}:{lineno}: expected head<TAB>relation<TAB>tail<TAB>{{0|1}}"
                    )
                self.verdicts[(parts[0], parts[1], parts[2])] = int(parts[3])

    def judge(self, triple, sentence):
        value = self.verdicts.get(triple)
        if value is None:
            if self.miss_policy == "strict":
                raise KeyError(f"no verdict on file for triple {triple}")
            return 1
        return value


class RemoteValidationError(RuntimeError):
    """Remote validation endpoint failed after retries; safe to retry later."""


class RemoteValidator(Validator):
    """HTTP validator speaking POST /validate with positional verdict arrays."""

    tag = "remote-service"

    def __init__(self, endpoint: Optional[str] = None, timeout_ms: int = 30_000,
                 batch_size: int = 32, retries: int = 3, backoff_s: float = 0.2,
                 sleep: Callable[[float], None] = time.sleep):
        endpoint = endpoint or os.environ.get("NATD_VALIDATOR_URL")
        if not endpoint:
            raise ValueError("no endpoint given and NATD_VALIDATOR_URL is unset")
        if timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if batch_size <= 0:
            raise ValueError("batch_size must be positive")
        self.endpoint = endpoint.rstrip("/")
        self.timeout_ms = timeout_ms
        self.batch_size = batch_size
        self.retries = retries
        self.backoff_s = backoff_s
        self._sleep = sleep

    def judge(self, triple, sentence):
        return self.judge_batch([(triple, sentence)])[0]

    def judge_batch(self, items):
        verdicts: list[int] = []
        for start in range(0, len(items), self.batch_size):
            chunk = items[start:start + self.batch_size]
            verdicts.extend(self._post_chunk(chunk))
        return verdicts

    def _post_chunk(self, chunk) -> list[int]:
        body = json.dumps({
            "triples": [
                {"head": h, "relation": r, "tail": t, "sentence": sentence}
                for (h, r, t), sentence in chunk
            ]
        }).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint + "/validate", data=body,
            headers={"Content-Type": "application/json"}, method="POST",
        )
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                with urllib.request.urlopen(request, timeout=self.timeout_ms / 1000.0) as resp:
                    if resp.status != 200:
                        raise RemoteValidationError(f"validator returned HTTP {resp.status}")
                    payload = json.loads(resp.read().decode("utf-8"))
            except (urllib.error.URLError, TimeoutError, OSError,
                    RemoteValidationError, json.JSONDecodeError) as exc:
                last_error = exc
                continue
            verdicts = payload.get("verdicts")
            if not isinstance(verdicts, list) or len(verdicts) != len(chunk) \
                    or any(v not in (0, 1) for v in verdicts):
                raise RemoteValidationError(
                    f"malformed verdict array for batch of {len(chunk)}: {verdicts!r}"
                )
            return [int(v) for v in verdicts]
        raise RemoteValidationError(
            f"validation failed after {self.retries + 1} attempts: {last_error}"
        )


def load_stoplist(path) -> frozenset[str]:
    terms = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                terms.add(normalize_label(line))
    return frozenset(terms)


def validate(triple: LabelTriple, sentence: str, validator: Validator) -> Verdict:
    """Run one triple through a validator and wrap the binary outcome."""
    return Verdict(triple=triple, sentence=sentence or "",
                   value=validator.judge(triple, sentence or ""))


# ---------------------------------------------------------------------------
# refinement passes

FeatureProvider = Callable[[str], Optional[np.ndarray]]


def feature_provider_from_files(path, index_path) -> FeatureProvider:
    """Provider backed by a supplementary NTDF feature file + label index."""
    from .fileio import read_feature_file, read_index_file

    matrix = read_feature_file(path)
    index = read_index_file(index_path)

    def provide(label: str) -> Optional[np.ndarray]:
        row = index.get(label)
        return None if row is None else matrix[row]

    return provide


def enrich(graph: KnowledgeGraph, feature_provider: Optional[FeatureProvider] = None,
           zero_init: bool = False, strict: bool = False) -> tuple[KnowledgeGraph, RefinementLog]:
    """Apply both is-a rules to every non-type node label.

    New tail/intermediate labels become nodes with role ``other``; their
    features come from ``feature_provider`` (zero-filled when absent, an
    error under ``strict``). Emitted triples are deduplicated against the
    existing edge set. Labels are matched after normalization, so graphs
    loaded without ``normalize`` may gain surface-variant duplicates.
    """
    log = RefinementLog(stats_before=topology_stats(graph))
    normalized_index: dict[str, int] = {}
    for node_id, label in enumerate(graph.node_labels):
        normalized_index.setdefault(normalize_label(label), node_id)

    node_labels = list(graph.node_labels)
    new_feature_rows: list[np.ndarray | None] = []
    dim = graph.feature_dim

    def resolve(label: str) -> int:
        node = graph.node_index.get(label)
        if node is None:
            node = normalized_index.get(label)
        if node is None:
            node = len(node_labels)
            normalized_index[label] = node
            node_labels.append(label)
            if dim is not None:
                vec = None if (zero_init or feature_provider is None) else feature_provider(label)
                if vec is None and not zero_init and strict:
                    raise GraphFormatError(f"no feature available for created node {label!r}")
                new_feature_rows.append(None if vec is None else np.asarray(vec, dtype=np.float32))
        return node

    relation_labels = list(graph.relation_labels)
    if ISA_RELATION in graph.relation_index:
        isa = graph.relation_index[ISA_RELATION]
    else:
        isa = len(relation_labels)
        relation_labels.append(ISA_RELATION)

    existing = {(t.head, t.relation, t.tail) for t in graph.edges}
    edges = list(graph.edges)
    for node_id in range(graph.n_nodes):
        if node_id in graph.type_nodes:
            continue
        label = normalize_label(graph.node_labels[node_id])
        tokens = label.split(" ")
        if len(tokens) < 2:
            continue
        if "of" in tokens:
            derived = derive_isa_with_of(label)
            rule = "with-of"
        else:
            derived = derive_isa_without_of(label)
            rule = "without-of"
        for head_label, _, tail_label in derived:
            head = node_id if head_label == label else resolve(head_label)
            tail = resolve(tail_label)
            key = (head, isa, tail)
            if key in existing:
                continue
            existing.add(key)
            edges.append(Triple(head, isa, tail, None))
            log.added.append(((head_label, ISA_RELATION, tail_label), rule))

    if not log.added:
        log.stats_after = log.stats_before
        return graph, log

    node_features = graph.node_features
    if dim is not None and len(node_labels) > graph.n_nodes:
        extra = np.zeros((len(node_labels) - graph.n_nodes, dim), dtype=np.float32)
        for i, row in enumerate(new_feature_rows):
            if row is not None:
                if row.shape != (dim,):
                    raise GraphFormatError(
                        f"feature provider returned shape {row.shape}, expected ({dim},)"
                    )
                extra[i] = row
        node_features = np.vstack([graph.node_features, extra])

    relation_features = graph.relation_features
    if relation_features is not None and len(relation_labels) > graph.n_relations:
        rel_vec = feature_provider(ISA_RELATION) if feature_provider and not zero_init else None
        if rel_vec is None and strict and not zero_init:
            raise GraphFormatError(f"no feature available for relation {ISA_RELATION!r}")
        extra_rel = np.zeros((1, relation_features.shape[1]), dtype=np.float32)
        if rel_vec is not None:
            extra_rel[0] = np.asarray(rel_vec, dtype=np.float32)
        relation_features = np.vstack([relation_features, extra_rel])

    enriched = KnowledgeGraph(
        node_labels, relation_labels, edges, node_features, relation_features,
        type_nodes=graph.type_nodes, target_nodes=graph.target_nodes,
    )
    log.stats_after = topology_stats(enriched)
    return enriched, log


def clean(graph: KnowledgeGraph, validator: Validator,
          sentences: Optional[dict[str, str]] = None) -> tuple[KnowledgeGraph, RefinementLog]:
    """Drop edges the validator rejects, then prune edge-free filler nodes.

    Target and type nodes always survive, even isolated. Validator errors
    abort the pass with the partial log attached to the exception.
    """
    log = RefinementLog(stats_before=topology_stats(graph))
    sentences = sentences or {}
    items = []
    for t in graph.edges:
        label_triple = (
            graph.node_labels[t.head],
            graph.relation_labels[t.relation],
            graph.node_labels[t.tail],
        )
        context = sentences.get(t.sentence_id, "") if t.sentence_id is not None else ""
        items.append((label_triple, context))

    kept_edges: list[Triple] = []
    try:
        batch = validator.judge_batch(items)
        if len(batch) != len(items):
            raise RemoteValidationError(
                f"validator returned {len(batch)} verdicts for {len(items)} triples"
            )
        for t, (label_triple, _), value in zip(graph.edges, items, batch):
            if value == 1:
                kept_edges.append(t)
            else:
                log.removed.append((label_triple, 0, validator.tag))
    except (RemoteValidationError, KeyError) as exc:
        raise CleaningAborted(f"cleaning aborted: {exc}", log) from exc

    keep = set()
    for t in kept_edges:
        keep.add(t.head)
        keep.add(t.tail)
    keep |= graph.type_nodes
    keep |= graph.target_nodes
    survivors = [v for v in range(graph.n_nodes) if v in keep]
    remap = {old: new for new, old in enumerate(survivors)}

    node_labels = [graph.node_labels[v] for v in survivors]
    edges = [Triple(remap[t.head], t.relation, remap[t.tail], t.sentence_id)
             for t in kept_edges]
    node_features = None
    if graph.node_features is not None:
        node_features = graph.node_features[np.asarray(survivors, dtype=np.int64)]
    cleaned = KnowledgeGraph(
        node_labels, graph.relation_labels, edges, node_features,
        graph.relation_features,
        type_nodes={remap[v] for v in graph.type_nodes},
        target_nodes={remap[v] for v in graph.target_nodes},
    )
    log.stats_after = topology_stats(cleaned) if cleaned.n_nodes else None
    return cleaned, log


def combined_refine(graph: KnowledgeGraph, validator: Validator,
                    sentences: Optional[dict[str, str]] = None,
                    feature_provider: Optional[FeatureProvider] = None,
                    zero_init: bool = False, strict: bool = False,
                    ) -> tuple[KnowledgeGraph, RefinementLog]:
    """Enrich first, then clean, so added triples are themselves checked."""
    enriched, enrich_log = enrich(graph, feature_provider=feature_provider,
                                  zero_init=zero_init, strict=strict)
    try:
        cleaned, clean_log = clean(enriched, validator, sentences=sentences)
    except CleaningAborted as exc:
        raise CleaningAborted(str(exc), enrich_log.merge(exc.partial_log)) from exc
    return cleaned, enrich_log.merge(clean_log)
