"""Layer-wise neighbor sampling for mini-batch message passing.

A sampled batch is a chain of blocks, outermost first. Each block maps a
source frontier onto a destination frontier one hop closer to the seeds;
destination nodes are always a prefix of the source frontier so a layer
can read its targets' own rows directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .graph import KnowledgeGraph


@dataclass(frozen=True)
class Block:
    """One message-passing hop over sampled edges.

    ``edge_dir`` is 0 when the message follows a stored triple head->tail
    (the target is the tail) and 1 when it runs against it (the target is
    the head of an outgoing edge).
    """

    src_ids: np.ndarray
    dst_ids: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_rel: np.ndarray
    edge_dir: np.ndarray
    direction: str

    @property
    def n_src(self) -> int:
        return len(self.src_ids)

    @property
    def n_dst(self) -> int:
        return len(self.dst_ids)


@dataclass(frozen=True)
class SampledBatch:
    seeds: np.ndarray
    blocks: tuple[Block, ...]
    fanouts: tuple[Optional[int], ...]


def sample_neighbors(graph: KnowledgeGraph, seeds, fanouts: Sequence[Optional[int]],
                     directions, seed: int = 0) -> SampledBatch:
    """Uniform without-replacement neighbor sampling, one fanout per layer.

    ``fanouts[k]`` caps the incident edges kept per node for layer ``k``
    (``None`` keeps everything); all edges are kept when the degree is at
    or under the cap. ``directions`` gives per-layer edge orientation,
    ``in`` or ``both``, outermost layer first. Deterministic per ``seed``.
    """
    seeds = np.asarray(seeds, dtype=np.int64)
    if seeds.size == 0:
        raise ValueError("seeds must be non-empty")
    if isinstance(directions, str):
        directions = [directions] * len(fanouts)
    if len(directions) != len(fanouts):
        raise ValueError("directions and fanouts must have equal length")
    for d in directions:
        if d not in ("in", "both"):
            raise ValueError(f"direction must be 'in' or 'both', got {d!r}")
    if (seeds < 0).any() or (seeds >= graph.n_nodes).any():
        raise ValueError("seed node handle out of range")

    in_adj, out_adj = graph._adjacency()
    rng = np.random.Generator(np.random.PCG64(seed))

    blocks: list[Block] = []
    cur = seeds
    for fanout, direction in zip(reversed(list(fanouts)), reversed(list(directions))):
        frontier_pos: dict[int, int] = {int(v): i for i, v in enumerate(cur)}
        src_ids = list(cur)
        edge_src: list[int] = []
        edge_dst: list[int] = []
        edge_rel: list[int] = []
        edge_dir: list[int] = []
        for j, v in enumerate(cur):
            v = int(v)
            candidates = [(u, r, 0) for u, r, _ in in_adj[v]]
            if direction == "both":
                candidates += [(w, r, 1) for w, r, _ in out_adj[v]]
            if fanout is not None and len(candidates) > fanout:
                chosen = rng.choice(len(candidates), size=fanout, replace=False)
                candidates = [candidates[i] for i in sorted(chosen)]
            for u, r, d in candidates:
                pos = frontier_pos.get(u)
                if pos is None:
                    pos = len(src_ids)
                    frontier_pos[u] = pos
                    src_ids.append(u)
                edge_src.append(pos)
                edge_dst.append(j)
                edge_rel.append(r)
                edge_dir.append(d)
        blocks.append(Block(
            src_ids=np.asarray(src_ids, dtype=np.int64),
            dst_ids=np.asarray(cur, dtype=np.int64),
            edge_src=np.asarray(edge_src, dtype=np.int64),
            edge_dst=np.asarray(edge_dst, dtype=np.int64),
            edge_rel=np.asarray(edge_rel, dtype=np.int64),
            edge_dir=np.asarray(edge_dir, dtype=np.int64),
            direction=direction,
        ))
        cur = blocks[-1].src_ids
    blocks.reverse()
    return SampledBatch(seeds=seeds, blocks=tuple(blocks), fanouts=tuple(fanouts))


def full_graph_batch(graph: KnowledgeGraph, directions) -> SampledBatch:
    """Unbounded-fanout batch over every node, for full-graph inference."""
    n_layers = len(directions) if not isinstance(directions, str) else None
    if n_layers is None:
        raise ValueError("directions must be a per-layer sequence")
    return sample_neighbors(
        graph, np.arange(graph.n_nodes, dtype=np.int64),
        fanouts=[None] * n_layers, directions=directions, seed=0,
    )
