"""Pretext objectives and decoders: feature reconstruction (MSE), relation
reconstruction (DistMult + multi-class cross-entropy), and cross-view
contrastive agreement (InfoNCE), plus the edge-drop/feature-mask view
augmentation they train against.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, seeded_init
from .graph import KnowledgeGraph
from .layers import LayerSpec, MessagePassingLayer
from .sampling import Block

DECODER_KINDS = ("mlp", "gcn", "gat", "rgcn", "transgcn", "rotategcn",
                 "distmult", "contrastive-scoring")


@dataclass(frozen=True)
class AugmentSpec:
    edge_drop_p: float = 0.2
    feature_mask_p: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.edge_drop_p <= 1.0:
            raise ValueError("edge_drop_p must be in [0, 1]")
        if not 0.0 <= self.feature_mask_p <= 1.0:
            raise ValueError("feature_mask_p must be in [0, 1]")


def augment_view(graph: KnowledgeGraph, spec: AugmentSpec) -> KnowledgeGraph:
    """Corrupted view: edges dropped independently, a shared random subset
    of feature dimensions zeroed across all nodes. Deterministic per seed."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.edge_drop_p > 0 and graph.n_edges:
        keep = rng.random(graph.n_edges) >= spec.edge_drop_p
        edges = [t for t, k in zip(graph.edges, keep) if k]
    else:
        edges = graph.edges
    features = graph.node_features
    if spec.feature_mask_p > 0 and features is not None:
        d = features.shape[1]
        n_masked = int(math.floor(spec.feature_mask_p * d))
        if n_masked:
            dims = rng.choice(d, size=n_masked, replace=False)
            features = features.copy()
            features[:, dims] = 0.0
    return KnowledgeGraph(
        graph.node_labels, graph.relation_labels, edges,
        features, graph.relation_features,
        type_nodes=graph.type_nodes, target_nodes=graph.target_nodes,
    )


# ---------------------------------------------------------------------------
# decoders


class MLPDecoder:
    """Row-wise two-layer perceptron mirroring the encoder dimensions."""

    def __init__(self, dims, seed, dtype=np.float32):
        if len(dims) != 3:
            raise ValueError("mlp decoder dims must be (in, hidden, out)")
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        s = seq.spawn(2)
        self.params = {
            "W1": seeded_init((dims[0], dims[1]), "glorot-uniform", s[0],
                              dtype=dtype, requires_grad=True),
            "b1": seeded_init((1, dims[1]), "zeros", 0, dtype=dtype, requires_grad=True),
            "W2": seeded_init((dims[1], dims[2]), "glorot-uniform", s[1],
                              dtype=dtype, requires_grad=True),
            "b2": seeded_init((1, dims[2]), "zeros", 0, dtype=dtype, requires_grad=True),
        }

    def decode(self, H: Tensor, block: Optional[Block] = None) -> Tensor:
        hidden = ad.relu(ad.add(ad.matmul(H, self.params["W1"]), self.params["b1"]))
        return ad.add(ad.matmul(hidden, self.params["W2"]), self.params["b2"])


class GNNDecoder:
    """One message-passing application mapping embeddings back to feature space."""

    def __init__(self, kind, in_dim, out_dim, n_relations, seed,
                 aggregator="conv", num_bases=None, dtype=np.float32):
        spec = LayerSpec(kind, in_dim, out_dim, aggregator=aggregator,
                         num_bases=num_bases, activation="identity")
        self.spec = spec
        self.layer = MessagePassingLayer(spec, n_relations, seed, dtype=dtype)
        self.params = self.layer.params

    @property
    def direction(self) -> str:
        return self.spec.direction

    def decode(self, H: Tensor, block: Optional[Block] = None) -> Tensor:
        if block is None:
            raise ValueError("gnn decoder needs the batch subgraph block")
        return self.layer.forward(block, H)


class DistMultDecoder:
    """Diagonal-bilinear triple scorer with one vector per relation."""

    def __init__(self, dim, n_relations, seed, dtype=np.float32):
        self.params = {
            "rel_diag": seeded_init((max(n_relations, 1), dim), "glorot-uniform",
                                    seed, dtype=dtype, requires_grad=True),
        }

    def logits(self, H: Tensor, head_pos, tail_pos) -> Tensor:
        """Score every relation for each (head, tail) pair: (h * t) R^T."""
        prod = ad.mul(ad.gather_rows(H, head_pos), ad.gather_rows(H, tail_pos))
        return ad.matmul(prod, ad.transpose(self.params["rel_diag"]))


def distmult_score(h: Tensor, r_diag: Tensor, t: Tensor) -> Tensor:
    """Trilinear score sum_i h_i * r_i * t_i; symmetric in head and tail."""
    if h.shape != r_diag.shape or h.shape != t.shape:
        raise ValueError("distmult_score expects equal-dimension vectors")
    return ad.total_sum(ad.mul(ad.mul(h, r_diag), t))


# ---------------------------------------------------------------------------
# losses


def feature_reconstruction_loss(x_hat: Tensor, x_true: np.ndarray) -> Tensor:
    """Mean squared error over batch nodes and feature dimensions."""
    if x_hat.shape != tuple(np.asarray(x_true).shape):
        raise ValueError(f"reconstruction shape {x_hat.shape} != target {np.asarray(x_true).shape}")
    if x_hat.shape[0] == 0:
        raise ValueError("empty batch")
    diff = ad.sub(x_hat, Tensor(np.asarray(x_true, dtype=x_hat.data.dtype)))
    return ad.mean(ad.mul(diff, diff))


def relation_reconstruction_loss(H: Tensor, decoder: DistMultDecoder,
                                 edges_batch) -> tuple[Tensor, float]:
    """|R|-way cross-entropy over observed edges, plus argmax accuracy.

    ``edges_batch`` rows are (head position in H, relation id, tail position).
    """
    edges_batch = np.asarray(edges_batch, dtype=np.int64)
    if edges_batch.size == 0:
        raise ValueError("empty edge batch")
    head_pos, rels, tail_pos = edges_batch[:, 0], edges_batch[:, 1], edges_batch[:, 2]
    logits = decoder.logits(H, head_pos, tail_pos)
    logp = ad.row_log_softmax(logits)
    loss = ad.scalar_mul(ad.mean(ad.pick_per_row(logp, rels)), -1.0)
    accuracy = float((logits.data.argmax(axis=1) == rels).mean())
    return loss, accuracy


def contrastive_scoring(h_a: Tensor, h_b: Tensor, tau: float) -> Tensor:
    """Pairwise cosine similarities scaled by 1/tau; zero rows score 0."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    if h_a.shape[1] != h_b.shape[1]:
        raise ValueError("embedding dimensions differ")
    for name, t in (("first", h_a), ("second", h_b)):
        if (np.linalg.norm(t.data, axis=1) == 0).any():
            warnings.warn(f"zero-norm row in {name} view treated as similarity 0")
    za = ad.l2_normalize_rows(h_a)
    zb = ad.l2_normalize_rows(h_b)
    return ad.scalar_mul(ad.matmul(za, ad.transpose(zb)), 1.0 / tau)


def infonce_loss(h1: Tensor, h2: Tensor, tau: float,
                 inter_view_only: bool = False,
                 exclude_mask: Optional[np.ndarray] = None) -> Tensor:
    """Symmetrized cross-view InfoNCE with intra-view negatives.

    Row i of each view is the positive for row i of the other; negatives
    are every other row of both views unless ``inter_view_only`` drops the
    intra-view set. ``exclude_mask`` removes flagged rows from every
    negative pool while leaving their own positive pairs intact.
    """
    if h1.shape != h2.shape:
        raise ValueError("views must share a shape")
    n = h1.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs at least 2 nodes for negatives")
    s12 = contrastive_scoring(h1, h2, tau)
    s21 = ad.transpose(s12)

    dtype = s12.data.dtype
    eye = np.eye(n, dtype=bool)
    if exclude_mask is not None:
        exclude_mask = np.asarray(exclude_mask, dtype=bool)
        if exclude_mask.shape != (n,):
            raise ValueError("exclude_mask must have one flag per row")
        col_excluded = np.broadcast_to(exclude_mask, (n, n))
    else:
        col_excluded = np.zeros((n, n), dtype=bool)

    # cross-view: positives on the diagonal survive; excluded columns only
    # disappear as negatives
    cross_mask = np.where(col_excluded & ~eye, -np.inf, 0.0).astype(dtype)
    masked12 = ad.add(s12, Tensor(cross_mask))
    masked21 = ad.add(s21, Tensor(cross_mask))

    def one_side(cross, intra_source):
        if inter_view_only:
            cands = cross
        else:
            intra = contrastive_scoring(intra_source, intra_source, tau)
            intra_mask = np.where(eye | col_excluded, -np.inf, 0.0).astype(dtype)
            cands = ad.concat([cross, ad.add(intra, Tensor(intra_mask))], axis=1)
        logp = ad.row_log_softmax(cands)
        return ad.scalar_mul(ad.mean(ad.pick_per_row(logp, np.arange(n))), -1.0)

    loss = ad.add(one_side(masked12, h1), one_side(masked21, h2))
    return ad.scalar_mul(loss, 0.5)


def make_feature_decoder(kind: str, encoder_dims, feature_dim: int, n_relations: int,
                         seed, aggregator: str = "conv", num_bases=None,
                         dtype=np.float32):
    """Decoder for feature reconstruction: MLP mirrors the encoder dims,
    GNN kinds run one message-passing step back to the feature width."""
    if kind == "mlp":
        return MLPDecoder((encoder_dims[2], encoder_dims[1], feature_dim), seed, dtype=dtype)
    if kind in ("gcn", "gat", "rgcn", "transgcn", "rotategcn"):
        return GNNDecoder(kind, encoder_dims[2], feature_dim, n_relations, seed,
                          aggregator=aggregator, num_bases=num_bases, dtype=dtype)
    raise ValueError(f"not a feature-reconstruction decoder: {kind!r}")
