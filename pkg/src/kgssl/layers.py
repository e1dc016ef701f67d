"""Message-passing layers: GCN, GAT, RGCN (basis decomposition), and the
translation/rotation relational layers with bidirectional propagation.

GCN, GAT, and RGCN aggregate over incoming edges only. The translation and
rotation layers consume both directions, applying the relation operator
forward on incoming edges and inverted on outgoing ones, matching a
head-operator-tail scoring convention. Relation-aware layers own their
relation parameter tables per layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, seeded_init
from .sampling import Block

LAYER_KINDS = ("gcn", "gat", "rgcn", "transgcn", "rotategcn")
KIND_DIRECTION = {"gcn": "in", "gat": "in", "rgcn": "in",
                  "transgcn": "both", "rotategcn": "both"}
ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    aggregator: str = "conv"
    num_bases: Optional[int] = None
    activation: str = "relu"

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.aggregator not in ("conv", "attn"):
            raise ValueError(f"aggregator must be conv or attn, got {self.aggregator!r}")
        if self.aggregator == "attn" and self.kind in ("gcn", "rgcn"):
            raise ValueError(f"{self.kind} does not support the attn aggregator")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError("layer dimensions must be positive")
        if self.kind == "rgcn" and (self.num_bases is None or self.num_bases < 1):
            raise ValueError("rgcn requires num_bases >= 1")
        if self.kind == "rotategcn" and self.in_dim % 2 != 0:
            raise ValueError("rotategcn requires an even input dimension")

    @property
    def direction(self) -> str:
        return KIND_DIRECTION[self.kind]


def _activate(t: Tensor, name: str) -> Tensor:
    if name == "relu":
        return ad.relu(t)
    if name == "tanh":
        return ad.tanh(t)
    return t


def _segment_softmax(logits: Tensor, segment: np.ndarray, n_segments: int) -> Tensor:
    """Softmax of a column vector within each segment, max-shifted for stability."""
    shift = np.full(n_segments, -np.inf, dtype=logits.data.dtype)
    np.maximum.at(shift, segment, logits.data[:, 0])
    shifted = ad.sub(logits, Tensor(shift[segment][:, None]))
    z = ad.exp(shifted)
    denom = ad.scatter_add_rows(z, segment, n_segments)
    return ad.div(z, ad.gather_rows(denom, segment))


def _attention_aggregate(candidates: Tensor, cand_dst: np.ndarray, h_dst: Tensor,
                         params: dict[str, Tensor], n_dst: int) -> Tensor:
    """Single-head additive attention over each target's candidate messages."""
    cand_w = ad.matmul(candidates, params["W"])
    query = ad.matmul(ad.matmul(h_dst, params["W"]), params["a_dst"])
    keys = ad.matmul(cand_w, params["a_src"])
    logits = ad.leaky_relu(ad.add(ad.gather_rows(query, cand_dst), keys))
    alpha = _segment_softmax(logits, cand_dst, n_dst)
    return ad.scatter_add_rows(ad.mul(cand_w, alpha), cand_dst, n_dst)


def _dst_rows(block: Block, H: Tensor) -> Tensor:
    return ad.gather_rows(H, np.arange(block.n_dst))


def _in_edges(block: Block):
    """Restrict a block to messages flowing along stored edges."""
    if not (block.edge_dir == 1).any():
        return block.edge_src, block.edge_dst, block.edge_rel
    keep = block.edge_dir == 0
    return block.edge_src[keep], block.edge_dst[keep], block.edge_rel[keep]


class MessagePassingLayer:
    """One configured layer with its trainable parameters."""

    def __init__(self, spec: LayerSpec, n_relations: int, seed,
                 dtype=np.float32, relation_features: Optional[np.ndarray] = None):
        self.spec = spec
        self.n_relations = n_relations
        self.params: dict[str, Tensor] = {}
        kind = spec.kind
        if kind == "rgcn" and spec.num_bases > max(n_relations, 1):
            raise ValueError(
                f"num_bases {spec.num_bases} exceeds relation count {n_relations}"
            )
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        streams = iter(seq.spawn(8))

        def init(shape, scheme="glorot-uniform"):
            return seeded_init(shape, scheme, next(streams), dtype=dtype, requires_grad=True)

        self.params["W"] = init((spec.in_dim, spec.out_dim))
        if kind == "gat" or spec.aggregator == "attn":
            self.params["a_src"] = init((spec.out_dim, 1))
            self.params["a_dst"] = init((spec.out_dim, 1))
        if kind == "rgcn":
            self.params["basis_coeff"] = init((max(n_relations, 1), spec.num_bases))
            self.params["basis"] = init((spec.num_bases, spec.in_dim * spec.out_dim))
        elif kind == "transgcn":
            if relation_features is not None and relation_features.shape == (n_relations, spec.in_dim):
                self.params["rel_embed"] = Tensor(
                    relation_features.astype(dtype), requires_grad=True)
            else:
                self.params["rel_embed"] = init((max(n_relations, 1), spec.in_dim))
        elif kind == "rotategcn":
            self.params["rel_angles"] = init(
                (max(n_relations, 1), spec.in_dim // 2), scheme="unit-phases")

    def forward(self, block: Block, H: Tensor) -> Tensor:
        kind = self.spec.kind
        if kind == "gcn":
            out = self._gcn(block, H)
        elif kind == "gat":
            out = self._gat(block, H)
        elif kind == "rgcn":
            out = self._rgcn(block, H)
        else:
            out = self._relational(block, H)
        return _activate(out, self.spec.activation)

    # -- unidirectional layers ------------------------------------------

    def _gcn(self, block: Block, H: Tensor) -> Tensor:
        """Symmetric normalization over incoming edges plus a self-loop.

        Degrees are in-degree + 1 within the provided subgraph; source-only
        frontier nodes, whose in-edges were not sampled, count as degree 1.
        """
        edge_src, edge_dst, _ = _in_edges(block)
        m = block.n_dst
        deg_dst = np.bincount(edge_dst, minlength=m).astype(H.data.dtype) + 1.0
        deg_src = np.ones(block.n_src, dtype=H.data.dtype)
        deg_src[:m] = deg_dst
        h_dst = _dst_rows(block, H)
        agg = ad.mul(h_dst, Tensor((1.0 / deg_dst)[:, None]))
        if len(edge_src):
            norm = 1.0 / np.sqrt(deg_src[edge_src] * deg_dst[edge_dst])
            msg = ad.mul(ad.gather_rows(H, edge_src), Tensor(norm[:, None]))
            agg = ad.add(agg, ad.scatter_add_rows(msg, edge_dst, m))
        return ad.matmul(agg, self.params["W"])

    def _gat(self, block: Block, H: Tensor) -> Tensor:
        edge_src, edge_dst, _ = _in_edges(block)
        m = block.n_dst
        cand_src = np.concatenate([np.arange(m, dtype=np.int64), edge_src])
        cand_dst = np.concatenate([np.arange(m, dtype=np.int64), edge_dst])
        candidates = ad.gather_rows(H, cand_src)
        return _attention_aggregate(candidates, cand_dst, _dst_rows(block, H),
                                    self.params, m)

    def _rgcn(self, block: Block, H: Tensor) -> Tensor:
        edge_src, edge_dst, edge_rel = _in_edges(block)
        m = block.n_dst
        out = ad.matmul(_dst_rows(block, H), self.params["W"])
        if len(edge_src) == 0:
            return out
        w_all = ad.matmul(self.params["basis_coeff"], self.params["basis"])
        din, dout = self.spec.in_dim, self.spec.out_dim
        for r in np.unique(edge_rel):
            sel = edge_rel == r
            src, dst = edge_src[sel], edge_dst[sel]
            w_r = ad.reshape(ad.gather_rows(w_all, np.array([r])), (din, dout))
            msg = ad.matmul(ad.gather_rows(H, src), w_r)
            counts = np.bincount(dst, minlength=m).astype(H.data.dtype)
            coef = 1.0 / counts[dst]
            out = ad.add(out, ad.scatter_add_rows(
                ad.mul(msg, Tensor(coef[:, None])), dst, m))
        return out

    # -- bidirectional relational layers --------------------------------

    def _relational(self, block: Block, H: Tensor) -> Tensor:
        m = block.n_dst
        h_dst = _dst_rows(block, H)
        n_edges = len(block.edge_src)
        if n_edges:
            sign = np.where(block.edge_dir == 0, 1.0, -1.0).astype(H.data.dtype)
            h_nbr = ad.gather_rows(H, block.edge_src)
            if self.spec.kind == "transgcn":
                rel = ad.gather_rows(self.params["rel_embed"], block.edge_rel)
                msg = ad.add(h_nbr, ad.mul(rel, Tensor(sign[:, None])))
            else:
                angles = ad.gather_rows(self.params["rel_angles"], block.edge_rel)
                msg = ad.pair_rotate(h_nbr, ad.mul(angles, Tensor(sign[:, None])))
        else:
            msg = None

        if self.spec.aggregator == "conv":
            if msg is None:
                mean = h_dst
            else:
                counts = np.bincount(block.edge_dst, minlength=m).astype(H.data.dtype)
                total = ad.add(h_dst, ad.scatter_add_rows(msg, block.edge_dst, m))
                mean = ad.mul(total, Tensor((1.0 / (1.0 + counts))[:, None]))
            return ad.matmul(mean, self.params["W"])

        if msg is None:
            candidates = h_dst
            cand_dst = np.arange(m, dtype=np.int64)
        else:
            candidates = ad.concat([h_dst, msg], axis=0)
            cand_dst = np.concatenate([np.arange(m, dtype=np.int64), block.edge_dst])
        return _attention_aggregate(candidates, cand_dst, h_dst, self.params, m)


@dataclass(frozen=True)
class EncoderSpec:
    """Two stacked layers plus dropout and the parameter seed."""

    layers: tuple[LayerSpec, ...]
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if len(self.layers) != 2:
            raise ValueError("encoder uses exactly two hidden layers")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.layers[0].out_dim != self.layers[1].in_dim:
            raise ValueError("layer dimensions do not chain")

    @property
    def directions(self) -> tuple[str, ...]:
        return tuple(layer.direction for layer in self.layers)

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim


def encoder_spec(kind: str, dims, aggregator: str = "conv", num_bases: Optional[int] = None,
                 dropout: float = 0.0, seed: int = 0, activation: str = "relu") -> EncoderSpec:
    """Build a two-layer spec from ``dims = (in, hidden, out)`` of one kind."""
    if len(dims) != 3:
        raise ValueError("dims must be (input, hidden, output)")
    layers = (
        LayerSpec(kind, dims[0], dims[1], aggregator=aggregator,
                  num_bases=num_bases, activation=activation),
        LayerSpec(kind, dims[1], dims[2], aggregator=aggregator,
                  num_bases=num_bases, activation="identity"),
    )
    return EncoderSpec(layers=layers, dropout=dropout, seed=seed)


class Encoder:
    """Two-layer encoder over sampled blocks; owns all trainable tensors."""

    def __init__(self, spec: EncoderSpec, n_relations: int,
                 relation_features: Optional[np.ndarray] = None, dtype=np.float32):
        self.spec = spec
        seq = np.random.SeedSequence(spec.seed)
        layer_seeds = seq.spawn(len(spec.layers) + 1)
        self.layers = [
            MessagePassingLayer(layer_spec, n_relations, layer_seeds[i], dtype=dtype,
                                relation_features=relation_features if i == 0 else None)
            for i, layer_spec in enumerate(spec.layers)
        ]
        self._dropout_seed = layer_seeds[-1]

    @property
    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, layer in enumerate(self.layers):
            for name, tensor in layer.params.items():
                out[f"enc{i}.{name}"] = tensor
        return out

    def load_params(self, values: dict[str, np.ndarray]) -> None:
        params = self.params
        missing = set(params) - set(values)
        if missing:
            raise KeyError(f"checkpoint is missing parameters: {sorted(missing)}")
        for name, tensor in params.items():
            arr = np.asarray(values[name], dtype=tensor.data.dtype)
            if arr.shape != tensor.data.shape:
                raise ValueError(f"parameter {name}: shape {arr.shape} != {tensor.data.shape}")
            tensor.data = arr

    def forward(self, batch, X: np.ndarray, training: bool = False,
                dropout_rng: Optional[np.random.Generator] = None) -> Tensor:
        if len(batch.blocks) < len(self.layers):
            raise ValueError("batch has fewer blocks than encoder layers")
        H = Tensor(np.asarray(X, dtype=self.layers[0].params["W"].dtype)[batch.blocks[0].src_ids])
        for i, layer in enumerate(self.layers):
            H = layer.forward(batch.blocks[i], H)
            if training and self.spec.dropout > 0 and i + 1 < len(self.layers):
                rng = dropout_rng or np.random.Generator(np.random.PCG64(self._dropout_seed))
                keep = 1.0 - self.spec.dropout
                mask = (rng.random(H.shape) < keep).astype(H.data.dtype) / keep
                H = ad.mul(H, Tensor(mask))
        if not np.isfinite(H.data).all():
            raise ad.NumericError("encoder produced non-finite embeddings")
        return H
