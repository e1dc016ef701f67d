"""Scikit-learn style estimator wrapping the full self-supervised pipeline:
``fit`` trains an encoder on a pretext task, ``transform`` produces node
embeddings, ``predict`` types the graph's target terms.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, NumericError, Tensor
from .fileio import read_checkpoint, write_checkpoint
from .graph import KnowledgeGraph
from .layers import Encoder, encoder_spec
from .pretext import (
    AugmentSpec, DistMultDecoder, GNNDecoder, augment_view,
    feature_reconstruction_loss, infonce_loss, make_feature_decoder,
    relation_reconstruction_loss,
)
from .sampling import full_graph_batch, sample_neighbors
from .typing_eval import TypingResult, assign_types, compute_metrics
from .validation import (
    ENCODER_KINDS, check_fraction, check_graph, check_option, check_positive,
    check_task_decoder,
)


def default_batch_size(n_nodes: int) -> int:
    """Batch 256 below 1e5 nodes, 512 at or above."""
    return 256 if n_nodes < 100_000 else 512


def _seed_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint64)[0])


class GSSLTermTyper:
    """Self-supervised node encoder with nearest-type term typing.

    Follows the scikit-learn estimator protocol (``get_params`` /
    ``set_params`` / ``fit`` / ``transform`` / ``predict``) so it composes
    with pipeline and grid tooling. Everything is seeded: two fits with
    identical parameters and graph produce bitwise-identical embeddings.
    """

    def __init__(self, task="feature_reconstruction", encoder="rgcn",
                 encoder_aggregator="conv", decoder="mlp", decoder_aggregator="conv",
                 hidden_dims=(384, 256), num_bases=8, activation="relu",
                 temperature=0.5, edge_drop_p=0.2, feature_mask_p=0.2,
                 inter_view_only=False, exclude_type_negatives=False,
                 epochs=50, batch_size=None, fanout=200, lr=1e-3,
                 dropout=0.0, seed=0):
        self.task = task
        self.encoder = encoder
        self.encoder_aggregator = encoder_aggregator
        self.decoder = decoder
        self.decoder_aggregator = decoder_aggregator
        self.hidden_dims = tuple(hidden_dims)
        self.num_bases = num_bases
        self.activation = activation
        self.temperature = temperature
        self.edge_drop_p = edge_drop_p
        self.feature_mask_p = feature_mask_p
        self.inter_view_only = inter_view_only
        self.exclude_type_negatives = exclude_type_negatives
        self.epochs = epochs
        self.batch_size = batch_size
        self.fanout = fanout
        self.lr = lr
        self.dropout = dropout
        self.seed = seed

    # -- scikit-learn protocol -------------------------------------------

    _PARAM_NAMES = (
        "task", "encoder", "encoder_aggregator", "decoder", "decoder_aggregator",
        "hidden_dims", "num_bases", "activation", "temperature", "edge_drop_p",
        "feature_mask_p", "inter_view_only", "exclude_type_negatives",
        "epochs", "batch_size", "fanout", "lr", "dropout", "seed",
    )

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._PARAM_NAMES}

    def set_params(self, **params) -> "GSSLTermTyper":
        for name, value in params.items():
            if name not in self._PARAM_NAMES:
                raise ValueError(f"unknown parameter {name!r} for GSSLTermTyper")
            setattr(self, name, value)
        return self

    def _validate(self, graph: KnowledgeGraph) -> None:
        check_option("encoder", self.encoder, ENCODER_KINDS)
        check_task_decoder(self.task, self.decoder)
        check_option("encoder_aggregator", self.encoder_aggregator, ("conv", "attn"))
        check_option("decoder_aggregator", self.decoder_aggregator, ("conv", "attn"))
        check_positive("epochs", self.epochs)
        check_positive("lr", self.lr)
        check_positive("temperature", self.temperature)
        check_fraction("edge_drop_p", self.edge_drop_p)
        check_fraction("feature_mask_p", self.feature_mask_p)
        check_fraction("dropout", self.dropout, inclusive=False)
        if self.fanout is not None:
            check_positive("fanout", self.fanout)
        if self.batch_size is not None:
            check_positive("batch_size", self.batch_size)
        if len(self.hidden_dims) != 2:
            raise ValueError("hidden_dims must give the two hidden layer widths")
        check_graph(graph, require_features=True,
                    require_edges=self.task == "relation_reconstruction")

    # -- construction ------------------------------------------------------

    def _build(self, graph: KnowledgeGraph, dtype=np.float32):
        d = graph.feature_dim
        dims = (d, self.hidden_dims[0], self.hidden_dims[1])
        enc_seed, dec_seed, shuffle_seed, sample_seed, augment_seed = \
            np.random.SeedSequence(self.seed).spawn(5)
        num_bases = min(self.num_bases, max(graph.n_relations, 1))
        spec = encoder_spec(
            self.encoder, dims,
            aggregator=self.encoder_aggregator if self.encoder in ("transgcn", "rotategcn")
            else ("attn" if self.encoder == "gat" else "conv"),
            num_bases=num_bases if self.encoder == "rgcn" else None,
            dropout=self.dropout, seed=_seed_int(enc_seed), activation=self.activation,
        )
        encoder = Encoder(spec, graph.n_relations,
                          relation_features=graph.relation_features, dtype=dtype)
        if self.task == "feature_reconstruction":
            decoder = make_feature_decoder(
                self.decoder, dims, d, graph.n_relations, dec_seed,
                aggregator=self.decoder_aggregator,
                num_bases=num_bases if self.decoder == "rgcn" else None, dtype=dtype)
        elif self.task == "relation_reconstruction":
            decoder = DistMultDecoder(dims[2], graph.n_relations, dec_seed, dtype=dtype)
        else:
            decoder = None
        rngs = {
            "shuffle": np.random.Generator(np.random.PCG64(shuffle_seed)),
            "sample": np.random.Generator(np.random.PCG64(sample_seed)),
            "augment": np.random.Generator(np.random.PCG64(augment_seed)),
        }
        return spec, encoder, decoder, rngs

    def _all_params(self) -> dict[str, Tensor]:
        params = dict(self.encoder_.params)
        if self.decoder_ is not None:
            for name, tensor in self.decoder_.params.items():
                params[f"dec.{name}"] = tensor
        return params

    # -- training ----------------------------------------------------------

    def fit(self, graph: KnowledgeGraph, y=None) -> "GSSLTermTyper":
        self._validate(graph)
        spec, encoder, decoder, rngs = self._build(graph)
        self.spec_ = spec
        self.encoder_ = encoder
        self.decoder_ = decoder
        self.graph_ = graph
        self.n_features_in_ = graph.feature_dim
        self.loss_curve_ = []
        self.recon_accuracy_curve_ = []
        self._embeddings = None

        opt = Adam(self._all_params(), lr=self.lr)
        batch_size = self.batch_size or default_batch_size(graph.n_nodes)
        for _ in range(self.epochs):
            if self.task == "relation_reconstruction":
                loss, acc = self._epoch_relation(graph, opt, batch_size, rngs)
                self.recon_accuracy_curve_.append(acc)
            elif self.task == "feature_reconstruction":
                loss = self._epoch_feature(graph, opt, batch_size, rngs)
            else:
                loss = self._epoch_contrastive(graph, opt, batch_size, rngs)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss {loss!r}")
            self.loss_curve_.append(loss)
        return self

    def _batches(self, n_items: int, batch_size: int, rng) -> list[np.ndarray]:
        order = rng.permutation(n_items)
        return [order[i:i + batch_size] for i in range(0, n_items, batch_size)]

    def _step(self, opt, loss: Tensor) -> float:
        opt.zero_grad()
        ad.backward(loss)
        opt.step()
        return loss.item()

    def _epoch_feature(self, graph, opt, batch_size, rngs) -> float:
        gnn_decoder = isinstance(self.decoder_, GNNDecoder)
        directions = list(self.spec_.directions)
        fanouts = [self.fanout] * 2
        if gnn_decoder:
            directions.append(self.decoder_.direction)
            fanouts.append(self.fanout)
        total, weight = 0.0, 0
        for seeds in self._batches(graph.n_nodes, batch_size, rngs["shuffle"]):
            batch = sample_neighbors(graph, seeds, fanouts, directions,
                                     seed=_seed_int_from(rngs["sample"]))
            H = self.encoder_.forward(batch, graph.node_features, training=True,
                                      dropout_rng=rngs["sample"])
            x_hat = self.decoder_.decode(H, batch.blocks[2] if gnn_decoder else None)
            loss = feature_reconstruction_loss(x_hat, graph.node_features[seeds])
            total += self._step(opt, loss) * len(seeds)
            weight += len(seeds)
        return total / weight

    def _epoch_relation(self, graph, opt, batch_size, rngs) -> tuple[float, float]:
        edges = np.array([(t.head, t.relation, t.tail) for t in graph.edges], dtype=np.int64)
        total, acc_total, weight = 0.0, 0.0, 0
        for picks in self._batches(len(edges), batch_size, rngs["shuffle"]):
            batch_edges = edges[picks]
            seeds = np.unique(np.concatenate([batch_edges[:, 0], batch_edges[:, 2]]))
            batch = sample_neighbors(graph, seeds, [self.fanout] * 2,
                                     list(self.spec_.directions),
                                     seed=_seed_int_from(rngs["sample"]))
            H = self.encoder_.forward(batch, graph.node_features, training=True,
                                      dropout_rng=rngs["sample"])
            positions = np.stack([
                np.searchsorted(seeds, batch_edges[:, 0]),
                batch_edges[:, 1],
                np.searchsorted(seeds, batch_edges[:, 2]),
            ], axis=1)
            loss, acc = relation_reconstruction_loss(H, self.decoder_, positions)
            total += self._step(opt, loss) * len(picks)
            acc_total += acc * len(picks)
            weight += len(picks)
        return total / weight, acc_total / weight

    def _epoch_contrastive(self, graph, opt, batch_size, rngs) -> float:
        total, weight = 0.0, 0
        for seeds in self._batches(graph.n_nodes, batch_size, rngs["shuffle"]):
            if len(seeds) < 2:
                continue
            views = []
            for _ in range(2):
                view = augment_view(graph, AugmentSpec(
                    edge_drop_p=self.edge_drop_p,
                    feature_mask_p=self.feature_mask_p,
                    seed=_seed_int_from(rngs["augment"]),
                ))
                batch = sample_neighbors(view, seeds, [self.fanout] * 2,
                                         list(self.spec_.directions),
                                         seed=_seed_int_from(rngs["sample"]))
                views.append(self.encoder_.forward(batch, view.node_features,
                                                   training=True,
                                                   dropout_rng=rngs["sample"]))
            exclude = None
            if self.exclude_type_negatives and graph.type_nodes:
                exclude = np.array([int(v) in graph.type_nodes for v in seeds])
            loss = infonce_loss(views[0], views[1], self.temperature,
                                inter_view_only=self.inter_view_only,
                                exclude_mask=exclude)
            total += self._step(opt, loss) * len(seeds)
            weight += len(seeds)
        if weight == 0:
            raise ValueError("no contrastive batch had at least 2 nodes")
        return total / weight

    # -- inference ----------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "encoder_"):
            raise RuntimeError("estimator is not fitted; call fit first")

    def transform(self, graph: KnowledgeGraph | None = None) -> np.ndarray:
        """Full-graph embeddings via unbounded-fanout inference."""
        self._check_fitted()
        graph = graph if graph is not None else self.graph_
        if graph is self.graph_ and self._embeddings is not None:
            return self._embeddings
        check_graph(graph, require_features=True)
        batch = full_graph_batch(graph, directions=list(self.spec_.directions))
        H = self.encoder_.forward(batch, graph.node_features, training=False)
        out = H.data.astype(np.float32)
        if graph is self.graph_:
            self._embeddings = out
        return out

    def fit_transform(self, graph: KnowledgeGraph, y=None) -> np.ndarray:
        return self.fit(graph).transform()

    def predict_result(self, graph: KnowledgeGraph | None = None) -> TypingResult:
        self._check_fitted()
        graph = graph if graph is not None else self.graph_
        check_graph(graph, require_roles=True)
        H = self.transform(graph)
        return assign_types(H, graph.target_nodes, graph.type_nodes)

    def predict(self, graph: KnowledgeGraph | None = None) -> np.ndarray:
        """Predicted type handle for each target node, in sorted target order."""
        result = self.predict_result(graph)
        targets = sorted(result.assignments)
        return np.array([result.assignments[t] for t in targets], dtype=np.int64)

    def score(self, graph: KnowledgeGraph | None = None,
              gold: dict[int, int] | None = None) -> float:
        """Typing accuracy against a gold map."""
        if gold is None:
            raise ValueError("score requires the gold map")
        result = self.predict_result(graph)
        return compute_metrics(result, gold).accuracy

    # -- persistence ----------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        self._check_fitted()
        write_checkpoint(path, {name: t.data for name, t in self._all_params().items()})

    def load_checkpoint(self, path, graph: KnowledgeGraph) -> "GSSLTermTyper":
        """Rebuild model structure for ``graph`` and restore trained weights."""
        self._validate(graph)
        spec, encoder, decoder, _ = self._build(graph)
        self.spec_ = spec
        self.encoder_ = encoder
        self.decoder_ = decoder
        self.graph_ = graph
        self.n_features_in_ = graph.feature_dim
        self.loss_curve_ = []
        self.recon_accuracy_curve_ = []
        self._embeddings = None
        values = read_checkpoint(path)
        params = self._all_params()
        missing = set(params) - set(values)
        if missing:
            raise KeyError(f"checkpoint is missing parameters: {sorted(missing)}")
        for name, tensor in params.items():
            arr = np.asarray(values[name], dtype=tensor.data.dtype)
            if arr.shape != tensor.data.shape:
                raise ValueError(
                    f"parameter {name}: checkpoint shape {arr.shape} != {tensor.data.shape}")
            tensor.data = arr
        return self


def _seed_int_from(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2 ** 63 - 1))
