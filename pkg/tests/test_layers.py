import math

import numpy as np
import pytest

from kgssl import autodiff as ad
from kgssl.autodiff import Tensor, grad_check, total_sum
from kgssl.layers import (
    Encoder, EncoderSpec, LayerSpec, MessagePassingLayer, _segment_softmax,
    encoder_spec,
)
from kgssl.sampling import full_graph_batch, sample_neighbors

from conftest import make_graph


def layer_for(graph, kind, in_dim, out_dim, aggregator="conv", activation="identity",
              num_bases=None, dtype=np.float64, seed=0):
    if kind == "rgcn" and num_bases is None:
        num_bases = max(graph.n_relations, 1)
    spec = LayerSpec(kind, in_dim, out_dim, aggregator=aggregator,
                     num_bases=num_bases, activation=activation)
    return MessagePassingLayer(spec, graph.n_relations, seed, dtype=dtype)


def one_block(graph, direction):
    return full_graph_batch(graph, directions=[direction]).blocks[0]


def set_param(layer, name, value):
    layer.params[name] = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)


class TestGCN:
    def test_isolated_node_identity(self):
        g = make_graph([], n_nodes=1, n_relations=1)
        layer = layer_for(g, "gcn", 3, 3)
        set_param(layer, "W", np.eye(3))
        h = np.array([[1.0, 2.0, 3.0]])
        out = layer.forward(one_block(g, "in"), Tensor(h))
        assert np.allclose(out.data, h)

    def test_two_node_one_edge_normalization(self):
        # in-degree+1 degrees: deg(a)=1, deg(b)=2
        # b mixes h_b/2 + h_a/sqrt(2); a keeps h_a
        g = make_graph([(0, 0, 1)])
        layer = layer_for(g, "gcn", 2, 2)
        set_param(layer, "W", np.eye(2))
        h = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = layer.forward(one_block(g, "in"), Tensor(h)).data
        assert np.allclose(out[0], [1.0, 0.0])
        assert np.allclose(out[1], [1.0 / math.sqrt(2.0), 0.5])

    def test_permutation_equivariance(self):
        self._equivariance_check("gcn")

    @staticmethod
    def _equivariance_check(kind, aggregator="conv"):
        rng = np.random.Generator(np.random.PCG64(3))
        edges = [(0, 0, 1), (1, 1, 2), (2, 0, 3), (3, 1, 0), (1, 0, 3)]
        g = make_graph(edges, n_nodes=4, n_relations=2)
        direction = "both" if kind in ("transgcn", "rotategcn") else "in"
        layer = layer_for(g, kind, 4, 4, aggregator=aggregator, seed=5)
        h = rng.normal(size=(4, 4))
        out = layer.forward(one_block(g, direction), Tensor(h)).data

        perm = np.array([2, 0, 3, 1])
        inv = np.argsort(perm)
        g2 = make_graph([(int(perm[a]), r, int(perm[b])) for a, r, b in edges],
                        n_nodes=4, n_relations=2)
        out2 = layer.forward(one_block(g2, direction), Tensor(h[inv])).data
        assert np.allclose(out2, out[inv], atol=1e-6)


class TestGAT:
    def test_self_only_attention_weight_is_one(self):
        g = make_graph([], n_nodes=1, n_relations=1)
        layer = layer_for(g, "gat", 3, 3, seed=2)
        h = np.array([[0.5, -1.0, 2.0]])
        out = layer.forward(one_block(g, "in"), Tensor(h)).data
        expected = h @ layer.params["W"].data
        assert np.allclose(out, expected, atol=1e-6)

    def test_identical_neighbors_share_weight(self):
        g = make_graph([(1, 0, 0), (2, 0, 0)])
        layer = layer_for(g, "gat", 2, 2, seed=4)
        h = np.array([[0.1, 0.2], [1.0, -1.0], [1.0, -1.0]])
        out = layer.forward(one_block(g, "in"), Tensor(h)).data
        # swap rows 1 and 2 (identical features): output for node 0 unchanged
        out_swapped = layer.forward(one_block(g, "in"), Tensor(h[[0, 2, 1]])).data
        assert np.allclose(out[0], out_swapped[0], atol=1e-6)

    def test_uniform_params_give_mean_over_candidates(self):
        g = make_graph([(1, 0, 0)])
        layer = layer_for(g, "gat", 2, 2, seed=0)
        set_param(layer, "W", np.eye(2))
        set_param(layer, "a_src", np.zeros((2, 1)))
        set_param(layer, "a_dst", np.zeros((2, 1)))
        h = np.array([[2.0, 0.0], [0.0, 4.0]])
        out = layer.forward(one_block(g, "in"), Tensor(h)).data
        assert np.allclose(out[0], [1.0, 2.0], atol=1e-6)

    def test_equivariance(self):
        TestGCN._equivariance_check("gat")


def test_segment_softmax_sums_to_one():
    rng = np.random.Generator(np.random.PCG64(8))
    for _ in range(20):
        n = int(rng.integers(2, 30))
        segs = rng.integers(0, 5, size=n)
        logits = Tensor(rng.normal(scale=5.0, size=(n, 1)))
        alpha = _segment_softmax(logits, segs, 5).data[:, 0]
        sums = np.zeros(5)
        np.add.at(sums, segs, alpha)
        present = np.unique(segs)
        assert np.allclose(sums[present], 1.0, atol=1e-6)


class TestRGCN:
    def test_no_incoming_edges_gives_self_transform(self):
        g = make_graph([], n_nodes=1, n_relations=2)
        layer = layer_for(g, "rgcn", 3, 2, num_bases=2, seed=1)
        h = np.array([[1.0, -0.5, 2.0]])
        out = layer.forward(one_block(g, "in"), Tensor(h)).data
        assert np.allclose(out, h @ layer.params["W"].data, atol=1e-6)

    def test_single_message_passthrough(self):
        g = make_graph([(0, 0, 1)], n_relations=1)
        layer = layer_for(g, "rgcn", 2, 2, num_bases=1)
        set_param(layer, "W", np.zeros((2, 2)))
        set_param(layer, "basis_coeff", np.ones((1, 1)))
        set_param(layer, "basis", np.eye(2).reshape(1, 4))
        h = np.array([[3.0, -1.0], [0.0, 0.0]])
        out = layer.forward(one_block(g, "in"), Tensor(h)).data
        assert np.allclose(out[1], h[0], atol=1e-6)

    def test_full_basis_matches_per_relation_weights(self):
        rng = np.random.Generator(np.random.PCG64(6))
        g = make_graph([(0, 0, 2), (1, 1, 2), (3, 2, 2), (0, 1, 3)], n_relations=3)
        layer = layer_for(g, "rgcn", 3, 2, num_bases=3, seed=9)
        w_rel = rng.normal(size=(3, 3, 2))
        set_param(layer, "basis_coeff", np.eye(3))
        set_param(layer, "basis", w_rel.reshape(3, 6))
        w_self = layer.params["W"].data
        h = rng.normal(size=(4, 3))
        out = layer.forward(one_block(g, "in"), Tensor(h)).data

        expected = h @ w_self
        for v in range(4):
            by_rel = {}
            for hh, r, tt in [(0, 0, 2), (1, 1, 2), (3, 2, 2), (0, 1, 3)]:
                if tt == v:
                    by_rel.setdefault(r, []).append(hh)
            for r, srcs in by_rel.items():
                expected[v] += np.mean([h[u] @ w_rel[r] for u in srcs], axis=0)
        assert np.allclose(out, expected, atol=1e-6)

    def test_mean_per_relation_normalization(self):
        g = make_graph([(0, 0, 2), (1, 0, 2)], n_relations=1)
        layer = layer_for(g, "rgcn", 2, 2, num_bases=1)
        set_param(layer, "W", np.zeros((2, 2)))
        set_param(layer, "basis_coeff", np.ones((1, 1)))
        set_param(layer, "basis", np.eye(2).reshape(1, 4))
        h = np.array([[2.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
        out = layer.forward(one_block(g, "in"), Tensor(h)).data
        assert np.allclose(out[2], [1.0, 1.0], atol=1e-6)

    def test_num_bases_validation(self):
        g = make_graph([(0, 0, 1)], n_relations=1)
        with pytest.raises(ValueError, match="num_bases"):
            layer_for(g, "rgcn", 2, 2, num_bases=5)
        with pytest.raises(ValueError, match="num_bases"):
            LayerSpec("rgcn", 2, 2, num_bases=0)

    def test_equivariance(self):
        TestGCN._equivariance_check("rgcn")


class TestTransGCN:
    def test_isolated_node(self):
        g = make_graph([], n_nodes=1, n_relations=1)
        layer = layer_for(g, "transgcn", 2, 2, seed=3)
        h = np.array([[1.0, 4.0]])
        out = layer.forward(one_block(g, "both"), Tensor(h)).data
        assert np.allclose(out, h @ layer.params["W"].data, atol=1e-6)

    def test_zero_relation_vector_mean(self):
        g = make_graph([(0, 0, 1)], n_relations=1)
        layer = layer_for(g, "transgcn", 2, 2)
        set_param(layer, "W", np.eye(2))
        set_param(layer, "rel_embed", np.zeros((1, 2)))
        h = np.array([[2.0, 0.0], [0.0, 2.0]])
        # in-direction only block: v=1 mixes (h_1 + (h_0 + 0)) / 2
        batch = sample_neighbors(g, [1], fanouts=[None], directions=["in"], seed=0)
        block = batch.blocks[0]
        out = layer.forward(block, Tensor(h[block.src_ids])).data
        assert np.allclose(out[0], [1.0, 1.0], atol=1e-6)

    def test_bidirectional_translation_signs(self):
        g = make_graph([(0, 0, 1)], n_relations=1)
        layer = layer_for(g, "transgcn", 2, 2)
        set_param(layer, "W", np.eye(2))
        rvec = np.array([[0.5, -0.25]])
        set_param(layer, "rel_embed", rvec)
        h = np.array([[2.0, 0.0], [0.0, 2.0]])
        out = layer.forward(one_block(g, "both"), Tensor(h)).data
        # v=1 receives h_0 + r; u=0 receives h_1 - r; both mean with self
        assert np.allclose(out[1], (h[1] + h[0] + rvec[0]) / 2.0, atol=1e-6)
        assert np.allclose(out[0], (h[0] + h[1] - rvec[0]) / 2.0, atol=1e-6)

    def test_message_linear_in_neighbor_feature(self):
        g = make_graph([(0, 0, 1)], n_relations=1)
        layer = layer_for(g, "transgcn", 2, 2)
        set_param(layer, "W", np.eye(2))
        h = np.array([[1.0, 1.0], [0.0, 0.0]])
        delta = np.array([0.3, -0.7])
        base = layer.forward(one_block(g, "both"), Tensor(h)).data
        h2 = h.copy()
        h2[0] += delta
        shifted = layer.forward(one_block(g, "both"), Tensor(h2)).data
        assert np.allclose(shifted[1] - base[1], delta / 2.0, atol=1e-6)

    def test_attn_aggregator_runs_and_differs_from_conv(self):
        rng = np.random.Generator(np.random.PCG64(12))
        g = make_graph([(0, 0, 2), (1, 1, 2)], n_relations=2)
        conv = layer_for(g, "transgcn", 4, 3, aggregator="conv", seed=7)
        attn = layer_for(g, "transgcn", 4, 3, aggregator="attn", seed=7)
        h = rng.normal(size=(3, 4))
        out_conv = conv.forward(one_block(g, "both"), Tensor(h)).data
        out_attn = attn.forward(one_block(g, "both"), Tensor(h)).data
        assert out_conv.shape == out_attn.shape == (3, 3)
        assert not np.allclose(out_conv, out_attn)

    def test_equivariance(self):
        TestGCN._equivariance_check("transgcn")
        TestGCN._equivariance_check("transgcn", aggregator="attn")


class TestRotatEGCN:
    def test_zero_angles_reduce_to_mean_aggregation(self):
        g = make_graph([(0, 0, 1), (2, 0, 1)], n_relations=1)
        layer = layer_for(g, "rotategcn", 2, 2)
        set_param(layer, "W", np.eye(2))
        set_param(layer, "rel_angles", np.zeros((1, 1)))
        h = np.array([[3.0, 0.0], [0.0, 3.0], [3.0, 3.0]])
        batch = sample_neighbors(g, [1], fanouts=[None], directions=["in"], seed=0)
        block = batch.blocks[0]
        out = layer.forward(block, Tensor(h[block.src_ids])).data
        assert np.allclose(out[0], (h[0] + h[1] + h[2]) / 3.0, atol=1e-6)

    def test_pi_rotation_negates_pair(self):
        g = make_graph([(0, 0, 1)], n_relations=1)
        layer = layer_for(g, "rotategcn", 2, 2)
        set_param(layer, "W", np.eye(2))
        set_param(layer, "rel_angles", np.array([[math.pi]]))
        h = np.array([[1.0, 0.5], [0.0, 0.0]])
        batch = sample_neighbors(g, [1], fanouts=[None], directions=["in"], seed=0)
        block = batch.blocks[0]
        out = layer.forward(block, Tensor(h[block.src_ids])).data
        assert np.allclose(out[0], (h[1] - h[0]) / 2.0, atol=1e-6)

    def test_outgoing_edge_uses_inverse_rotation(self):
        g = make_graph([(0, 0, 1)], n_relations=1)
        layer = layer_for(g, "rotategcn", 2, 2)
        set_param(layer, "W", np.eye(2))
        theta = 0.7
        set_param(layer, "rel_angles", np.array([[theta]]))
        h = np.array([[1.0, 2.0], [0.5, -0.5]])
        out = layer.forward(one_block(g, "both"), Tensor(h)).data
        c, s = math.cos(theta), math.sin(theta)
        fwd = np.array([h[0, 0] * c - h[0, 1] * s, h[0, 0] * s + h[0, 1] * c])
        inv = np.array([h[1, 0] * c + h[1, 1] * s, -h[1, 0] * s + h[1, 1] * c])
        assert np.allclose(out[1], (h[1] + fwd) / 2.0, atol=1e-6)
        assert np.allclose(out[0], (h[0] + inv) / 2.0, atol=1e-6)

    def test_odd_dimension_rejected(self):
        with pytest.raises(ValueError, match="even"):
            LayerSpec("rotategcn", 3, 2)

    def test_equivariance(self):
        TestGCN._equivariance_check("rotategcn")
        TestGCN._equivariance_check("rotategcn", aggregator="attn")


class TestDirectionality:
    """Adding an outgoing-only edge moves bidirectional outputs, not
    unidirectional ones, for a node with fixed in-neighborhood."""

    BASE = [(0, 0, 2)]
    EXTRA = [(0, 0, 2), (2, 1, 1)]  # node 2 gains an outgoing edge

    @pytest.mark.parametrize("kind", ["gcn", "gat", "rgcn"])
    def test_unidirectional_invariant(self, kind):
        rng = np.random.Generator(np.random.PCG64(10))
        h = rng.normal(size=(3, 4))
        g1 = make_graph(self.BASE, n_nodes=3, n_relations=2)
        g2 = make_graph(self.EXTRA, n_nodes=3, n_relations=2)
        layer = layer_for(g1, kind, 4, 3, seed=11)
        out1 = layer.forward(one_block(g1, "in"), Tensor(h)).data
        out2 = layer.forward(one_block(g2, "in"), Tensor(h)).data
        assert np.allclose(out1[2], out2[2], atol=1e-9)

    @pytest.mark.parametrize("kind", ["transgcn", "rotategcn"])
    def test_bidirectional_sensitivity(self, kind):
        rng = np.random.Generator(np.random.PCG64(10))
        h = rng.normal(size=(3, 4))
        g1 = make_graph(self.BASE, n_nodes=3, n_relations=2)
        g2 = make_graph(self.EXTRA, n_nodes=3, n_relations=2)
        layer = layer_for(g1, kind, 4, 3, seed=11)
        out1 = layer.forward(one_block(g1, "both"), Tensor(h)).data
        out2 = layer.forward(one_block(g2, "both"), Tensor(h)).data
        assert not np.allclose(out1[2], out2[2], atol=1e-9)


ALL_VARIANTS = [
    ("gcn", "conv"), ("gat", "attn"), ("rgcn", "conv"),
    ("transgcn", "conv"), ("transgcn", "attn"),
    ("rotategcn", "conv"), ("rotategcn", "attn"),
]


class TestLayerGradients:
    @staticmethod
    def build(kind, aggregator, seed):
        g = make_graph([(0, 0, 1), (2, 1, 1), (1, 0, 3), (3, 1, 0)],
                       n_nodes=4, n_relations=2)
        direction = "both" if kind in ("transgcn", "rotategcn") else "in"
        block = one_block(g, direction)
        agg = aggregator if kind in ("transgcn", "rotategcn") else (
            "attn" if kind == "gat" else "conv")
        layer = layer_for(g, kind, 4, 3, aggregator=agg, activation="tanh", seed=seed)
        return layer, block

    @pytest.mark.parametrize("kind,aggregator", ALL_VARIANTS)
    def test_feature_gradients(self, kind, aggregator):
        weight = Tensor(np.arange(12, dtype=np.float64).reshape(4, 3) / 5.0)
        for seed in range(3):
            layer, block = self.build(kind, aggregator, seed)
            rng = np.random.Generator(np.random.PCG64(100 + seed))
            x0 = rng.normal(size=(4, 4))
            err = grad_check(
                lambda x: total_sum(ad.mul(layer.forward(block, x), weight)), Tensor(x0))
            assert err < 1e-5, (kind, aggregator, seed)

    @pytest.mark.parametrize("kind,aggregator", ALL_VARIANTS)
    def test_parameter_gradients(self, kind, aggregator):
        weight = Tensor(np.arange(12, dtype=np.float64).reshape(4, 3) / 5.0)
        layer, block = self.build(kind, aggregator, seed=0)
        rng = np.random.Generator(np.random.PCG64(200))
        x = Tensor(rng.normal(size=(4, 4)))
        for name in list(layer.params):
            original = layer.params[name]

            def f(p, name=name):
                layer.params[name] = p
                try:
                    return total_sum(ad.mul(layer.forward(block, x), weight))
                finally:
                    layer.params[name] = original

            err = grad_check(f, Tensor(original.data.copy()))
            assert err < 1e-5, (kind, aggregator, name)


class TestEncoder:
    def test_output_width_matches_spec(self):
        g = make_graph([(0, 0, 1), (1, 0, 2)], n_relations=1)
        spec = encoder_spec("gcn", (384, 384, 256), seed=0)
        enc = Encoder(spec, g.n_relations)
        batch = full_graph_batch(g, directions=spec.directions)
        rng = np.random.Generator(np.random.PCG64(0))
        H = enc.forward(batch, rng.normal(size=(3, 384)).astype(np.float32))
        assert H.shape == (3, 256)

    def test_deterministic_given_seed(self):
        g = make_graph([(0, 0, 1), (1, 1, 2), (2, 0, 0)], n_relations=2)
        X = np.random.Generator(np.random.PCG64(5)).normal(size=(3, 6)).astype(np.float32)

        def run():
            spec = encoder_spec("rotategcn", (6, 4, 4), aggregator="attn", seed=3)
            enc = Encoder(spec, g.n_relations)
            batch = sample_neighbors(g, [0, 1, 2], [None, None], spec.directions, seed=1)
            return enc.forward(batch, X).data.tobytes()

        assert run() == run()

    def test_unsampled_edge_cannot_affect_batch(self):
        # seeds {3} with in-direction 2-hop sampling never reaches edge (0,r,1)
        edges = [(0, 0, 1), (2, 0, 3)]
        g1 = make_graph(edges, n_nodes=4, n_relations=1)
        g2 = make_graph(edges[1:], n_nodes=4, n_relations=1)
        X = np.random.Generator(np.random.PCG64(2)).normal(size=(4, 5)).astype(np.float32)
        spec = encoder_spec("gcn", (5, 4, 3), seed=8)
        enc = Encoder(spec, 1)
        b1 = sample_neighbors(g1, [3], [None, None], spec.directions, seed=0)
        b2 = sample_neighbors(g2, [3], [None, None], spec.directions, seed=0)
        out1 = enc.forward(b1, X).data
        out2 = enc.forward(b2, X).data
        assert np.array_equal(out1, out2)

    def test_exactly_two_layers_enforced(self):
        with pytest.raises(ValueError, match="two"):
            EncoderSpec(layers=(LayerSpec("gcn", 4, 4),))

    def test_isolated_nodes_finite(self):
        g = make_graph([], n_nodes=3, n_relations=1)
        for kind in ("gcn", "gat", "rgcn", "transgcn", "rotategcn"):
            spec = encoder_spec(kind, (4, 4, 2), num_bases=1 if kind == "rgcn" else None,
                                seed=1)
            enc = Encoder(spec, g.n_relations)
            batch = full_graph_batch(g, directions=spec.directions)
            X = np.ones((3, 4), dtype=np.float32)
            H = enc.forward(batch, X)
            assert np.isfinite(H.data).all()
