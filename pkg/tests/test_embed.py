import numpy as np
import pytest

from graphrank import autodiff as ad
from graphrank.autodiff import ParamStore, Tensor
from graphrank.embed import EmbedderConfig, embed, gcn_conv, gin_conv, init_embedder
from graphrank.graphs import Graph, build_batch, erdos_renyi_edges

from .oracles import central_diff_grads, rel_error


def path2(features):
    return Graph("p", 2, [(0, 1)], node_features=features)


def dense_gcn(g: Graph, x, W):
    """Reference GCN on a dense adjacency, loop over nodes."""
    a = g.adjacency()
    deg = a.sum(axis=1)
    out = np.zeros((g.num_nodes, W.shape[1]))
    for i in range(g.num_nodes):
        acc = x[i] / (deg[i] + 1)
        for j in np.nonzero(a[i])[0]:
            acc = acc + x[j] / np.sqrt((deg[i] + 1) * (deg[j] + 1))
        out[i] = acc @ W
    return out


def random_graph(seed, n=None, features=0):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 9))
    feats = rng.normal(size=(n, features)) if features else None
    return Graph(f"r{seed}", n, erdos_renyi_edges(n, 0.4, rng), feats)


class TestGCN:
    def test_isolated_node_identity(self):
        g = Graph("one", 1, [], node_features=[[2.5, -1.0]])
        out = gcn_conv(build_batch([g]), Tensor(g.node_features), Tensor(np.eye(2)), "identity")
        assert out.value.tolist() == [[2.5, -1.0]]

    def test_two_connected_nodes(self):
        g = path2([[1.0], [3.0]])
        out = gcn_conv(build_batch([g]), Tensor(g.node_features), Tensor([[1.0]]), "identity")
        np.testing.assert_allclose(out.value, [[2.0], [2.0]], rtol=1e-15)
        np.testing.assert_allclose(dense_gcn(g, g.node_features, np.eye(1)), [[2.0], [2.0]])

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_dense_reference(self, seed):
        g = random_graph(seed, features=3)
        W = np.random.default_rng(seed).normal(size=(3, 2))
        out = gcn_conv(build_batch([g]), Tensor(g.node_features), Tensor(W), "identity")
        np.testing.assert_allclose(out.value, dense_gcn(g, g.node_features, W), rtol=1e-12, atol=1e-14)

    def test_node_permutation_equivariance(self):
        g = random_graph(3, n=7, features=2)
        perm = np.random.default_rng(0).permutation(7)
        gp = g.relabel(perm)
        W = Tensor(np.random.default_rng(1).normal(size=(2, 4)))
        out = gcn_conv(build_batch([g]), Tensor(g.node_features), W).value
        outp = gcn_conv(build_batch([gp]), Tensor(gp.node_features), W).value
        np.testing.assert_allclose(outp[perm], out, rtol=1e-12)


class TestGIN:
    def test_isolated_node_identity(self):
        g = Graph("one", 1, [], node_features=[[4.0]])
        out = gin_conv(build_batch([g]), Tensor(g.node_features), lambda h: h)
        assert out.value.tolist() == [[4.0]]

    def test_triangle_sums(self):
        g = Graph("k3", 3, [(0, 1), (1, 2), (0, 2)])
        b = build_batch([g])
        out = gin_conv(b, Tensor(b.node_features), lambda h: h)
        assert out.value.tolist() == [[3.0], [3.0], [3.0]]

    def test_node_permutation_equivariance(self):
        g = random_graph(4, n=6, features=2)
        perm = np.random.default_rng(2).permutation(6)
        gp = g.relabel(perm)
        W = Tensor(np.random.default_rng(3).normal(size=(2, 3)))
        mlp = lambda h: ad.linear(h, W, None, "sigmoid")
        out = gin_conv(build_batch([g]), Tensor(g.node_features), mlp).value
        outp = gin_conv(build_batch([gp]), Tensor(gp.node_features), mlp).value
        np.testing.assert_allclose(outp[perm], out, rtol=1e-12)


CONFIGS = [EmbedderConfig(conv, layers, 4, pool)
           for conv in ("GCN", "GIN") for layers in (1, 2) for pool in ("mean", "sum", "softmax")]


def make_params(config, in_dim=1, seed=0):
    params = ParamStore(seed)
    init_embedder(params, config, in_dim)
    # non-zero biases so their gradients are exercised
    rng = np.random.default_rng(seed + 100)
    for name in params.names():
        if ".b" in name or name == "pool.c":
            params.set(name, rng.normal(scale=0.3, size=params[name].shape))
    return params


class TestEmbed:
    @pytest.mark.parametrize("config", CONFIGS, ids=lambda c: f"{c.conv_type}-{c.conv_layers}-{c.pooling}")
    def test_isomorphic_graphs_identical_rows(self, config):
        g = random_graph(11, n=8)
        gp = g.relabel(np.random.default_rng(5).permutation(8), "perm")
        params = make_params(config)
        z = embed(build_batch([g, gp]), config, ad.constants(params)).value
        assert z.shape == (2, 4)
        np.testing.assert_allclose(z[0], z[1], rtol=0, atol=1e-9)

    @pytest.mark.parametrize("config", CONFIGS, ids=lambda c: f"{c.conv_type}-{c.conv_layers}-{c.pooling}")
    def test_batch_independence(self, config):
        gs = [random_graph(s) for s in (20, 21, 22)]
        params = make_params(config)
        p = ad.constants(params)
        together = embed(build_batch(gs), config, p).value
        for i, g in enumerate(gs):
            alone = embed(build_batch([g]), config, p).value
            assert alone.shape == (1, 4)
            np.testing.assert_allclose(together[i], alone[0], rtol=0, atol=1e-9)

    @pytest.mark.parametrize("config", CONFIGS, ids=lambda c: f"{c.conv_type}-{c.conv_layers}-{c.pooling}")
    def test_gradients(self, config):
        gs = [random_graph(s, features=2) for s in (30, 31)]
        batch = build_batch(gs)
        params = make_params(config, in_dim=2, seed=1)
        target = np.array([[0.3], [-0.2]])

        def fn(p):
            z = embed(batch, config, p)
            return ad.mse(ad.matmul(z, Tensor(np.ones((4, 1)))), target)

        ad.forward_backward(fn, params)
        analytic = {k: v.copy() for k, v in params.grads.items()}
        numeric = central_diff_grads(lambda: float(fn(ad.constants(params)).value), params)
        for name in params.names():
            assert rel_error(analytic[name], numeric[name]) <= 1e-4, name

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EmbedderConfig(conv_type="WL2")
        with pytest.raises(ValueError):
            EmbedderConfig(pooling="max")
        with pytest.raises(ValueError):
            EmbedderConfig(mlp_hidden_layers=3)


def wl_pairs():
    """Small 1-WL-distinguishable pairs with equal node counts."""
    def g(n, edges, gid):
        return Graph(gid, n, edges)
    return [
        (g(4, [(0, 1), (1, 2), (2, 3)], "path4"), g(4, [(0, 1), (0, 2), (0, 3)], "star4")),
        (g(5, [(0, 1), (1, 2), (2, 3), (3, 4)], "path5"), g(5, [(0, 1), (1, 2), (2, 0), (3, 4)], "tri+edge")),
        (g(4, [(0, 1), (1, 2), (2, 3), (3, 0)], "c4"), g(4, [(0, 1), (1, 2), (2, 0), (0, 3)], "paw")),
        (g(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)], "path6"), g(6, [(0, 1), (1, 2), (2, 3), (3, 4), (2, 5)], "spider")),
    ]


def test_gin_sum_separates_wl_distinguishable_pairs():
    config = EmbedderConfig("GIN", 3, 16, "sum")
    for a, b in wl_pairs():
        separated = 0
        for seed in range(20):
            params = make_params(config, seed=seed)
            z = embed(build_batch([a, b]), config, ad.constants(params)).value
            separated += not np.allclose(z[0], z[1], rtol=0, atol=1e-12)
        assert separated / 20 >= 0.9, (a.id, b.id)
