import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from graphrank import autodiff as ad
from graphrank import heads
from graphrank.autodiff import ParamStore, Tensor
from graphrank.heads import HeadConfig
from graphrank.ranking import quicksort_rank

from .oracles import central_diff_grads, rel_error

DR = HeadConfig("DirectRanker")
CMP = HeadConfig("CmpNN", hidden_dim=5)
PW = HeadConfig("PointwiseRegression")


def head_params(config, dim, seed=0):
    params = ParamStore(seed)
    heads.init_head(params, config, dim)
    rng = np.random.default_rng(seed)
    for name in params.names():
        params.set(name, rng.normal(size=params[name].shape))
    return params


vectors = arrays(np.float64, 4, elements=st.floats(-10, 10))


class TestDirectRanker:
    def test_hand_value(self):
        params = ParamStore()
        params.set("head.w", [[1.0]])
        out = heads.compare(DR, np.array([[2.0], [1.0]]), [(0, 1)], params)
        assert out[0] == pytest.approx(math.tanh(1.0), abs=1e-15)
        assert out[0] == pytest.approx(0.7615941559557649, abs=1e-15)

    def test_utility_dot_product(self):
        params = ParamStore()
        params.set("head.w", [[1.0], [0.0]])
        assert heads.utility(DR, np.array([[3.0, 9.0]]), params).tolist() == [3.0]

    @given(vectors, vectors, st.integers(0, 1000))
    @settings(max_examples=100, deadline=None)
    def test_reflexive_antisymmetric_consistent(self, zi, zj, seed):
        params = head_params(DR, 4, seed)
        Z = np.stack([zi, zj])
        out = heads.compare(DR, Z, [(0, 1), (1, 0), (0, 0)], params)
        assert out[2] == 0.0
        assert out[0] == -out[1]
        u = heads.utility(DR, Z, params)
        assert out[0] == np.tanh(u[0] - u[1])
        assert np.sign(out[0]) == np.sign(u[0] - u[1])

    def test_transitivity(self):
        rng = np.random.default_rng(0)
        params = head_params(DR, 3)
        for _ in range(200):
            Z = rng.normal(size=(3, 3))
            u = heads.utility(DR, Z, params)
            pairs = list(itertools.permutations(range(3), 2))
            out = heads.compare(DR, Z, pairs, params)
            pref = {p: o > 0 for p, o in zip(pairs, out)}
            for a, b, c in itertools.permutations(range(3)):
                if pref[(a, b)] and pref[(b, c)]:
                    assert pref[(a, c)]
            assert all((o > 0) == (u[a] > u[b]) for (a, b), o in zip(pairs, out))

    def test_sort_by_utility_equals_quicksort(self):
        rng = np.random.default_rng(1)
        params = head_params(DR, 4)
        Z = rng.normal(size=(10, 4))
        u = heads.utility(DR, Z, params)
        by_utility = tuple(np.argsort(-u, kind="stable").tolist())
        r = quicksort_rank(10, lambda pairs: heads.compare(DR, Z, pairs, params), seed=3)
        assert r.order == by_utility

    def test_dimension_mismatch(self):
        params = head_params(DR, 4)
        with pytest.raises(ad.ShapeError):
            heads.compare(DR, np.ones((2, 3)), [(0, 1)], params)


class TestCmpNN:
    @given(vectors, vectors, st.integers(0, 1000))
    @settings(max_examples=100, deadline=None)
    def test_reflexive_antisymmetric(self, zi, zj, seed):
        params = head_params(CMP, 4, seed)
        Z = np.stack([zi, zj])
        out = heads.compare(CMP, Z, [(0, 1), (1, 0), (0, 0), (1, 1)], params)
        assert out[2] == 0.0 and out[3] == 0.0
        assert abs(out[0] + out[1]) <= 1e-12

    def test_hand_evaluation(self):
        rng = np.random.default_rng(4)
        params = head_params(CMP, 3, 4)
        zi, zj = rng.normal(size=3), rng.normal(size=3)
        s = lambda v: 1 / (1 + np.exp(-v))
        P = {k: params[k] for k in params.names()}
        z1 = s(zi @ P["head.W1"] + zj @ P["head.W2"] + P["head.b"][0])
        z2 = s(zi @ P["head.W2"] + zj @ P["head.W1"] + P["head.b"][0])
        zge = s(z1 @ P["head.w1"][:, 0] + z2 @ P["head.w2"][:, 0] + P["head.b2"][0, 0])
        zle = s(z1 @ P["head.w2"][:, 0] + z2 @ P["head.w1"][:, 0] + P["head.b2"][0, 0])
        out = heads.compare(CMP, np.stack([zi, zj]), [(0, 1)], params)
        assert out[0] == pytest.approx(np.tanh(zge - zle), abs=1e-14)

    def test_reduces_to_direct_ranker_form(self):
        rng = np.random.default_rng(5)
        params = head_params(CMP, 4, 5)
        params.set("head.W1", np.zeros_like(params["head.W1"]))
        params.set("head.w1", np.zeros_like(params["head.w1"]))
        s = lambda v: 1 / (1 + np.exp(-v))
        h = lambda z: s(s(z @ params["head.W2"] + params["head.b"]) @ params["head.w2"] + params["head.b2"])
        Z = rng.normal(size=(30, 4))
        pairs = rng.integers(30, size=(100, 2))
        out = heads.compare(CMP, Z, pairs, params)
        hz = h(Z).ravel()
        expected = np.tanh(hz[pairs[:, 0]] - hz[pairs[:, 1]])
        assert np.max(np.abs(out - expected)) <= 1e-12

    def test_can_represent_a_preference_cycle(self):
        Z = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
        cycle = [(0, 1), (1, 2), (2, 0)]
        found = False
        for seed in range(5000):
            params = head_params(CMP, 2, seed)
            out = heads.compare(CMP, Z, cycle, params)
            if np.all(out > 0) or np.all(out < 0):
                found = True
                break
        assert found

    def test_no_utility(self):
        with pytest.raises(ValueError):
            heads.utility(CMP, np.ones((1, 4)), head_params(CMP, 4))


class TestPointwise:
    def test_constant(self):
        params = ParamStore()
        params.set("head.w", np.zeros((3, 1)))
        params.set("head.b", [[2.5]])
        Z = np.random.default_rng(0).normal(size=(5, 3))
        assert heads.utility(PW, Z, params).tolist() == [2.5] * 5


@pytest.mark.parametrize("config", [DR, CMP, PW], ids=lambda c: c.kind)
def test_head_gradients(config):
    rng = np.random.default_rng(6)
    params = head_params(config, 3, 6)
    params.set("Z", rng.normal(size=(6, 3)))
    pairs = rng.integers(6, size=(9, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    labels = rng.integers(0, 2, size=len(pairs)).astype(float)

    def fn(p):
        return ad.bce_with_logits(heads.pair_logits(config, p["Z"], pairs, p), labels)

    ad.forward_backward(fn, params)
    analytic = {k: v.copy() for k, v in params.grads.items()}
    numeric = central_diff_grads(lambda: float(fn(ad.constants(params)).value), params)
    for name in params.names():
        assert rel_error(analytic[name], numeric[name]) <= 1e-4, name


def test_output_activation_must_be_odd():
    with pytest.raises(ValueError):
        HeadConfig(output_activation="sigmoid")
