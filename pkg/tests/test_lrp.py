import numpy as np
import pytest

from conftest import random_cnn
from heatlens.errors import NumericError, ShapeError
from heatlens.explain import lrp
from heatlens.explain.lrp import fold_batchnorm
from heatlens.netgraph import BatchNorm, Conv2D, Dense, Flatten, GlobalAvgPool, MaxPool2D, Network, ReLU, Sigmoid, forward


def mlp_reference(ws, bs, x, c, eps):
    """Explicit z_ij matrices for Dense-ReLU-...-Dense, one layer at a time."""
    acts = [x]
    for i, (w, b) in enumerate(zip(ws, bs)):
        z = w @ acts[-1] + b
        acts.append(np.maximum(z, 0) if i < len(ws) - 1 else z)
    r = np.zeros(len(acts[-1]))
    r[c] = acts[-1][c]
    for i in range(len(ws) - 1, -1, -1):
        a = acts[i]
        zij = ws[i] * a[None, :]  # (out, in)
        zj = zij.sum(axis=1) + bs[i]
        denom = zj + eps * np.where(zj >= 0, 1.0, -1.0)
        r = (zij / denom[:, None] * r[:, None]).sum(axis=0)
    return r


class TestRules:
    def test_single_dense_positive(self, rng):
        w = rng.uniform(0.1, 1, size=(2, 6))
        x = rng.uniform(0.1, 1, size=(6, 1, 1))
        net = Network((Flatten(), Dense(w)), (6, 1, 1), 2)
        r = lrp(net, x, 1, epsilon=0.0)
        yc = w[1] @ x.ravel()
        np.testing.assert_allclose(r.input_relevance.ravel(), x.ravel() * w[1] / yc * yc, rtol=1e-13)
        assert r.input_relevance.sum() == pytest.approx(yc, rel=1e-14)

    @pytest.mark.parametrize("eps", [0.0, 1e-3, 0.5])
    def test_mlp_matches_explicit_oracle(self, rng, eps):
        ws = [rng.normal(size=(7, 5)), rng.normal(size=(6, 7)), rng.normal(size=(3, 6))]
        bs = [rng.normal(size=7) * 0.2, rng.normal(size=6) * 0.2, rng.normal(size=3) * 0.2]
        net = Network((Flatten(), Dense(ws[0], bs[0]), ReLU(), Dense(ws[1], bs[1]), ReLU(), Dense(ws[2], bs[2])), (5, 1, 1), 3)
        x = rng.normal(size=(5, 1, 1))
        r = lrp(net, x, 2, epsilon=eps)
        np.testing.assert_allclose(r.input_relevance.ravel(), mlp_reference(ws, bs, x.ravel(), 2, eps), rtol=1e-10, atol=1e-12)

    def test_bias_free_conservation(self, rng):
        for _ in range(10):
            net = random_cnn(rng, bias=False)
            x = rng.normal(size=net.input_shape)
            c = int(rng.integers(0, 3))
            r = lrp(net, x, c, epsilon=0.0)
            assert abs(r.input_relevance.sum() - r.logit) <= 1e-9 * max(1.0, abs(r.logit))

    def test_layer_local_conservation(self, rng):
        net = random_cnn(rng, bias=False)
        r = lrp(net, rng.normal(size=net.input_shape), 0, epsilon=0.0)
        for i in range(len(net.layers)):
            assert r.layer_relevance[i].sum() == pytest.approx(r.layer_relevance[i + 1].sum(), rel=1e-9, abs=1e-12)

    def test_leakage_matches_bias_term(self, rng):
        for _ in range(10):
            net = random_cnn(rng, bias=True)
            x = rng.normal(size=net.input_shape)
            r = lrp(net, x, 1, epsilon=0.0)
            _, _, cache = forward(net, x)
            for i, layer in enumerate(net.layers):
                if not isinstance(layer, (Conv2D, Dense)):
                    continue
                z = cache.activation(i)
                b = layer.bias.reshape((-1,) + (1,) * (z.ndim - 1))
                expected = np.sum(b / z * r.layer_relevance[i + 1])
                assert r.leakage[i] == pytest.approx(expected, rel=1e-6, abs=1e-12)
            assert r.input_relevance.sum() + r.total_leakage == pytest.approx(r.logit, rel=1e-9, abs=1e-12)

    def test_maxpool_routes_exactly(self, rng):
        layers = (MaxPool2D(2), GlobalAvgPool(), Dense(np.ones((1, 2))))
        net = Network(layers, (2, 4, 4), 1)
        x = rng.uniform(0.5, 1.0, size=(2, 4, 4))
        r = lrp(net, x, 0, epsilon=0.0)
        pooled = r.layer_relevance[1]
        assert r.layer_relevance[0].sum() == pytest.approx(pooled.sum(), rel=1e-14)
        assert np.count_nonzero(r.layer_relevance[0]) == pooled.size

    def test_sigmoid_passes_through(self, rng):
        net = Network((Flatten(), Dense(rng.normal(size=(3, 4))), Sigmoid(), Dense(rng.normal(size=(2, 3)))), (4, 1, 1), 2)
        r = lrp(net, rng.normal(size=(4, 1, 1)), 0, epsilon=1e-9)
        assert np.array_equal(r.layer_relevance[2], r.layer_relevance[3])

    def test_batchnorm_folded(self, rng):
        net = random_cnn(rng, bias=True, batchnorm=True)
        bn_at = next(i for i, l in enumerate(net.layers) if isinstance(l, BatchNorm))
        folded_layers = list(net.layers)
        folded_layers[bn_at - 1] = fold_batchnorm(net.layers[bn_at - 1], net.layers[bn_at])
        del folded_layers[bn_at]
        folded = net.with_layers(folded_layers)
        x = rng.normal(size=net.input_shape)
        a, b = lrp(net, x, 0, 1e-6), lrp(folded, x, 0, 1e-6)
        np.testing.assert_allclose(a.input_relevance, b.input_relevance, rtol=1e-9, atol=1e-12)
        assert a.logit == pytest.approx(b.logit, rel=1e-12)

    def test_standalone_batchnorm(self, rng):
        bn = BatchNorm(np.zeros(3), rng.uniform(0.5, 2, 3), rng.uniform(0.5, 2, 3), np.zeros(3))
        net = Network((bn, GlobalAvgPool(), Dense(rng.normal(size=(2, 3)))), (3, 4, 4), 2)
        x = rng.normal(size=(3, 4, 4))
        r = lrp(net, x, 1, epsilon=0.0)
        assert r.input_relevance.sum() == pytest.approx(r.logit, rel=1e-9)
        # a diagonal affine map hands each pixel the relevance its output received
        np.testing.assert_allclose(r.input_relevance, r.layer_relevance[1], rtol=1e-12)


class TestEdges:
    def test_zero_input(self, rng):
        net = random_cnn(rng, bias=False)
        r = lrp(net, np.zeros(net.input_shape), 0, epsilon=1e-6)
        assert not r.input_relevance.any()

    def test_zero_denominator_without_epsilon(self):
        # a Sigmoid turns z = 0 into activation 0.5, so relevance reaches a vanishing denominator
        net = Network((Flatten(), Dense(np.array([[1.0, -1.0]])), Sigmoid(), Dense(np.array([[2.0]]))), (2, 1, 1), 1)
        x = np.ones((2, 1, 1))
        with pytest.raises(NumericError, match="layer 1 .*epsilon > 0"):
            lrp(net, x, 0, epsilon=0.0)
        assert np.all(np.isfinite(lrp(net, x, 0, epsilon=1e-6).input_relevance))

    def test_zero_logit_distributes_nothing(self):
        net = Network((Flatten(), Dense(np.array([[1.0, -1.0]]))), (2, 1, 1), 1)
        r = lrp(net, np.ones((2, 1, 1)), 0, epsilon=0.0)
        assert not r.input_relevance.any()

    def test_heatmap_is_channel_sum(self, rng):
        net = random_cnn(rng)
        r = lrp(net, rng.normal(size=net.input_shape), 2)
        assert r.heatmap.shape == net.input_shape[1:]
        np.testing.assert_array_equal(r.heatmap, r.input_relevance.sum(axis=0))

    def test_validation(self, rng):
        net = random_cnn(rng)
        with pytest.raises(ShapeError):
            lrp(net, np.zeros(net.input_shape), 3)
        with pytest.raises(ValueError):
            lrp(net, np.zeros(net.input_shape), 0, epsilon=-1.0)
