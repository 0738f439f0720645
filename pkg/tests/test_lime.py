import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import constant_net
from heatlens.errors import DataError, NumericError, ShapeError
from heatlens.explain import LimeConfig, SuperpixelMap, explain_lime, fit_surrogate, lasso_auto, sample_neighborhood, segment_superpixels, weighted_lasso
from heatlens.explain.lasso import lambda_max
from heatlens.explain.lime import LimeSamples, baseline_image, cosine_distance_to_ones, perturb
from heatlens.netgraph import predict_proba


def planted_black_box(x, sp, weights, intercept):
    """f(image) = intercept + sum of weights of the segments left untouched."""

    def predict(images):
        kept = np.array([[np.array_equal(img[:, sp.labels == j], x[:, sp.labels == j]) for j in range(sp.n_segments)] for img in images])
        return intercept + kept.astype(float) @ weights

    return predict


class TestLasso:
    def planted(self, rng, n=300, p=8):
        X = rng.integers(0, 2, size=(n, p)).astype(float)
        beta = np.zeros(p)
        beta[[1, 4, 6]] = [0.7, -1.2, 0.3]
        w = rng.uniform(0.1, 1.0, n)
        return X, 0.25 + X @ beta, w, beta

    def test_zero_penalty_recovers_planted(self, rng):
        X, y, w, beta = self.planted(rng)
        fit = weighted_lasso(X, y, w, 0.0)
        np.testing.assert_allclose(fit.coef, beta, atol=1e-9)
        assert abs(fit.intercept - 0.25) < 1e-9

    def test_lambda_max_zeroes_everything(self, rng):
        X, y, w, _ = self.planted(rng)
        lam = lambda_max(X, y, w)
        assert not weighted_lasso(X, y, w, lam).coef.any()
        assert weighted_lasso(X, y, w, 0.99 * lam).coef.any()

    def test_constant_target(self, rng):
        X = rng.integers(0, 2, size=(50, 5)).astype(float)
        fit = weighted_lasso(X, np.full(50, 3.5), np.ones(50), 0.0)
        assert not fit.coef.any() and fit.intercept == pytest.approx(3.5, abs=1e-12)

    def test_kkt_conditions(self, rng):
        X = rng.normal(size=(80, 6))
        y = rng.normal(size=80)
        w = rng.uniform(0.2, 1, 80)
        lam = 0.1 * lambda_max(X, y, w)
        fit = weighted_lasso(X, y, w, lam)
        wn = w / w.sum()
        r = y - fit.intercept - X @ fit.coef
        grad = (wn * r) @ (X - wn @ X)
        on = fit.coef != 0
        np.testing.assert_allclose(grad[on], lam * np.sign(fit.coef[on]), atol=1e-9)
        assert np.all(np.abs(grad[~on]) <= lam + 1e-9)

    def test_degenerate_column(self, rng):
        X = rng.integers(0, 2, size=(40, 4)).astype(float)
        X[:, 2] = 1.0
        fit = weighted_lasso(X, X[:, 0], np.ones(40), 0.0)
        assert fit.degenerate == [2] and fit.coef[2] == 0.0

    @given(st.integers(1, 6), st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_auto_respects_max_features(self, k, seed):
        r = np.random.default_rng(seed)
        X = r.integers(0, 2, size=(120, 10)).astype(float)
        y = X @ r.normal(size=10) + 0.01 * r.normal(size=120)
        assert np.count_nonzero(lasso_auto(X, y, np.ones(120), k).coef) <= k

    def test_negative_penalty(self, rng):
        with pytest.raises(DataError):
            weighted_lasso(np.ones((3, 1)), np.ones(3), np.ones(3), -1.0)


class TestSuperpixels:
    def test_uniform_image_quadrants(self):
        sp = segment_superpixels(np.zeros((8, 8)), 4)
        assert sp.n_segments == 4
        for j in range(4):
            rows, cols = np.nonzero(sp.labels == j)
            assert len(rows) == 16 and np.ptp(rows) == 3 and np.ptp(cols) == 3

    @given(st.integers(4, 20), st.integers(4, 20), st.integers(2, 30), st.integers(0, 99))
    @settings(max_examples=40, deadline=None)
    def test_count_bounds_and_coverage(self, h, w, target, seed):
        target = min(target, h * w)
        img = np.random.default_rng(seed).random((h, w))
        sp = segment_superpixels(img, target, seed)
        assert np.ceil(target / 2) <= sp.n_segments <= 2 * target
        assert set(np.unique(sp.labels)) == set(range(sp.n_segments))

    def test_deterministic(self, rng):
        img = rng.random((1, 16, 16))
        assert np.array_equal(segment_superpixels(img, 12, 1).labels, segment_superpixels(img, 12, 1).labels)

    def test_segments_connected(self, rng):
        from scipy import ndimage

        sp = segment_superpixels(rng.random((20, 20)), 15)
        for j in range(sp.n_segments):
            assert ndimage.label(sp.labels == j)[1] == 1

    def test_too_small(self):
        with pytest.raises(ShapeError):
            segment_superpixels(np.zeros((1, 5)), 2)

    def test_invalid_map(self):
        with pytest.raises(DataError):
            SuperpixelMap(np.array([[0, 2], [2, 0]]))


class TestSampling:
    def test_first_row_is_instance(self, rng):
        x = rng.random((1, 8, 8))
        sp = segment_superpixels(x, 6)
        s = sample_neighborhood(x, sp, LimeConfig(num_samples=50), lambda im: im.reshape(len(im), -1).sum(axis=1))
        assert s.z[0].all() and s.weights[0] == 1.0
        assert np.all(s.weights[1:] < 1.0) and np.all(s.weights > 0)
        assert len(s.z) == 51
        assert np.array_equal(perturb(x, sp, s.z[:1], baseline_image(x, "mean"))[0], x)

    def test_all_off_zero_baseline(self, rng):
        x = rng.random((2, 6, 6))
        sp = segment_superpixels(x, 4)
        out = perturb(x, sp, np.zeros((1, sp.n_segments)), baseline_image(x, "zero"))
        assert not out.any()

    def test_reproducible(self, rng):
        x = rng.random((1, 8, 8))
        sp = segment_superpixels(x, 6)
        f = lambda im: im.reshape(len(im), -1).mean(axis=1)  # noqa: E731
        a = sample_neighborhood(x, sp, LimeConfig(num_samples=40, seed=3), f)
        b = sample_neighborhood(x, sp, LimeConfig(num_samples=40, seed=3), f)
        assert np.array_equal(a.z, b.z) and np.array_equal(a.values, b.values)

    def test_non_finite_names_sample(self, rng):
        x = rng.random((1, 8, 8))
        sp = segment_superpixels(x, 6)

        def f(im):
            out = np.ones(len(im))
            out[min(5, len(im) - 1)] = np.nan
            return out

        with pytest.raises(NumericError, match="sample 5"):
            sample_neighborhood(x, sp, LimeConfig(num_samples=30, batch_size=256), f)

    def test_cosine_distance(self):
        d = cosine_distance_to_ones(np.array([[1, 1, 1, 1], [1, 0, 0, 0], [0, 0, 0, 0]]))
        np.testing.assert_allclose(d, [0.0, 0.5, 1.0])

    def test_samples_must_cover_segments(self, rng):
        x = rng.random((1, 8, 8))
        sp = segment_superpixels(x, 8)
        with pytest.raises(DataError):
            sample_neighborhood(x, sp, LimeConfig(num_samples=2), lambda im: np.zeros(len(im)))

    def test_config_validation(self):
        for bad in ({"kernel_width": 0}, {"lasso_lambda": -1.0}, {"baseline": "blur"}):
            with pytest.raises(DataError):
                LimeConfig(**bad)


class TestSurrogate:
    def test_planted_recovery(self, rng):
        x = rng.random((1, 12, 12))
        sp = segment_superpixels(x, 10)
        weights = np.zeros(sp.n_segments)
        weights[[0, 3, sp.n_segments - 1]] = [0.8, -0.5, 0.25]
        cfg = LimeConfig(num_samples=400, lasso_lambda=0.0)
        samples = sample_neighborhood(x, sp, cfg, planted_black_box(x, sp, weights, 0.1))
        e = fit_surrogate(samples, cfg, sp)
        np.testing.assert_allclose(e.coefficients, weights, atol=1e-6)
        assert e.intercept == pytest.approx(0.1, abs=1e-6) and e.r2 == pytest.approx(1.0)

    def test_heatmap_piecewise_constant(self, rng):
        x = rng.random((1, 12, 12))
        sp = segment_superpixels(x, 10)
        cfg = LimeConfig(num_samples=200)
        e = fit_surrogate(sample_neighborhood(x, sp, cfg, lambda im: im[:, 0, :6].reshape(len(im), -1).mean(axis=1)), cfg, sp)
        for j in range(sp.n_segments):
            vals = e.heatmap[sp.labels == j]
            assert np.all(vals == vals[0]) and vals[0] == e.coefficients[j]
        assert np.count_nonzero(e.coefficients) <= cfg.max_features
        assert 0.0 <= e.r2 <= 1.0

    def test_never_toggled_segment_warns(self):
        z = np.ones((20, 3), dtype=np.uint8)
        z[1:, 0] = np.arange(19) % 2
        z[1:, 1] = (np.arange(19) // 2) % 2
        samples = LimeSamples(z, z[:, 0] * 0.5, np.ones(20))
        e = fit_surrogate(samples, LimeConfig(num_samples=20, lasso_lambda=0.0))
        assert e.coefficients[2] == 0.0 and any("segment 2" in w for w in e.warnings)

    def test_too_few_samples(self):
        with pytest.raises(DataError):
            fit_surrogate(LimeSamples(np.ones((3, 4)), np.zeros(3), np.ones(3)), LimeConfig())


class TestExplainLime:
    def test_constant_model(self, rng):
        e = explain_lime(constant_net(), rng.random((1, 8, 8)), 1, LimeConfig(num_samples=100, num_segments=6))
        assert np.all(np.abs(e.coefficients) < 1e-6)

    def test_same_seed_identical(self, small_toy_net, rng):
        x = rng.random((1, 16, 16))
        cfg = LimeConfig(num_samples=120, num_segments=10, seed=5)
        a, b = explain_lime(small_toy_net, x, 2, cfg), explain_lime(small_toy_net, x, 2, cfg)
        assert np.array_equal(a.coefficients, b.coefficients) and np.array_equal(a.heatmap, b.heatmap)

    def test_bad_class(self, small_toy_net):
        with pytest.raises(ShapeError):
            explain_lime(small_toy_net, np.zeros((1, 16, 16)), 4)

    def test_blob_segment_gets_top_coefficient(self, trained_blob_net):
        net, ds = trained_blob_net
        x = ds.images()
        p = predict_proba(net, x)
        hits = total = 0
        for i in range(240, 300):
            for c in np.flatnonzero(ds.labels[i]):
                if p[i, c] < 0.8:
                    continue
                e = explain_lime(net, x[i], int(c), LimeConfig(num_samples=500, num_segments=20))
                top = e.superpixels.labels == int(np.argmax(e.coefficients))
                hits += ds.masks[i, c][top].mean() > 0.5
                total += 1
        assert total >= 30 and hits / total >= 0.75
