import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foodnet.bof import (CLAMP, DESCRIPTOR_DIM, Codebook, SvmModel, assign, decode_bof,
                         dense_descriptors, encode_bof, encode_histogram, grayscale, kmeans, load_bof,
                         normalize_descriptors, orientation_planes, save_bof, svm_predict, svm_train,
                         train_bof)
from foodnet.errors import BadMagicError, DatasetError, HeaderError, ShapeError, TruncatedFileError


class TestDescriptors:
    def test_grayscale_weights(self):
        img = np.zeros((1, 3, 3))
        img[0, 0, 0] = img[0, 1, 1] = img[0, 2, 2] = 1.0
        np.testing.assert_allclose(grayscale(img)[0], [0.299, 0.587, 0.114])

    def test_grid_count(self, np_rng):
        desc, locs = dense_descriptors(np_rng.random((128, 128)))
        assert desc.shape == (225, DESCRIPTOR_DIM)
        assert locs[0].tolist() == [0, 0] and locs[-1].tolist() == [112, 112]

    def test_constant_image_gives_zero(self):
        desc, _ = dense_descriptors(np.full((32, 32), 0.4))
        assert not desc.any()

    @pytest.mark.parametrize("left, right, bin_", [(0.0, 1.0, 0), (1.0, 0.0, 4)])
    def test_vertical_edge_bins(self, left, right, bin_):
        img = np.full((16, 16), left)
        img[:, 8:] = right
        planes = orientation_planes(img)
        totals = planes.sum(axis=(0, 1))
        assert totals[bin_] > 0
        assert np.count_nonzero(totals) == 1
        desc, _ = dense_descriptors(img)
        per_bin = desc.reshape(-1, 8).sum(axis=0)
        assert np.count_nonzero(per_bin) == 1 and per_bin[bin_] > 0

    def test_diagonal_splits_evenly(self):
        # 22.5 degrees sits halfway between bins 0 and 1
        y, x = np.mgrid[0:20, 0:20].astype(float)
        t = np.tan(np.radians(22.5))
        planes = orientation_planes(x + t * y)[5:15, 5:15]
        np.testing.assert_allclose(planes[..., 0], planes[..., 1])
        assert not planes[..., 2:].any()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_normalisation_invariants(self, seed):
        raw = np.random.default_rng(seed).exponential(size=(5, 128)) ** 3
        out = normalize_descriptors(raw)
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0)
        assert out.min() >= 0
        # after the clamp and renormalisation no entry can exceed 0.2 by more than the renorm factor
        assert out.max() <= CLAMP / np.linalg.norm(np.minimum(raw / np.linalg.norm(raw, axis=1, keepdims=True), CLAMP), axis=1).min() + 1e-12

    def test_bad_shapes(self):
        with pytest.raises(ShapeError):
            dense_descriptors(np.zeros((8, 8)))
        with pytest.raises(ShapeError):
            grayscale(np.zeros((4, 4)))


def brute_force_objective(points, k=2):
    best = np.inf
    for assignment in itertools.product(range(k), repeat=len(points)):
        a = np.array(assignment)
        if len(set(assignment)) < k:
            continue
        cost = sum(((points[a == j] - points[a == j].mean(0)) ** 2).sum() for j in range(k))
        best = min(best, cost)
    return best


class TestKmeans:
    def test_single_cluster_is_mean(self, np_rng):
        pts = np_rng.random((30, 4))
        np.testing.assert_allclose(kmeans(pts, 1).centroids[0], pts.mean(0))

    def test_k_equals_n(self, np_rng):
        pts = np_rng.random((6, 3))
        book = kmeans(pts, 6)
        assert sorted(map(tuple, book.centroids)) == sorted(map(tuple, pts))
        assert book.objective_trace[-1] == pytest.approx(0.0, abs=1e-12)

    def test_two_blobs_match_brute_force(self, np_rng):
        pts = np.concatenate([np_rng.normal(0, 0.3, (5, 2)), np_rng.normal(5, 0.3, (5, 2))])
        book = kmeans(pts, 2, seed=3)
        assert book.objective_trace[-1] == pytest.approx(brute_force_objective(pts), rel=1e-9)

    def test_objective_monotone_on_random_instances(self):
        for s in range(100):
            g = np.random.default_rng(s)
            pts = g.normal(size=(int(g.integers(10, 40)), int(g.integers(1, 5))))
            trace = kmeans(pts, int(g.integers(2, 6)), seed=s).objective_trace
            assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:])), (s, trace)

    def test_deterministic(self, np_rng):
        pts = np_rng.random((50, 3))
        assert np.array_equal(kmeans(pts, 4, seed=1).centroids, kmeans(pts, 4, seed=1).centroids)

    def test_too_few_points(self):
        with pytest.raises(DatasetError):
            kmeans(np.zeros((2, 2)), 3)

    def test_assign_ties_lowest(self):
        idx, _ = assign(np.array([[0.5]]), np.array([[0.0], [1.0]]))
        assert idx.tolist() == [0]


class TestHistogram:
    def test_counts(self):
        cents = np.array([[0.0, 0.0], [10.0, 10.0]])
        h = encode_histogram(np.array([[0.1, 0.0], [0.0, 0.2], [9.0, 9.5]]), Codebook(cents))
        np.testing.assert_allclose(h, [2 / 3, 1 / 3])

    def test_empty(self):
        assert not encode_histogram(np.zeros((0, 2)), np.zeros((3, 2))).any()

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            encode_histogram(np.zeros((4, 3)), np.zeros((2, 2)))


class TestSvm:
    def separable(self, seed=0):
        g = np.random.default_rng(seed)
        centres = np.array([[3, 0, 0], [0, 3, 0], [0, 0, 3]], float)
        y = np.repeat(np.arange(3), 20)
        return centres[y] + g.uniform(-0.5, 0.5, (60, 3)), y

    def test_separable_reaches_full_accuracy(self):
        x, y = self.separable()
        m = svm_train(x, y, lam=1e-3, epochs=50)
        assert (svm_predict(m, x) == y).all()

    def test_heavy_regularisation_shrinks_weights(self):
        x, y = self.separable()
        m = svm_train(x, y, lam=1e6, epochs=5)
        assert np.linalg.norm(m.weights) < 1e-2

    def test_deterministic(self):
        x, y = self.separable()
        a, b = svm_train(x, y, seed=4, epochs=3), svm_train(x, y, seed=4, epochs=3)
        assert np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)

    def test_predict_argmax_and_ties(self):
        m = SvmModel(np.eye(3), np.zeros(3))
        assert svm_predict(m, np.array([0.2, 0.7, 0.1])) == 1
        assert svm_predict(m, np.array([0.5, 0.5, 0.0])) == 0

    def test_scaling_weights_keeps_prediction(self, np_rng):
        m = SvmModel(np_rng.normal(size=(4, 5)), np_rng.normal(size=4))
        x = np_rng.random((10, 5))
        scaled = SvmModel(m.weights * 3.0, m.bias * 3.0)
        assert np.array_equal(svm_predict(m, x), svm_predict(scaled, x))

    def test_single_class_rejected(self):
        with pytest.raises(DatasetError):
            svm_train(np.zeros((3, 2)), [1, 1, 1])


@pytest.fixture(scope="module")
def bof_model():
    from foodnet.synthetic import make_synthetic
    ds = make_synthetic(4, 6, seed=2, size=32)
    return train_bof(ds.images(), ds.labels, 4, k=8, epochs=5, seed=1), ds


class TestBofModel:
    def test_round_trip(self, bof_model, tmp_path):
        model, ds = bof_model
        save_bof(model, tmp_path / "m.bof")
        back = load_bof(tmp_path / "m.bof")
        assert back == model
        assert encode_bof(back) == (tmp_path / "m.bof").read_bytes()
        assert np.array_equal(back.predict(ds.images()), model.predict(ds.images()))

    def test_deterministic(self, bof_model):
        model, ds = bof_model
        assert train_bof(ds.images(), ds.labels, 4, k=8, epochs=5, seed=1) == model

    def test_bad_magic(self, bof_model):
        with pytest.raises(BadMagicError):
            decode_bof(b"XXXXXX" + encode_bof(bof_model[0])[6:])

    def test_truncated_and_trailing(self, bof_model):
        data = encode_bof(bof_model[0])
        with pytest.raises(TruncatedFileError):
            decode_bof(data[:-3])
        with pytest.raises(HeaderError):
            decode_bof(data + b"\0")

    def test_vocabulary_larger_than_pool(self, bof_model):
        _, ds = bof_model
        with pytest.raises(DatasetError):
            train_bof(ds.images()[:2], ds.labels[:2], 4, k=10_000)
