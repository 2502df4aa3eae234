import math

import numpy as np
from django.test import SimpleTestCase

from .domain import FrameFeatureSequence
from .exceptions import NCutError
from .pseudo_labels import (
    PseudoLabelStore, bipartition_frames, compute_labels, gaussian_affinity, init_pseudo_labels, label_matrix,
    load_label_store, ncut_bipartition, normalized_cut_value, save_label_store, self_tuning_sigma,
    update_pseudo_labels,
)
from .tests import TempDirMixin


def two_regimes(seed=0, first=10, second=10):
    rng = np.random.default_rng(seed)
    return np.vstack([
        rng.normal(0.0, 0.1, (first, 3)) + [5.0, 0.0, 0.0],
        rng.normal(0.0, 0.1, (second, 3)) + [0.0, 5.0, 0.0],
    ])


def fiedler_sign_labels(affinity):
    """Zero-threshold split of the second eigenvector of I - D^-1/2 W D^-1/2, vertex 0 on side 0."""
    degrees = affinity.sum(axis=1)
    laplacian = np.eye(len(affinity)) - affinity / np.sqrt(np.outer(degrees, degrees))
    values, vectors = np.linalg.eigh(laplacian)
    fiedler = vectors[:, 1]
    residual = float(np.linalg.norm(laplacian @ fiedler - values[1] * fiedler))
    labels = (fiedler > 0).astype(np.uint8)
    return (labels if labels[0] == 0 else 1 - labels), residual


class AffinityTests(SimpleTestCase):
    def test_identical_points(self):
        np.testing.assert_array_equal(gaussian_affinity(np.ones((3, 2)), 0.7), np.ones((3, 3)))

    def test_one_bandwidth_apart(self):
        affinity = gaussian_affinity(np.array([[0.0, 0.0], [math.sqrt(2.0), 0.0]]), 1.0)
        self.assertAlmostEqual(affinity[0, 1], math.exp(-1), places=12)

    def test_double_loop_oracle(self):
        points = np.random.default_rng(1).normal(size=(5, 3))
        affinity = gaussian_affinity(points, 0.8)
        for s in range(5):
            for t in range(5):
                expected = math.exp(-float(((points[s] - points[t]) ** 2).sum()) / (2 * 0.8 ** 2))
                self.assertAlmostEqual(affinity[s, t], expected, places=12)
        np.testing.assert_array_equal(affinity, affinity.T)
        np.testing.assert_array_equal(np.diag(affinity), np.ones(5))

    def test_bandwidth_must_be_positive(self):
        for sigma in (0.0, -1.0):
            with self.assertRaises(ValueError):
                gaussian_affinity(np.zeros((2, 2)), sigma)

    def test_self_tuning_bandwidth(self):
        self.assertEqual(self_tuning_sigma(np.zeros((4, 2))), 0.0)
        self.assertEqual(self_tuning_sigma(np.array([[0.0], [1.0], [3.0]])), 2.0)


class NCutTests(SimpleTestCase):
    def test_two_cliques(self):
        affinity = np.full((6, 6), 1e-6)
        affinity[:3, :3] = affinity[3:, 3:] = 1.0
        np.testing.assert_array_equal(ncut_bipartition(affinity), [0, 0, 0, 1, 1, 1])

    def test_two_points(self):
        affinity = gaussian_affinity(np.array([[0.0], [1.0]]), 1.0)
        np.testing.assert_array_equal(ncut_bipartition(affinity), [0, 1])

    def test_beats_every_contiguous_split(self):
        points = two_regimes(2, first=4, second=5)
        affinity = gaussian_affinity(points, 2.0)
        labels = ncut_bipartition(affinity)
        found = normalized_cut_value(affinity, labels)
        for split in range(1, len(points)):
            contiguous = (np.arange(len(points)) >= split).astype(np.uint8)
            self.assertLessEqual(found, normalized_cut_value(affinity, contiguous) + 1e-12)

    def test_matches_a_dense_eigensolver_on_planted_blobs(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            sizes = rng.integers(3, 9, size=2)
            points = np.vstack([rng.normal(0.0, 0.3, (sizes[0], 2)), rng.normal(0.0, 0.3, (sizes[1], 2)) + [4.0, 0.0]])
            order = rng.permutation(len(points))
            affinity = gaussian_affinity(points[order], 1.0)
            expected, residual = fiedler_sign_labels(affinity)
            planted = (order >= sizes[0]).astype(np.uint8)
            with self.subTest(seed=seed):
                self.assertLessEqual(residual, 1e-8)
                np.testing.assert_array_equal(ncut_bipartition(affinity), expected)
                np.testing.assert_array_equal(expected, planted if planted[0] == 0 else 1 - planted)

    def test_vertex_zero_is_on_side_zero(self):
        affinity = np.full((4, 4), 1e-6)
        affinity[1:, 1:] = 1.0
        affinity[0, 0] = 1.0
        self.assertEqual(ncut_bipartition(affinity)[0], 0)

    def test_invalid_graphs(self):
        with self.assertRaises(NCutError):
            ncut_bipartition(np.array([[1.0, 0.5], [0.2, 1.0]]))
        with self.assertRaises(NCutError):
            ncut_bipartition(np.array([[0.0, 0.0], [0.0, 1.0]]))
        with self.assertRaises(NCutError):
            ncut_bipartition(np.eye(3))
        with self.assertRaises(NCutError):
            ncut_bipartition(np.array([[1.0, -0.1], [-0.1, 1.0]]))


class FrameLabelTests(SimpleTestCase):
    def test_regime_near_the_center_is_positive(self):
        frames = two_regimes()
        labels = init_pseudo_labels(frames, np.array([1.0, 0.0, 0.0]))
        np.testing.assert_array_equal(labels, [1] * 10 + [0] * 10)
        flipped = init_pseudo_labels(frames, np.array([0.0, 1.0, 0.0]))
        np.testing.assert_array_equal(flipped, [0] * 10 + [1] * 10)

    def test_identical_frames_are_all_positive(self):
        np.testing.assert_array_equal(init_pseudo_labels(np.ones((5, 3)), np.zeros(3)), np.ones(5))

    def test_single_frame(self):
        np.testing.assert_array_equal(init_pseudo_labels(np.ones((1, 3)), np.zeros(3)), [1])

    def test_two_frames_with_center_on_the_first(self):
        frames = np.array([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_array_equal(init_pseudo_labels(frames, np.array([1.0])), [1, 0])

    def test_common_scaling_keeps_the_labels(self):
        frames = two_regimes(3, first=6, second=9)
        center = np.array([0.2, 1.0, 0.0])
        base = bipartition_frames(frames, center, sigma=2.0)
        np.testing.assert_array_equal(bipartition_frames(3.0 * frames, 3.0 * center, sigma=6.0), base)

    def test_repeated_calls_agree(self):
        frames = np.random.default_rng(4).normal(size=(12, 4))
        center = np.random.default_rng(5).normal(size=4)
        np.testing.assert_array_equal(init_pseudo_labels(frames, center), init_pseudo_labels(frames, center))

    def test_update_uses_the_projected_center_for_polarity(self):
        encoded = two_regimes(6)
        raw_center = np.array([0.3, -0.2])
        towards_first = update_pseudo_labels(encoded, raw_center, projected_center=np.array([1.0, 0.0, 0.0]))
        towards_second = update_pseudo_labels(encoded, raw_center, projected_center=np.array([0.0, 1.0, 0.0]))
        np.testing.assert_array_equal(towards_first, [1] * 10 + [0] * 10)
        np.testing.assert_array_equal(towards_second, 1 - towards_first)

    def test_label_matrix_rows_follow_the_centers(self):
        centers = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        matrix = label_matrix(two_regimes(), centers)
        self.assertEqual(matrix.shape, (2, 20))
        self.assertEqual(matrix.dtype, np.uint8)
        np.testing.assert_array_equal(matrix[0], 1 - matrix[1])


class LabelStoreTests(TempDirMixin, SimpleTestCase):
    def test_change_rate(self):
        first = PseudoLabelStore()
        first[(0, 'v1')] = np.zeros((2, 4))
        first[(1, 'v1')] = np.zeros((2, 4))
        second = first.copy()
        second[(0, 'v1')] = np.array([[1, 0, 0, 0], [1, 1, 0, 0]])
        self.assertEqual(first.change_rate(second), 3 / 16)
        self.assertEqual(first.change_rate(second, neck=0), 3 / 8)
        self.assertEqual(first.change_rate(second, neck=1), 0.0)
        self.assertEqual(first[(0, 'v1')].sum(), 0)

    def test_persisted_labels_reload_exactly(self):
        rng = np.random.default_rng(7)
        store = PseudoLabelStore()
        store[(0, 'v00001')] = rng.integers(0, 2, (3, 13))
        store[(2, 'v00002')] = rng.integers(0, 2, (3, 5))
        save_label_store(self.tmp / 'labels.lbl', store, iteration=4)
        loaded, iteration = load_label_store(self.tmp / 'labels.lbl')
        self.assertEqual(iteration, 4)
        self.assertEqual(sorted(loaded.keys()), sorted(store.keys()))
        for key in store.keys():
            np.testing.assert_array_equal(loaded[key], store[key])

    def test_compute_labels_keeps_video_order(self):
        videos = [FrameFeatureSequence(f'v{i}', two_regimes(i)) for i in range(3)]
        centers = np.array([[1.0, 0.0, 0.0]])
        serial = compute_labels(videos, centers)
        threaded = compute_labels(videos, centers, n_jobs=2)
        self.assertEqual(len(serial), 3)
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a, b)
            np.testing.assert_array_equal(a[0], [1] * 10 + [0] * 10)
