import inspect
import os
import unittest

import numpy as np
from django.test import SimpleTestCase

from .clustering import ClusterBank
from .config import Config
from .domain import FrameFeatureSequence, QueryTokens, Segment
from .exceptions import ConfigurationError
from .inference import recall_at_n
from .language_training import train_language_model
from .pseudo_labels import PseudoLabelStore
from .synthbench import (
    SyntheticSpec, baseline_estimate, generate_corpus, label_agreement, load_spec, planted_mask, random_baseline,
    run_benchmark, write_spec,
)
from .tests import TempDirMixin
from .training import run_training

RUN_BENCHMARKS = os.environ.get('DSCNET_RUN_BENCHMARKS') == '1'

SMALL = SyntheticSpec(num_atoms=3, words_per_atom=4, num_videos=12, num_frames=16, feature_dim=4, query_length=4)


class SpecTests(TempDirMixin, SimpleTestCase):
    def test_defaults(self):
        spec = load_spec()
        self.assertEqual(spec, SyntheticSpec())
        self.assertEqual(spec.length_range, (7, 19))

    def test_text_and_overrides(self):
        spec = load_spec(text='num_atoms=4\nnoise_std=0.25  # quieter\n', seed=7)
        self.assertEqual((spec.num_atoms, spec.noise_std, spec.seed), (4, 0.25, 7))

    def test_file_round_trip(self):
        spec = SyntheticSpec(num_atoms=5, num_frames=40, seed=3)
        write_spec(spec, self.tmp / 'spec.txt')
        self.assertEqual(load_spec(self.tmp / 'spec.txt'), spec)

    def test_invalid_specs(self):
        for text in ('num_atoms=1', 'min_segment_fraction=0', 'min_segment_fraction=0.5\nmax_segment_fraction=0.2',
                     'noise_std=-1', 'colour=blue'):
            with self.assertRaises(ConfigurationError, msg=text):
                load_spec(text=text)


class CorpusTests(SimpleTestCase):
    def test_noise_free_segments_are_prototypes(self):
        corpus = generate_corpus(SyntheticSpec(**{**SMALL.as_dict(), 'noise_std': 0.0}), word_dim=4)
        for video in corpus.videos:
            (query_id,) = [q for v, q in corpus.pairs if v == video.video_id]
            segment = corpus.ground_truth[(video.video_id, query_id)]
            inside = video.features[segment.start:segment.end + 1]
            np.testing.assert_array_equal(inside, np.broadcast_to(inside[0], inside.shape))
            self.assertTrue(np.any(inside[0] != 0))
            outside = np.delete(video.features, np.arange(segment.start, segment.end + 1), axis=0)
            self.assertFalse(outside.any())

    def test_same_seed_same_corpus(self):
        first, second = generate_corpus(SMALL, word_dim=4), generate_corpus(SMALL, word_dim=4)
        self.assertEqual(first.queries, second.queries)
        self.assertEqual(first.ground_truth, second.ground_truth)
        self.assertEqual(first.pairs, second.pairs)
        for a, b in zip(first.videos, second.videos):
            self.assertEqual(a.features.tobytes(), b.features.tobytes())
        np.testing.assert_array_equal(first.table.rows, second.table.rows)
        other = generate_corpus(SyntheticSpec(**{**SMALL.as_dict(), 'seed': 1}), word_dim=4)
        self.assertNotEqual(first.ground_truth, other.ground_truth)

    def test_layout(self):
        corpus = generate_corpus(SMALL, word_dim=4)
        low, high = SMALL.length_range
        self.assertEqual(len(corpus.videos), 12)
        self.assertEqual(len(corpus.queries), 12)
        self.assertEqual(corpus.videos[0].video_id, 'v00000')
        self.assertEqual(corpus.queries[0].query_id, 'v00000q0')
        self.assertEqual(corpus.table.vocab_size, 3 * 4 + 2)
        for query in corpus.queries:
            atom = corpus.atom_labels[query.query_id]
            self.assertEqual(len(query), 4)
            self.assertTrue(all(atom * 4 <= t < (atom + 1) * 4 for t in query.tokens))
        for segment in corpus.ground_truth.values():
            self.assertTrue(low <= segment.length <= high)
            self.assertLess(segment.end, 16)

    def test_several_segments_per_video(self):
        spec = SyntheticSpec(**{**SMALL.as_dict(), 'segments_per_video': 2, 'max_segment_fraction': 0.2})
        corpus = generate_corpus(spec, word_dim=4)
        self.assertEqual(len(corpus.pairs), 24)
        for video in corpus.videos:
            first, second = (corpus.ground_truth[(video.video_id, f'{video.video_id}q{s}')] for s in (0, 1))
            self.assertTrue(first.end < second.start)

    def test_infeasible_lengths(self):
        spec = SyntheticSpec(num_frames=5, min_segment_fraction=0.9, max_segment_fraction=0.95)
        with self.assertRaises(ConfigurationError):
            generate_corpus(spec)

    def test_atom_frequencies_are_near_uniform(self):
        spec = SyntheticSpec(num_atoms=4, num_videos=200, num_frames=16, feature_dim=2)
        counts = np.bincount(list(generate_corpus(spec, word_dim=2).atom_labels.values()), minlength=4)
        expected, sigma = 200 / 4, np.sqrt(200 * 0.25 * 0.75)
        self.assertTrue(np.all(np.abs(counts - expected) <= 3 * sigma), counts)


class BaselineTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.spec = SyntheticSpec(num_videos=5000, feature_dim=2)
        cls.corpus = generate_corpus(cls.spec, word_dim=2)

    def test_reproducible(self):
        first = random_baseline(self.corpus.videos[:20], self.corpus.pairs[:20], self.spec, seed=4)
        second = random_baseline(self.corpus.videos[:20], self.corpus.pairs[:20], self.spec, seed=4)
        self.assertEqual(first, second)
        self.assertTrue(all(len(r.segments) == 5 for r in first))

    def test_exact_match_never_beats_full_overlap(self):
        baseline = random_baseline(self.corpus.videos, self.corpus.pairs, self.spec, top_n=1)
        self.assertEqual(recall_at_n(baseline, self.corpus.ground_truth, 1, 1.0), 0.0)

    def test_matches_the_monte_carlo_estimate(self):
        baseline = random_baseline(self.corpus.videos, self.corpus.pairs, self.spec, seed=1, top_n=1)
        empirical = recall_at_n(baseline, self.corpus.ground_truth, 1, 0.5)
        estimate = baseline_estimate(self.spec, iou_threshold=0.5, top_n=1, draws=20000, seed=2)
        self.assertLess(abs(empirical - estimate), 2.0)


class AgreementTests(SimpleTestCase):
    def test_planted_mask(self):
        np.testing.assert_array_equal(planted_mask(Segment(1, 3), 6), [0, 1, 1, 1, 0, 0])

    def test_own_cluster_row_is_scored(self):
        truth = {('v', 'q'): Segment(1, 3)}
        bank = ClusterBank(np.zeros((1, 2, 3)), ({'q': 1},), (0.0,))
        store = PseudoLabelStore()
        store[(0, 'v')] = np.array([[1, 0, 0, 0, 1, 1], [0, 1, 1, 1, 0, 0]])
        self.assertEqual(label_agreement(store, bank, [('v', 'q')], truth), 100.0)
        bank = ClusterBank(np.zeros((1, 2, 3)), ({'q': 0},), (0.0,))
        self.assertEqual(label_agreement(store, bank, [('v', 'q')], truth), 0.0)


class InformationFlowTests(SimpleTestCase):
    def test_training_entry_points_take_no_ground_truth(self):
        self.assertEqual(list(inspect.signature(run_training).parameters),
                         ['videos', 'bank', 'config', 'model', 'resume', 'language_model', 'checkpoint_path'])
        self.assertEqual(list(inspect.signature(train_language_model).parameters),
                         ['queries', 'table', 'config', 'model', 'epochs', 'held_out_fraction'])

    def test_training_inputs_carry_only_features_and_tokens(self):
        self.assertEqual(list(FrameFeatureSequence.__dataclass_fields__), ['video_id', 'features'])
        self.assertEqual(list(QueryTokens.__dataclass_fields__), ['query_id', 'tokens'])


def tiny_config(**changes):
    values = dict(num_necks=2, num_clusters=2, neck_dim=3, joint_dim=8, sentence_dim=8, word_dim=4,
                  max_query_length=4, language_epochs=2, iterations=1, centers_per_batch=2, videos_per_batch=4,
                  kmeans_restarts=2, top_n=2)
    values.update(changes)
    return Config(**values)


class BenchmarkSmokeTests(SimpleTestCase):
    def test_pipeline_produces_every_table(self):
        result = run_benchmark(SMALL, tiny_config())
        self.assertEqual(len(result.table), 6)
        self.assertEqual(len(result.baseline), 6)
        self.assertEqual(sorted(result.agreement), [0, 1])
        self.assertEqual(len(result.purity), 2)
        self.assertTrue(all(0.0 <= p <= 1.0 for p in result.purity))
        self.assertEqual(len(result.metrics), 2)
        self.assertTrue(0.0 <= result.recall(1, 0.5) <= 100.0)

    def test_pipeline_is_deterministic(self):
        first = run_benchmark(SMALL, tiny_config())
        second = run_benchmark(SMALL, tiny_config())
        self.assertTrue(first.table.equals(second.table))
        self.assertTrue(first.metrics.equals(second.metrics))


@unittest.skipUnless(RUN_BENCHMARKS, 'set DSCNET_RUN_BENCHMARKS=1 to run the synthetic benchmark')
class SyntheticBenchmarkTests(SimpleTestCase):
    spec = SyntheticSpec()
    config = Config(iterations=5, num_clusters=8)

    def test_trained_pipeline_beats_chance(self):
        result = run_benchmark(self.spec, self.config)
        chance = baseline_estimate(self.spec, iou_threshold=0.5, top_n=1)
        self.assertGreaterEqual(result.recall(1, 0.5), 2 * chance)
        self.assertGreaterEqual(result.agreement[5], result.agreement[1] + 5.0)
        self.assertGreaterEqual(min(result.purity), 0.9)

    def test_ablations_point_the_right_way(self):
        full = run_benchmark(self.spec, self.config).recall(1, 0.5)
        no_dqa = run_benchmark(self.spec, self.config.replace(beta_w=0.0)).recall(1, 0.5)
        random_centers = run_benchmark(self.spec, self.config.replace(center_selection='random')).recall(1, 0.5)
        self.assertGreaterEqual(full - no_dqa, 2.0)
        self.assertGreater(full, random_centers)
