import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, TestCase, override_settings

from .checkpoints import CHECKPOINT_VERSION, Checkpoint, load_checkpoint, save_checkpoint
from .config import Config, load_config, parse_key_value_text, write_config
from .containers import read_archive, read_matrix, write_archive, write_matrix
from .domain import PAD_TOKEN, UNK_TOKEN, EmbeddingTable, FrameFeatureSequence, GroundingResult, Segment
from .exceptions import CheckpointError, ConfigurationError, CorpusError, FeatureFileError
from .ingest import (
    load_embedding_table, load_feature_directory, load_frame_features, load_query_corpus, read_ground_truth,
    save_embedding_table, save_frame_features, seconds_to_frames, write_ground_truth,
)
from .models import EvaluationRecord, PipelineRun


class TempDirMixin:
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()


def small_table():
    return EmbeddingTable(('a', 'b', UNK_TOKEN), np.eye(3, dtype=np.float32))


class DomainTypeTests(SimpleTestCase):
    def test_frame_sequence_needs_a_frame(self):
        with self.assertRaises(ValueError):
            FrameFeatureSequence('v', np.zeros((0, 4), dtype=np.float32))

    def test_embedding_table_requires_unk(self):
        with self.assertRaises(ValueError):
            EmbeddingTable(('a', 'b'), np.zeros((2, 2)))

    def test_from_vocabulary_reserves_pad_and_unk(self):
        table = EmbeddingTable.from_vocabulary(['x', 'y'], dim=4, seed=1)
        self.assertEqual(table.words[-2:], (PAD_TOKEN, UNK_TOKEN))
        self.assertTrue(np.all(table.rows[table.pad_index] == 0))
        self.assertEqual(table.index_of('zzz'), table.unk_index)

    def test_segment_rejects_reversed_interval(self):
        with self.assertRaises(ValueError):
            Segment(5, 3)
        self.assertEqual(Segment(10, 20).length, 11)

    def test_grounding_result_requires_descending_scores(self):
        with self.assertRaises(ValueError):
            GroundingResult('v', 'q', (Segment(0, 1, 0.1), Segment(2, 3, 0.9)))


class ContainerTests(TempDirMixin, SimpleTestCase):
    def test_three_by_two_matrix(self):
        path = self.tmp / 'm.feat'
        header = struct.pack('<4sHBBQQ', b'DSCF', 1, 1, 0, 3, 2)
        path.write_bytes(header + np.arange(6, dtype='<f4').tobytes())
        matrix = read_matrix(path)
        self.assertEqual(matrix.shape, (3, 2))
        self.assertEqual(matrix[2, 1], 5.0)

    def test_truncated_payload_is_a_size_mismatch(self):
        path = self.tmp / 'm.feat'
        header = struct.pack('<4sHBBQQ', b'DSCF', 1, 1, 0, 3, 2)
        path.write_bytes(header + np.arange(5, dtype='<f4').tobytes())
        with self.assertRaisesMessage(FeatureFileError, 'payload has 20 bytes'):
            read_matrix(path)

    def test_large_matrix_round_trips_bit_for_bit(self):
        matrix = np.random.default_rng(0).normal(size=(128, 500)).astype(np.float32)
        path = self.tmp / 'big.feat'
        write_matrix(path, matrix)
        self.assertEqual(read_matrix(path).tobytes(), matrix.tobytes())

    def test_non_finite_value_reports_its_position(self):
        matrix = np.zeros((4, 3), dtype=np.float32)
        matrix[2, 1] = np.nan
        path = self.tmp / 'nan.feat'
        write_matrix(path, matrix)
        with self.assertRaisesMessage(FeatureFileError, 'row 2, column 1'):
            read_matrix(path)

    def test_missing_file(self):
        with self.assertRaisesMessage(FeatureFileError, 'no such file'):
            read_matrix(self.tmp / 'absent.feat')

    def test_archive_keeps_names_shapes_and_meta(self):
        records = {'a': np.arange(6, dtype=np.int64).reshape(2, 3), 'b': np.ones(4, dtype=np.uint8),
                   'scalar': np.array(2.5, dtype=np.float32)}
        path = self.tmp / 'x.arc'
        write_archive(path, records, {'kind': 'test', 'n': 3})
        loaded, meta = read_archive(path)
        self.assertEqual(list(loaded), ['a', 'b', 'scalar'])
        for name in records:
            self.assertEqual(loaded[name].dtype, records[name].dtype)
            np.testing.assert_array_equal(loaded[name], records[name])
        self.assertEqual(meta, {'kind': 'test', 'n': 3})

    def test_flipped_byte_fails_the_checksum(self):
        path = self.tmp / 'x.arc'
        write_archive(path, {'a': np.zeros(8)}, {})
        data = bytearray(path.read_bytes())
        data[-12] ^= 0xFF
        path.write_bytes(bytes(data))
        with self.assertRaisesMessage(FeatureFileError, 'checksum mismatch'):
            read_archive(path)

    def test_garbled_metadata_with_a_valid_checksum(self):
        path = self.tmp / 'x.arc'
        write_archive(path, {'a': np.zeros(2)}, {'kind': 'x'})
        body = path.read_bytes()[:-4].replace(b'{"kind": "x"}', b'{"kind": "x"!')
        path.write_bytes(body + struct.pack('<I', zlib.crc32(body)))
        with self.assertRaisesMessage(FeatureFileError, 'malformed metadata'):
            read_archive(path)


class IngestTests(TempDirMixin, SimpleTestCase):
    def test_feature_file_round_trip_uses_stem_as_id(self):
        video = FrameFeatureSequence('clip7', np.ones((5, 3), dtype=np.float32))
        save_frame_features(self.tmp / 'clip7.feat', video)
        loaded = load_frame_features(self.tmp / 'clip7.feat')
        self.assertEqual(loaded.video_id, 'clip7')
        np.testing.assert_array_equal(loaded.features, video.features)

    def test_feature_directory_requires_one_dimension(self):
        save_frame_features(self.tmp / 'a.feat', FrameFeatureSequence('a', np.ones((2, 3), dtype=np.float32)))
        save_frame_features(self.tmp / 'b.feat', FrameFeatureSequence('b', np.ones((2, 4), dtype=np.float32)))
        with self.assertRaises(FeatureFileError):
            load_feature_directory(self.tmp)

    def test_query_tokens_and_unk(self):
        path = self.tmp / 'q.txt'
        path.write_text('a b\na zzz\n', encoding='utf-8')
        queries = load_query_corpus(path, small_table())
        self.assertEqual(queries[0].tokens, (0, 1))
        self.assertEqual(queries[1].tokens, (0, 2))

    def test_long_line_is_truncated(self):
        path = self.tmp / 'q.txt'
        path.write_text(' '.join(['a'] * 12) + '\n', encoding='utf-8')
        self.assertEqual(len(load_query_corpus(path, small_table(), max_length=10)[0]), 10)

    def test_blank_lines_are_skipped_with_a_warning(self):
        path = self.tmp / 'q.txt'
        path.write_text('q1\ta\n\n   \nq2\tb\n', encoding='utf-8')
        with self.assertLogs('grounding.ingest', level='WARNING') as logs:
            queries = load_query_corpus(path, small_table())
        self.assertEqual([q.query_id for q in queries], ['q1', 'q2'])
        self.assertIn('skipped 2 empty line(s)', logs.output[0])

    def test_empty_corpus_and_bad_encoding(self):
        empty = self.tmp / 'empty.txt'
        empty.write_text('\n', encoding='utf-8')
        with self.assertRaises(CorpusError):
            load_query_corpus(empty, small_table())
        latin = self.tmp / 'latin.txt'
        latin.write_bytes(b'caf\xe9\n')
        with self.assertRaises(CorpusError):
            load_query_corpus(latin, small_table())

    def test_embedding_table_round_trip(self):
        table = EmbeddingTable.from_vocabulary(['x', 'y', 'z'], dim=5, seed=3)
        save_embedding_table(self.tmp / 'emb.txt', table)
        loaded = load_embedding_table(self.tmp / 'emb.txt')
        self.assertEqual(loaded.words, table.words)
        np.testing.assert_array_equal(loaded.rows, table.rows)

    def test_ground_truth_in_seconds(self):
        write_ground_truth(self.tmp / 'gt.tsv', {('v1', 'q1'): Segment(2, 5)})
        self.assertEqual(read_ground_truth(self.tmp / 'gt.tsv')[('v1', 'q1')], Segment(2, 5))
        self.assertEqual(seconds_to_frames(1.0, 2.0, 4), (4, 7))


class ConfigTests(TempDirMixin, SimpleTestCase):
    def test_defaults_match_settings(self):
        self.assertEqual(load_config(), Config())

    def test_key_value_comments_and_blanks(self):
        values = parse_key_value_text('# run\nnum_clusters = 8  # fewer\n\nseed=3\n')
        self.assertEqual(values, {'num_clusters': '8', 'seed': '3'})

    def test_file_values_are_typed_and_overrides_win(self):
        path = self.tmp / 'run.cfg'
        path.write_text('num_clusters=8\npositional_encoding=true\nseed=3\n', encoding='utf-8')
        config = load_config(path, seed=11)
        self.assertEqual(config.num_clusters, 8)
        self.assertIs(config.positional_encoding, True)
        self.assertEqual(config.seed, 11)

    def test_invalid_values_list_every_field(self):
        with self.assertRaises(ConfigurationError) as ctx:
            load_config(dqa_lambda=1.5, threshold=0, num_clusters=1)
        self.assertEqual(set(ctx.exception.errors), {'dqa_lambda', 'threshold', 'num_clusters'})

    def test_unknown_key_is_rejected(self):
        path = self.tmp / 'run.cfg'
        path.write_text('clusters=8\n', encoding='utf-8')
        with self.assertRaisesMessage(ConfigurationError, 'clusters'):
            load_config(path)

    def test_centers_per_batch_cannot_exceed_clusters(self):
        with self.assertRaises(ConfigurationError):
            load_config(num_clusters=2, centers_per_batch=3)

    def test_written_config_reads_back_with_the_same_digest(self):
        config = load_config(num_clusters=6, center_selection='sample')
        write_config(config, self.tmp / 'out.cfg')
        self.assertEqual(load_config(self.tmp / 'out.cfg').digest(), config.digest())

    @override_settings(DSCNET={'num_necks': '2'})
    def test_settings_dict_provides_defaults(self):
        self.assertEqual(load_config().num_necks, 2)


class CheckpointTests(TempDirMixin, SimpleTestCase):
    def make(self, iteration=3):
        rng = np.random.default_rng(0)
        tensors = {'video.w': rng.normal(size=(4, 3)).astype(np.float32), 'labels.0.v1': np.ones((2, 5), np.uint8)}
        return Checkpoint(tensors, iteration, Config().as_dict(), {'history': [{'total': 0.25}]})

    def test_round_trip_is_exact(self):
        checkpoint = self.make()
        save_checkpoint(self.tmp / 'c.ckpt', checkpoint)
        loaded = load_checkpoint(self.tmp / 'c.ckpt')
        self.assertEqual(loaded, checkpoint)
        self.assertEqual(loaded.iteration, 3)

    def test_corruption_is_a_checksum_error(self):
        path = self.tmp / 'c.ckpt'
        save_checkpoint(path, self.make())
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0x01
        path.write_bytes(bytes(data))
        with self.assertRaisesMessage(CheckpointError, 'checksum'):
            load_checkpoint(path)

    def test_version_mismatch_names_both_versions(self):
        path = self.tmp / 'c.ckpt'
        write_archive(path, {}, {'checkpoint_version': 99, 'iteration': 0, 'config': {}, 'state': {}})
        with self.assertRaises(CheckpointError) as ctx:
            load_checkpoint(path)
        self.assertIn('99', str(ctx.exception))
        self.assertIn(str(CHECKPOINT_VERSION), str(ctx.exception))

    def test_unequal_payload_is_detected(self):
        other = self.make()
        other.tensors['video.w'] = other.tensors['video.w'] + 1
        self.assertNotEqual(self.make(), other)


class LedgerModelTests(TestCase):
    def test_run_defaults_and_str(self):
        run = PipelineRun.objects.create(stage='infer', config_digest='ab' * 32, seed=4)
        self.assertEqual(run.status, PipelineRun.Status.RUNNING)
        self.assertEqual(str(run), 'infer [abababab] seed=4 (running)')

    def test_one_cell_per_run(self):
        from django.db import IntegrityError, transaction

        run = PipelineRun.objects.create(stage='eval', config_digest='0' * 64)
        EvaluationRecord.objects.create(run=run, top_n=1, iou_threshold=0.5, recall=40.0)
        with self.assertRaises(IntegrityError), transaction.atomic():
            EvaluationRecord.objects.create(run=run, top_n=1, iou_threshold=0.5, recall=41.0)
