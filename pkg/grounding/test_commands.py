import io
from unittest import mock

import numpy as np
import pandas as pd
import torch
from django.core.management import CommandError, call_command
from django.test import SimpleTestCase, TestCase

from .checkpoints import Checkpoint, load_checkpoint, module_tensors, save_checkpoint
from .cli import SUBCOMMANDS, cli_main
from .clustering import load_cluster_bank
from .config import write_config
from .ingest import write_pairs
from .language_training import load_necks, save_necks
from .management.commands.ablate import VARIANTS
from .models import EvaluationRecord, PipelineRun
from .synthbench import write_spec
from .test_synthbench import SMALL, tiny_config
from .tests import TempDirMixin
from .video import VideoGroundingModel


class PipelineCommandTests(TempDirMixin, TestCase):
    def setUp(self):
        super().setUp()
        self.config_path = self.tmp / 'run.cfg'
        write_config(tiny_config(), self.config_path)
        self.spec_path = self.tmp / 'spec.txt'
        write_spec(SMALL, self.spec_path)
        self.data = self.tmp / 'data'

    def call(self, name, *args):
        out = io.StringIO()
        call_command(name, '--config', str(self.config_path), *[str(a) for a in args], stdout=out)
        return out.getvalue()

    def generate(self):
        self.call('synth_gen', '--spec', self.spec_path, '--out', self.data)

    def untrained_checkpoint(self):
        config = tiny_config()
        torch.manual_seed(0)
        model = VideoGroundingModel(SMALL.feature_dim, config)
        path = self.tmp / 'video.ckpt'
        save_checkpoint(path, Checkpoint(module_tensors('video', model), 0, config.as_dict(),
                                         {'feature_dim': SMALL.feature_dim}))
        return path

    def pairs_with_an_unknown_query(self):
        save_necks(self.tmp / 'necks.arc', {'v00000q0': np.zeros((2, 3))})
        write_pairs(self.tmp / 'pairs.tsv', [('v00000', 'v00000q0'), ('v00001', 'q_unknown')])
        return self.tmp / 'necks.arc', self.tmp / 'pairs.tsv'

    def test_synth_gen_writes_a_corpus(self):
        output = self.call('synth_gen', '--spec', self.spec_path, '--out', self.data)
        self.assertIn('12 videos', output)
        for name in ('embeddings.txt', 'queries.txt', 'pairs.tsv', 'ground_truth.tsv', 'atoms.tsv', 'spec.txt'):
            self.assertTrue((self.data / name).exists(), name)
        self.assertEqual(len(list((self.data / 'features').iterdir())), 12)
        run = PipelineRun.objects.get(stage='synth-gen')
        self.assertEqual(run.status, PipelineRun.Status.SUCCEEDED)
        self.assertEqual(run.metrics['videos'], 12)
        self.assertIsNotNone(run.finished_at)

    def test_full_pipeline(self):
        self.generate()
        work = self.tmp / 'work'
        work.mkdir()

        self.call('train_language', '--queries', self.data / 'queries.txt',
                  '--embeddings', self.data / 'embeddings.txt', '--necks', work / 'necks.arc',
                  '--model', work / 'language.ckpt', '--trace', work / 'trace.csv',
                  '--reconstruction', work / 'reconstruction.tsv', '--epochs', 1)
        necks = load_necks(work / 'necks.arc')
        self.assertEqual(len(necks), 12)
        self.assertEqual(necks['v00000q0'].shape, (2, 3))
        self.assertEqual(list(pd.read_csv(work / 'trace.csv').columns),
                         ['epoch', 'step', 'cel', 'mse', 'dqa', 'total'])

        self.call('build_clusters', '--necks', work / 'necks.arc', '--out', work / 'bank.arc',
                  '--k', 2, '--assignments', work / 'assignments.tsv')
        self.assertEqual(load_cluster_bank(work / 'bank.arc').centers.shape, (2, 2, 3))
        self.assertEqual(len(pd.read_csv(work / 'assignments.tsv', sep='\t')), 24)

        self.call('train_video', '--features', self.data / 'features', '--clusters', work / 'bank.arc',
                  '--out', work / 'video.ckpt', '--metrics', work / 'metrics.csv',
                  '--labels-dir', work / 'labels', '--language', work / 'language.ckpt', '--iterations', 1)
        checkpoint = load_checkpoint(work / 'video.ckpt')
        self.assertEqual(checkpoint.iteration, 1)
        self.assertTrue(checkpoint.section_items('language'))
        self.assertEqual(sorted(p.name for p in (work / 'labels').iterdir()), ['labels_00.lbl', 'labels_01.lbl'])

        self.call('infer', '--checkpoint', work / 'video.ckpt', '--features', self.data / 'features',
                  '--necks', work / 'necks.arc', '--pairs', self.data / 'pairs.tsv', '--out', work / 'results.tsv')
        output = self.call('eval', '--results', work / 'results.tsv',
                           '--ground-truth', self.data / 'ground_truth.tsv', '--out', work / 'table.csv')
        self.assertIn('R@1', output)
        self.assertEqual(len(pd.read_csv(work / 'table.csv')), 6)

        self.call('report', '--necks', work / 'necks.arc', '--neck-table', work / 'necks.csv',
                  '--checkpoint', work / 'video.ckpt', '--features', self.data / 'features',
                  '--pairs', self.data / 'pairs.tsv', '--curves', work / 'curves.csv',
                  '--clusters', work / 'bank.arc', '--attention-dir', work / 'attention')
        self.assertEqual(len(pd.read_csv(work / 'necks.csv')), 24)
        self.assertEqual(len(list((work / 'attention').iterdir())), 12)

        stages = list(PipelineRun.objects.order_by('id').values_list('stage', flat=True))
        self.assertEqual(stages, ['synth-gen', 'train-language', 'build-clusters', 'train-video', 'infer', 'eval',
                                  'report'])
        self.assertFalse(PipelineRun.objects.exclude(status=PipelineRun.Status.SUCCEEDED).exists())
        evaluation = PipelineRun.objects.get(stage='eval')
        self.assertEqual(evaluation.evaluations.count(), 6)
        digests = dict(PipelineRun.objects.values_list('stage', 'config_digest'))
        self.assertEqual(digests['eval'], digests['synth-gen'])
        # --epochs 1 overrides language_epochs=2 from the file
        self.assertNotEqual(digests['train-language'], digests['synth-gen'])

    def test_failed_stage_is_recorded(self):
        self.generate()
        with self.assertRaises(CommandError):
            self.call('eval', '--results', self.tmp / 'absent.tsv', '--ground-truth', self.data / 'ground_truth.tsv')
        run = PipelineRun.objects.get(stage='eval')
        self.assertEqual(run.status, PipelineRun.Status.FAILED)
        self.assertIn('error', run.metrics)
        self.assertFalse(EvaluationRecord.objects.exists())

    def test_unknown_query_fails_inference(self):
        self.generate()
        necks, pairs = self.pairs_with_an_unknown_query()
        with self.assertRaisesMessage(CommandError, 'q_unknown'):
            self.call('infer', '--checkpoint', self.untrained_checkpoint(), '--features', self.data / 'features',
                      '--necks', necks, '--pairs', pairs, '--out', self.tmp / 'results.tsv')
        run = PipelineRun.objects.get(stage='infer')
        self.assertEqual(run.status, PipelineRun.Status.FAILED)
        self.assertIn('q_unknown', run.metrics['error'])
        self.assertFalse((self.tmp / 'results.tsv').exists())

    def test_unknown_query_fails_the_curve_report(self):
        self.generate()
        necks, pairs = self.pairs_with_an_unknown_query()
        with self.assertRaisesMessage(CommandError, 'q_unknown'):
            self.call('report', '--necks', necks, '--checkpoint', self.untrained_checkpoint(),
                      '--features', self.data / 'features', '--pairs', pairs, '--curves', self.tmp / 'curves.csv')
        self.assertEqual(PipelineRun.objects.get(stage='report').status, PipelineRun.Status.FAILED)

    def test_unexpected_error_still_closes_the_run(self):
        with mock.patch('grounding.management.commands.selfcheck.run_selfcheck', side_effect=RuntimeError('boom')):
            with self.assertRaisesMessage(RuntimeError, 'boom'):
                self.call('selfcheck', '--seeds', 1, '--shapes', 2)
        run = PipelineRun.objects.get(stage='selfcheck')
        self.assertEqual(run.status, PipelineRun.Status.FAILED)
        self.assertEqual(run.metrics, {'error': 'RuntimeError: boom'})
        self.assertIsNotNone(run.finished_at)

    def test_bad_config_fails_before_the_ledger(self):
        self.config_path.write_text('num_clusters=1\n')
        with self.assertRaises(CommandError):
            self.call('selfcheck', '--seeds', 1, '--shapes', 2)
        self.assertFalse(PipelineRun.objects.exists())

    def test_report_needs_an_output(self):
        with self.assertRaisesMessage(CommandError, 'nothing to report'):
            self.call('report', '--necks', self.tmp / 'necks.arc')

    def test_seed_override_is_recorded(self):
        self.call('synth_gen', '--spec', self.spec_path, '--out', self.data, '--seed', 11)
        self.assertEqual(PipelineRun.objects.get().seed, 11)

    def test_selfcheck(self):
        output = self.call('selfcheck', '--seeds', 1, '--shapes', 3)
        self.assertNotIn('FAIL', output)
        self.assertEqual(PipelineRun.objects.get(stage='selfcheck').metrics, {'checks': 13})

    def test_ablate_variants(self):
        self.call('ablate', '--spec', self.spec_path, '--variants', 'full', 'sample_centers', 'no_trip',
                  '--out', self.tmp / 'ablate.csv')
        table = pd.read_csv(self.tmp / 'ablate.csv')
        self.assertEqual(table.variant.tolist(), ['full', 'sample_centers', 'no_trip'])
        self.assertEqual(table.delta_r1.iloc[0], 0.0)
        self.assertTrue(table.r1_iou05.between(0.0, 100.0).all())
        metrics = PipelineRun.objects.get(stage='ablate').metrics
        self.assertEqual(sorted(metrics), ['full', 'no_trip', 'sample_centers'])

    def test_every_loss_term_and_center_choice_has_a_variant(self):
        self.assertEqual(VARIANTS['no_mse'], {'alpha_w': 0.0})
        self.assertEqual(VARIANTS['no_dqa'], {'beta_w': 0.0})
        self.assertEqual(VARIANTS['no_sab'], {'alpha_v': 0.0})
        self.assertEqual(VARIANTS['no_trip'], {'beta_v': 0.0})
        self.assertEqual({VARIANTS[name]['center_selection'] for name in ('sample_centers', 'random_centers')},
                         {'sample', 'random'})
        for overrides in VARIANTS.values():
            tiny_config().replace(**overrides)


class CommandLineTests(SimpleTestCase):
    def test_every_subcommand_maps_to_a_command(self):
        self.assertEqual(sorted(SUBCOMMANDS.values()),
                         ['ablate', 'build_clusters', 'eval', 'infer', 'report', 'selfcheck', 'synth_gen',
                          'train_language', 'train_video'])

    @mock.patch('sys.stderr', new_callable=io.StringIO)
    def test_unknown_subcommand(self, stderr):
        self.assertEqual(cli_main(['bogus']), 2)
        self.assertIn("unknown subcommand 'bogus'", stderr.getvalue())

    @mock.patch('sys.stderr', new_callable=io.StringIO)
    def test_no_subcommand(self, stderr):
        self.assertEqual(cli_main([]), 2)
        self.assertIn('usage: dscnet', stderr.getvalue())

    @mock.patch('sys.stderr', new_callable=io.StringIO)
    def test_missing_required_option(self, stderr):
        self.assertEqual(cli_main(['eval']), 2)
        self.assertIn('--results', stderr.getvalue())
