from pathlib import Path

from grounding.checkpoints import load_checkpoint, save_checkpoint
from grounding.clustering import load_cluster_bank
from grounding.ingest import load_feature_directory
from grounding.pseudo_labels import save_label_store
from grounding.training import run_training, write_metrics

from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Train the video module by iterating between pseudo labels and attention branches.'
    stage = 'train-video'
    config_overrides = ('iterations',)

    def add_stage_arguments(self, parser):
        parser.add_argument('--features', required=True, help='directory of .feat files')
        parser.add_argument('--clusters', required=True, help='cluster bank archive')
        parser.add_argument('--out', required=True, help='output checkpoint')
        parser.add_argument('--metrics', help='output CSV of per-block metrics')
        parser.add_argument('--labels-dir', help='write the pseudo labels of every iteration here')
        parser.add_argument('--language', help='language checkpoint to bundle into the output')
        parser.add_argument('--resume', help='checkpoint to continue from')
        parser.add_argument('--iterations', type=int, help='override iterations')

    def run(self, config, **options):
        videos = load_feature_directory(options['features'])
        bank = load_cluster_bank(options['clusters'])
        resume = load_checkpoint(options['resume']) if options['resume'] else None
        result = run_training(videos, bank, config, resume=resume, checkpoint_path=options['out'])

        checkpoint = result.checkpoint
        if options['language']:
            checkpoint.tensors.update(load_checkpoint(options['language']).section_items('language'))
        save_checkpoint(options['out'], checkpoint)
        if options['metrics']:
            write_metrics(options['metrics'], result.metrics)
        if options['labels_dir']:
            directory = Path(options['labels_dir'])
            directory.mkdir(parents=True, exist_ok=True)
            for iteration, store in sorted(result.snapshots.items()):
                save_label_store(directory / f'labels_{iteration:02d}.lbl', store, iteration)
        last = result.metrics.iloc[-1]
        self.stdout.write(self.style.SUCCESS(
            f'Trained {len(result.history)} steps; final L_v {last.total:.4f}, '
            f'label change {100 * last.change_rate:.2f}%'))
        return {
            'steps': len(result.history),
            'final_loss': float(last.total),
            'change_rate': [float(v) for v in result.metrics.change_rate],
        }
