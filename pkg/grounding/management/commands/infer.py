from grounding.checkpoints import load_checkpoint
from grounding.config import build_config
from grounding.inference import ground_pairs, write_results
from grounding.ingest import load_feature_directory, read_pairs
from grounding.language_training import load_necks
from grounding.training import model_from_checkpoint

from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Ground every (video, query) pair and write ranked segments.'
    stage = 'infer'
    config_overrides = ('threshold', 'top_n')

    def add_stage_arguments(self, parser):
        parser.add_argument('--checkpoint', required=True, help='video checkpoint from train_video')
        parser.add_argument('--features', required=True, help='directory of .feat files')
        parser.add_argument('--necks', required=True, help='neck archive of the queries')
        parser.add_argument('--pairs', required=True, help='TSV of video_id, query_id pairs to ground')
        parser.add_argument('--out', required=True, help='output results TSV')
        parser.add_argument('--threshold', type=float, help='override the growth threshold')
        parser.add_argument('--top-n', dest='top_n', type=int, help='override the number of candidates')

    def run(self, config, **options):
        checkpoint = load_checkpoint(options['checkpoint'])
        model = model_from_checkpoint(checkpoint, build_config(checkpoint.config))
        pairs = read_pairs(options['pairs'])
        results = ground_pairs(model, pairs, load_feature_directory(options['features']),
                               load_necks(options['necks']), config)
        write_results(options['out'], results)
        self.stdout.write(self.style.SUCCESS(f'Grounded {len(results)} queries into {options["out"]}'))
        return {'queries': len(results), 'threshold': config.threshold, 'top_n': config.top_n}
