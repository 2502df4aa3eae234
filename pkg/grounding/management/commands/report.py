from pathlib import Path

from django.core.management.base import CommandError

from grounding.checkpoints import load_checkpoint
from grounding.clustering import load_cluster_bank
from grounding.config import build_config
from grounding.inference import check_pairs, curve_table, dump_attention, score_curve
from grounding.ingest import load_feature_directory, read_pairs
from grounding.language_training import load_necks, necks_to_frame
from grounding.training import model_from_checkpoint

from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Export score curves, neck embeddings or attention dumps for inspection.'
    stage = 'report'

    def add_stage_arguments(self, parser):
        parser.add_argument('--necks', required=True, help='neck archive of the queries')
        parser.add_argument('--neck-table', help='output CSV of every neck vector')
        parser.add_argument('--checkpoint', help='video checkpoint, needed for curves and attention')
        parser.add_argument('--features', help='directory of .feat files')
        parser.add_argument('--pairs', help='TSV of video_id, query_id pairs')
        parser.add_argument('--curves', help='output CSV of score curves per pair')
        parser.add_argument('--clusters', help='cluster bank whose centers the attention dump uses')
        parser.add_argument('--attention-dir', help='write A_spe and A_fore per video here')
        parser.add_argument('--neck-index', type=int, default=0, help='neck index of the attention dump')

    def run(self, config, **options):
        if not (options['neck_table'] or options['curves'] or options['attention_dir']):
            raise CommandError('nothing to report: pass --neck-table, --curves or --attention-dir')
        necks = load_necks(options['necks'])
        written = {}
        if options['neck_table']:
            necks_to_frame(necks).to_csv(options['neck_table'], index=False)
            written['neck_table'] = len(necks)
        if options['curves'] or options['attention_dir']:
            for name in ('checkpoint', 'features'):
                if not options[name]:
                    raise CommandError(f'--{name} is required for curves and attention dumps')
            checkpoint = load_checkpoint(options['checkpoint'])
            model = model_from_checkpoint(checkpoint, build_config(checkpoint.config))
            videos = {video.video_id: video for video in load_feature_directory(options['features'])}
            if options['curves']:
                if not options['pairs']:
                    raise CommandError('--pairs is required for --curves')
                pairs = read_pairs(options['pairs'])
                check_pairs(pairs, videos, necks)
                curves = {(vid, qid): score_curve(model, necks[qid], videos[vid].features) for vid, qid in pairs}
                curve_table(curves).to_csv(options['curves'], index=False)
                written['curves'] = len(curves)
            if options['attention_dir']:
                if not options['clusters']:
                    raise CommandError('--clusters is required for --attention-dir')
                centers = load_cluster_bank(options['clusters']).centers[options['neck_index']]
                directory = Path(options['attention_dir'])
                directory.mkdir(parents=True, exist_ok=True)
                for video in videos.values():
                    dump_attention(directory, model, video, centers)
                written['attention'] = len(videos)
        self.stdout.write(self.style.SUCCESS(
            'Wrote ' + ', '.join(f'{name} ({count})' for name, count in written.items())))
        return written
