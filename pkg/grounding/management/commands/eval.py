from grounding.inference import evaluation_table, format_table, read_results
from grounding.ingest import read_ground_truth

from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Score grounding results with R@{1,5} at IoU {0.3, 0.5, 0.7}.'
    stage = 'eval'

    def add_stage_arguments(self, parser):
        parser.add_argument('--results', required=True, help='results TSV from infer')
        parser.add_argument('--ground-truth', required=True, help='TSV of video_id, query_id, start, end')
        parser.add_argument('--fps', type=float, help='ground truth is in seconds at this frame rate')
        parser.add_argument('--out', help='output CSV of the table')

    def run(self, config, **options):
        table = evaluation_table(read_results(options['results']),
                                 read_ground_truth(options['ground_truth'], fps=options['fps']))
        if options['out']:
            table.to_csv(options['out'], index=False)
        self.record_table(table)
        self.stdout.write(format_table(table))
        return {f'R@{row.top_n},IoU={row.iou_threshold}': float(row.recall) for row in table.itertuples(index=False)}
