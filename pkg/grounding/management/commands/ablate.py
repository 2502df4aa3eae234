import pandas as pd

from grounding.synthbench import load_spec, run_benchmark

from ._base import PipelineCommand

VARIANTS = {
    'full': {},
    'no_mse': {'alpha_w': 0.0},
    'no_dqa': {'beta_w': 0.0},
    'no_sab': {'alpha_v': 0.0},
    'no_trip': {'beta_v': 0.0},
    'sample_centers': {'center_selection': 'sample'},
    'random_centers': {'center_selection': 'random'},
}


class Command(PipelineCommand):
    help = 'Run the synthetic benchmark with loss and center-selection ablations.'
    stage = 'ablate'

    def add_stage_arguments(self, parser):
        parser.add_argument('--spec', help='key=value synthetic spec file')
        parser.add_argument('--variants', nargs='+', choices=sorted(VARIANTS), default=list(VARIANTS))
        parser.add_argument('--out', help='output CSV, one row per variant')

    def run(self, config, **options):
        spec = load_spec(options['spec'])
        rows = []
        for name in options['variants']:
            result = run_benchmark(spec, config.replace(**VARIANTS[name]))
            rows.append({
                'variant': name,
                'r1_iou05': result.recall(1, 0.5),
                'r5_iou05': result.recall(5, 0.5),
                'random_r1_iou05': float(result.baseline[(result.baseline.top_n == 1)
                                                         & (result.baseline.iou_threshold == 0.5)].recall.iloc[0]),
                'final_agreement': result.agreement[max(result.agreement)],
            })
        table = pd.DataFrame(rows)
        if 'full' in options['variants']:
            reference = table.set_index('variant').loc['full', 'r1_iou05']
            table['delta_r1'] = table['r1_iou05'] - reference
        if options['out']:
            table.to_csv(options['out'], index=False)
        self.stdout.write(table.to_string(index=False, float_format=lambda v: f'{v:.2f}'))
        return {row['variant']: row['r1_iou05'] for row in rows}
