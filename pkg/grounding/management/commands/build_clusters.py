from grounding.clustering import assignment_table, build_cluster_bank, save_cluster_bank
from grounding.language_training import load_necks
from grounding.serializers import CENTER_SELECTIONS

from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Cluster the i-th necks of all queries into N_c centers per neck index.'
    stage = 'build-clusters'
    config_overrides = ('num_clusters', 'center_selection')

    def add_stage_arguments(self, parser):
        parser.add_argument('--necks', required=True, help='neck archive from train_language')
        parser.add_argument('--out', required=True, help='output cluster bank archive')
        parser.add_argument('--k', dest='num_clusters', type=int, help='override num_clusters')
        parser.add_argument('--selection', dest='center_selection', choices=CENTER_SELECTIONS,
                            help='override center_selection')
        parser.add_argument('--assignments', help='output TSV of query-to-cluster assignments')

    def run(self, config, **options):
        bank = build_cluster_bank(load_necks(options['necks']), config)
        save_cluster_bank(options['out'], bank)
        if options['assignments']:
            assignment_table(bank).to_csv(options['assignments'], sep='\t', index=False)
        self.stdout.write(self.style.SUCCESS(
            f'{bank.num_necks} x {bank.num_clusters} centers written to {options["out"]}'))
        return {'inertia': list(bank.inertia), 'selection': bank.selection}
