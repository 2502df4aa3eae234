from pathlib import Path

import pandas as pd

from grounding.ingest import (
    save_embedding_table, save_feature_directory, write_ground_truth, write_pairs, write_query_corpus,
)
from grounding.synthbench import generate_corpus, load_spec, write_spec

from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Generate a synthetic grounding corpus with planted segments.'
    stage = 'synth-gen'

    def add_stage_arguments(self, parser):
        parser.add_argument('--spec', help='key=value synthetic spec file (defaults otherwise)')
        parser.add_argument('--spec-seed', type=int, help='override the spec seed')
        parser.add_argument('--out', required=True, help='output directory')

    def run(self, config, **options):
        spec = load_spec(options['spec'], seed=options['spec_seed'])
        corpus = generate_corpus(spec, word_dim=config.word_dim)
        out = Path(options['out'])
        out.mkdir(parents=True, exist_ok=True)
        save_feature_directory(out / 'features', corpus.videos)
        save_embedding_table(out / 'embeddings.txt', corpus.table)
        write_query_corpus(out / 'queries.txt', corpus.queries, corpus.table)
        write_pairs(out / 'pairs.tsv', corpus.pairs)
        write_ground_truth(out / 'ground_truth.tsv', corpus.ground_truth)
        pd.DataFrame(sorted(corpus.atom_labels.items()), columns=['query_id', 'atom']).to_csv(
            out / 'atoms.tsv', sep='\t', index=False)
        write_spec(spec, out / 'spec.txt')
        self.stdout.write(self.style.SUCCESS(
            f'Wrote {len(corpus.videos)} videos and {len(corpus.queries)} queries to {out}'))
        return {'videos': len(corpus.videos), 'queries': len(corpus.queries), 'spec_seed': spec.seed}
