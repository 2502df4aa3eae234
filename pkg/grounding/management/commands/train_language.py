import pandas as pd

from grounding.checkpoints import Checkpoint, module_tensors, save_checkpoint
from grounding.ingest import load_embedding_table, load_query_corpus
from grounding.language import extract_necks, reconstruct
from grounding.language_training import save_necks, train_language_model, write_trace

from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Train the query encoder-decoder and export every query\'s necks.'
    stage = 'train-language'
    config_overrides = ('language_epochs',)

    def add_stage_arguments(self, parser):
        parser.add_argument('--queries', required=True, help='query corpus text file')
        parser.add_argument('--embeddings', required=True, help='word embedding table')
        parser.add_argument('--necks', required=True, help='output neck archive')
        parser.add_argument('--model', help='output checkpoint of the language model')
        parser.add_argument('--trace', help='output CSV of the per-step loss trace')
        parser.add_argument('--reconstruction', help='output TSV of greedy reconstructions')
        parser.add_argument('--epochs', dest='language_epochs', type=int, help='override language_epochs')

    def run(self, config, **options):
        table = load_embedding_table(options['embeddings'])
        queries = load_query_corpus(options['queries'], table, config.max_query_length)
        result = train_language_model(queries, table, config)
        necks = extract_necks(result.model, queries)
        save_necks(options['necks'], necks)
        if options['trace']:
            write_trace(options['trace'], result.trace)
        if options['model']:
            save_checkpoint(options['model'], Checkpoint(module_tensors('language', result.model), 0,
                                                         config.as_dict(), {'vocab_size': table.vocab_size}))
        rows = reconstruct(result.model, queries)
        accuracy = float(pd.Series([acc for _, _, acc in rows]).mean())
        if options['reconstruction']:
            pd.DataFrame(
                [(qid, ' '.join(table.words[i] for i in words), acc) for qid, words, acc in rows],
                columns=['query_id', 'reconstruction', 'accuracy'],
            ).to_csv(options['reconstruction'], sep='\t', index=False)
        self.stdout.write(self.style.SUCCESS(
            f'Held-out L_w {result.held_out_before["total"]:.4f} -> {result.held_out_after["total"]:.4f}; '
            f'reconstruction accuracy {accuracy:.3f}'))
        return {
            'queries': len(queries),
            'held_out_before': result.held_out_before['total'],
            'held_out_after': result.held_out_after['total'],
            'reconstruction_accuracy': accuracy,
        }
