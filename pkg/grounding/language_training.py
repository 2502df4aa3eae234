"""Training the query encoder-decoder with L_w, and exporting its necks."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import torch

from .containers import read_archive, write_archive
from .exceptions import TrainingDivergedError
from .language import QueryAutoencoder, pad_queries
from .losses import loss_language

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['epoch', 'step', 'cel', 'mse', 'dqa', 'total']


@dataclass
class LanguageTrainingResult:
    model: QueryAutoencoder
    trace: pd.DataFrame
    held_out_ids: tuple = ()
    held_out_before: dict = field(default_factory=dict)
    held_out_after: dict = field(default_factory=dict)


def split_held_out(queries, fraction, seed):
    """Seeded split; corpora under ten queries are evaluated on themselves."""
    if len(queries) < 10 or fraction <= 0:
        return list(queries), list(queries)
    order = np.random.default_rng(seed).permutation(len(queries))
    size = max(1, int(round(fraction * len(queries))))
    held = {int(i) for i in order[:size]}
    train = [q for i, q in enumerate(queries) if i not in held]
    return train, [queries[i] for i in sorted(held)]


@torch.no_grad()
def evaluate_language(model, queries, config):
    """Per-query mean of each L_w component over ``queries``."""
    model.eval()
    tokens, lengths = pad_queries(queries, model.max_length, model.pad_index)
    outputs = model(tokens, lengths)
    loss = loss_language(outputs.scores, tokens, lengths, outputs.necks,
                         outputs.sentence_enc, outputs.sentence_dec, config)
    return {name: value / len(queries) for name, value in loss.as_floats().items()}


def train_language_model(queries, table, config, model=None, epochs=None, held_out_fraction=0.1):
    """
    Adam on the batch mean of L_w.

    Returns the model plus a per-step trace (epoch, step and the per-query
    mean of every component). A non-finite loss aborts with the ids of the
    offending batch.
    """
    if not queries:
        raise ValueError('cannot train on an empty corpus')
    torch.manual_seed(config.seed)
    if model is None:
        model = QueryAutoencoder(table, config)
    epochs = config.language_epochs if epochs is None else epochs
    train, held_out = split_held_out(queries, held_out_fraction, config.seed)
    optimizer = torch.optim.Adam([p for p in model.parameters() if p.requires_grad], lr=config.language_lr)
    shuffler = torch.Generator().manual_seed(config.seed)

    before = evaluate_language(model, held_out, config)
    rows, step = [], 0
    for epoch in range(1, epochs + 1):
        model.train()
        order = torch.randperm(len(train), generator=shuffler).tolist()
        for start in range(0, len(order), config.language_batch_size):
            batch = [train[i] for i in order[start:start + config.language_batch_size]]
            tokens, lengths = pad_queries(batch, model.max_length, model.pad_index)
            outputs = model(tokens, lengths)
            loss = loss_language(outputs.scores, tokens, lengths, outputs.necks,
                                 outputs.sentence_enc, outputs.sentence_dec, config)
            if not math.isfinite(float(loss.total)):
                raise TrainingDivergedError('language loss became non-finite', [q.query_id for q in batch])
            optimizer.zero_grad()
            (loss.total / len(batch)).backward()
            optimizer.step()
            step += 1
            values = {k: v / len(batch) for k, v in loss.as_floats().items()}
            rows.append({'epoch': epoch, 'step': step, **values})
        last = rows[-1]
        logger.info('language epoch %d/%d: L_w=%.4f (cel=%.4f mse=%.4f dqa=%.4f)',
                    epoch, epochs, last['total'], last['cel'], last['mse'], last['dqa'])

    after = evaluate_language(model, held_out, config)
    logger.info('held-out L_w %.4f -> %.4f', before['total'], after['total'])
    trace = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    return LanguageTrainingResult(model, trace, tuple(q.query_id for q in held_out), before, after)


def write_trace(path, trace):
    trace.to_csv(path, index=False)


def save_necks(path, necks):
    """One (N_e, d_e) record per query id."""
    write_archive(path, {qid: matrix.astype(np.float64) for qid, matrix in necks.items()}, {'kind': 'necks'})


def load_necks(path):
    records, _ = read_archive(path)
    return records


def necks_to_frame(necks):
    """Long-format table (query_id, neck, dim_0 ... dim_{d_e-1}) for embedding inspection."""
    rows = []
    for query_id, matrix in necks.items():
        for index, vector in enumerate(matrix):
            rows.append([query_id, index, *vector.tolist()])
    width = next(iter(necks.values())).shape[1] if necks else 0
    return pd.DataFrame(rows, columns=['query_id', 'neck'] + [f'dim_{i}' for i in range(width)])
