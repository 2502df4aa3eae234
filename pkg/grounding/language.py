"""
Query encoder-decoder that mines N_e "neck" features per query.

Encoder: frozen word embeddings -> two-layer LSTM (last hidden state of the
top layer is r_e) -> N_e independent two-layer perceptrons (the necks).
Decoder: N_e perceptrons over the necks, concatenated and mapped to r_o;
r_o seeds both layers of a two-layer LSTM that emits vocabulary scores.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence


class TwoLayerPerceptron(nn.Module):
    """affine -> tanh -> affine"""

    def __init__(self, in_dim, hidden_dim, out_dim):
        super().__init__()
        self.hidden = nn.Linear(in_dim, hidden_dim)
        self.out = nn.Linear(hidden_dim, out_dim)

    def forward(self, x):
        return self.out(torch.tanh(self.hidden(x)))


@dataclass
class LanguageOutputs:
    sentence_enc: torch.Tensor
    necks: torch.Tensor
    sentence_dec: torch.Tensor
    scores: torch.Tensor


def pad_queries(queries, max_length, pad_index=None):
    """Stack queries into a (B, L_max) index tensor plus their true lengths."""
    fill = 0 if pad_index is None else pad_index
    tokens = torch.full((len(queries), max_length), fill, dtype=torch.long)
    lengths = torch.empty(len(queries), dtype=torch.long)
    for row, query in enumerate(queries):
        kept = query.tokens[:max_length]
        tokens[row, :len(kept)] = torch.as_tensor(kept, dtype=torch.long)
        lengths[row] = len(kept)
    return tokens, lengths


class QueryAutoencoder(nn.Module):

    def __init__(self, table, config):
        super().__init__()
        self.num_necks = config.num_necks
        self.neck_dim = config.neck_dim
        self.max_length = config.max_query_length
        self.pad_index = table.pad_index
        sentence_dim = config.sentence_dim
        width = config.decoder_width

        self.embedding = nn.Embedding.from_pretrained(torch.as_tensor(table.rows, dtype=torch.float32), freeze=True)
        self.encoder = nn.LSTM(table.dim, sentence_dim, num_layers=2, batch_first=True)
        self.neck_heads = nn.ModuleList(
            TwoLayerPerceptron(sentence_dim, config.neck_dim, config.neck_dim) for _ in range(config.num_necks)
        )
        self.aggregators = nn.ModuleList(
            TwoLayerPerceptron(config.neck_dim, width, width) for _ in range(config.num_necks)
        )
        self.merge = nn.Linear(config.num_necks * width, sentence_dim)
        self.start_token = nn.Parameter(torch.randn(table.dim) * 0.1)
        self.decoder = nn.LSTM(table.dim, sentence_dim, num_layers=2, batch_first=True)
        self.vocab_head = nn.Linear(sentence_dim, table.vocab_size)

    def encode(self, tokens, lengths):
        """(B, L) indices -> r_e (B, d_r), necks (B, N_e, d_e)."""
        if bool((lengths < 1).any()):
            raise ValueError('cannot encode an empty token sequence')
        embedded = self.embedding(tokens)
        packed = pack_padded_sequence(embedded, lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, (hidden, _) = self.encoder(packed)
        sentence = hidden[-1]
        necks = torch.stack([head(sentence) for head in self.neck_heads], dim=1)
        return sentence, necks

    def aggregate(self, necks):
        """(B, N_e, d_e) necks -> r_o (B, d_r)."""
        if necks.dim() != 3 or necks.shape[1:] != (self.num_necks, self.neck_dim):
            raise ValueError(f'expected necks of shape (B, {self.num_necks}, {self.neck_dim}), '
                             f'got {tuple(necks.shape)}')
        parts = [aggregator(necks[:, i]) for i, aggregator in enumerate(self.aggregators)]
        return self.merge(torch.cat(parts, dim=-1))

    def _initial_state(self, sentence):
        hidden = sentence.unsqueeze(0).repeat(2, 1, 1).contiguous()
        return hidden, torch.zeros_like(hidden)

    def decode(self, necks, targets=None):
        """
        Necks -> (r_o, scores of shape (B, L_max, N_w)).

        With ``targets`` (B, L_max) the decoder is teacher-forced; without,
        it feeds back its own argmax words (greedy).
        """
        sentence = self.aggregate(necks)
        batch = sentence.shape[0]
        start = self.start_token.to(sentence.dtype).expand(batch, 1, -1)
        state = self._initial_state(sentence)
        if targets is not None:
            inputs = torch.cat([start, self.embedding(targets[:, :-1]).to(sentence.dtype)], dim=1)
            outputs, _ = self.decoder(inputs, state)
            return sentence, self.vocab_head(outputs)

        step_input, steps = start, []
        for _ in range(self.max_length):
            output, state = self.decoder(step_input, state)
            scores = self.vocab_head(output)
            steps.append(scores)
            step_input = self.embedding(scores.argmax(dim=-1)).to(sentence.dtype)
        return sentence, torch.cat(steps, dim=1)

    def forward(self, tokens, lengths):
        sentence_enc, necks = self.encode(tokens, lengths)
        sentence_dec, scores = self.decode(necks, targets=tokens)
        return LanguageOutputs(sentence_enc, necks, sentence_dec, scores)


def encode_query(model, query):
    """Single query -> (r_e of shape (d_r,), E of shape (N_e, d_e))."""
    if len(query.tokens) < 1:
        raise ValueError(f'{query.query_id}: empty token sequence')
    tokens, lengths = pad_queries([query], model.max_length, model.pad_index)
    sentence, necks = model.encode(tokens, lengths)
    return sentence[0], necks[0]


def decode_necks(model, necks, targets=None):
    """Single (N_e, d_e) neck matrix -> (r_o of shape (d_r,), P of shape (L_max, N_w))."""
    if necks.dim() != 2:
        raise ValueError(f'expected an (N_e, d_e) neck matrix, got shape {tuple(necks.shape)}')
    if targets is not None:
        targets = targets.reshape(1, -1)
    sentence, scores = model.decode(necks.unsqueeze(0), targets=targets)
    return sentence[0], scores[0]


@torch.no_grad()
def extract_necks(model, queries, batch_size=256):
    """query_id -> (N_e, d_e) float64 neck matrix, in corpus order."""
    model.eval()
    necks = {}
    for start in range(0, len(queries), batch_size):
        chunk = queries[start:start + batch_size]
        tokens, lengths = pad_queries(chunk, model.max_length, model.pad_index)
        _, batch_necks = model.encode(tokens, lengths)
        for query, matrix in zip(chunk, batch_necks):
            necks[query.query_id] = matrix.double().numpy()
    return necks


@torch.no_grad()
def reconstruct(model, queries):
    """Greedy reconstructions and the fraction of correctly reproduced words per query."""
    model.eval()
    tokens, lengths = pad_queries(queries, model.max_length, model.pad_index)
    _, necks = model.encode(tokens, lengths)
    _, scores = model.decode(necks)
    predicted = scores.argmax(dim=-1)
    rows = []
    for query, guess, length in zip(queries, predicted, lengths):
        length = int(length)
        words = tuple(int(i) for i in guess[:length])
        accuracy = float(np.mean([a == b for a, b in zip(words, query.tokens[:length])]))
        rows.append((query.query_id, words, accuracy))
    return rows
