import math

import numpy as np
import torch
from django.test import SimpleTestCase

from .config import Config
from .domain import EmbeddingTable, QueryTokens
from .exceptions import TrainingDivergedError
from .language import QueryAutoencoder, decode_necks, encode_query, extract_necks, pad_queries, reconstruct
from .language_training import necks_to_frame, split_held_out, train_language_model
from .losses import combine_language, loss_cel, loss_dqa, loss_language, loss_mse


def tiny_config(**changes):
    values = dict(num_necks=2, neck_dim=6, sentence_dim=8, word_dim=4, max_query_length=5,
                  language_epochs=2, language_batch_size=4, language_lr=0.01)
    values.update(changes)
    return Config(**values)


def tiny_table(words=8, dim=4):
    return EmbeddingTable.from_vocabulary([f'w{i}' for i in range(words)], dim=dim, seed=0)


class LanguageLossTests(SimpleTestCase):
    def test_uniform_scores(self):
        loss = loss_cel(torch.zeros(5, 100, dtype=torch.float64), torch.arange(5))
        self.assertAlmostEqual(float(loss), 5 * math.log(100), places=9)

    def test_saturated_truth(self):
        scores = torch.zeros(1, 10, dtype=torch.float64)
        scores[0, 3] = 50.0
        self.assertLess(float(loss_cel(scores, torch.tensor([3]))), 1e-20)

    def test_cel_matches_log_sum_exp_by_hand(self):
        rng = np.random.default_rng(4)
        scores = rng.normal(size=(3, 7))
        tokens = [2, 0, 6]
        expected = sum(math.log(sum(math.exp(v) for v in row)) - row[t] for row, t in zip(scores, tokens))
        self.assertAlmostEqual(float(loss_cel(torch.as_tensor(scores), torch.tensor(tokens))), expected, places=9)

    def test_padding_positions_are_ignored(self):
        scores = torch.randn(1, 4, 6, dtype=torch.float64)
        tokens = torch.tensor([[1, 2, 0, 0]])
        short = loss_cel(scores, tokens, torch.tensor([2]))
        self.assertAlmostEqual(float(short), float(loss_cel(scores[0, :2], tokens[0, :2])), places=12)

    def test_dqa_zero_necks(self):
        self.assertAlmostEqual(float(loss_dqa(torch.zeros(2, 4, dtype=torch.float64), 0.5)), 1.0, places=9)

    def test_dqa_single_unit_neck(self):
        neck = torch.tensor([[0.6, 0.8, 0.0, 0.0]], dtype=torch.float64)
        self.assertAlmostEqual(float(loss_dqa(neck, 0.5)), 1.0, places=9)

    def test_dqa_matches_entrywise_oracle(self):
        rng = np.random.default_rng(1)
        necks = rng.normal(size=(3, 5))
        expected = math.sqrt(sum(
            (sum(necks[k, a] * necks[k, b] for k in range(3)) - (0.5 if a == b else 0.0)) ** 2
            for a in range(5) for b in range(5)
        ))
        self.assertAlmostEqual(float(loss_dqa(torch.as_tensor(necks), 0.5)), expected, places=9)

    def test_dqa_vanishes_for_scaled_orthonormal_necks(self):
        basis, _ = np.linalg.qr(np.random.default_rng(2).normal(size=(4, 4)))
        necks = torch.as_tensor(math.sqrt(0.5) * basis.T)
        self.assertLess(float(loss_dqa(necks, 0.5)), 1e-12)

    def test_mse(self):
        self.assertEqual(float(loss_mse(torch.tensor([1.0, 0.0]), torch.zeros(2))), 0.5)
        r = torch.randn(8)
        self.assertEqual(float(loss_mse(r, r.clone())), 0.0)
        with self.assertRaises(ValueError):
            loss_mse(torch.zeros(3), torch.zeros(4))

    def test_weighted_sum(self):
        self.assertEqual(combine_language(2.0, 1.0, 4.0, 0.5, 0.5), 4.5)

    def test_language_loss_is_the_sum_of_its_parts(self):
        g = torch.Generator().manual_seed(0)
        scores = torch.randn(2, 4, 9, generator=g, dtype=torch.float64)
        tokens = torch.randint(0, 9, (2, 4), generator=g)
        lengths = torch.tensor([4, 2])
        necks = torch.randn(2, 3, 5, generator=g, dtype=torch.float64)
        enc, dec = torch.randn(2, 8, generator=g, dtype=torch.float64), torch.randn(2, 8, generator=g,
                                                                                     dtype=torch.float64)
        config = tiny_config(alpha_w=0.3, beta_w=0.7)
        loss = loss_language(scores, tokens, lengths, necks, enc, dec, config)
        expected = (loss_cel(scores, tokens, lengths) + 0.3 * loss_mse(enc, dec)
                    + 0.7 * loss_dqa(necks, config.dqa_lambda))
        self.assertAlmostEqual(float(loss.total), float(expected), places=12)

        only_cel = loss_language(scores, tokens, lengths, necks, enc, dec, tiny_config(alpha_w=0.0, beta_w=0.0))
        self.assertEqual(float(only_cel.total), float(only_cel.cel))

    def test_batch_sums_ignore_order(self):
        g = torch.Generator().manual_seed(5)
        scores = torch.randn(4, 3, 6, generator=g, dtype=torch.float64)
        tokens = torch.randint(0, 6, (4, 3), generator=g)
        lengths = torch.tensor([3, 1, 2, 3])
        necks = torch.randn(4, 2, 3, generator=g, dtype=torch.float64)
        order = torch.tensor([2, 0, 3, 1])
        self.assertAlmostEqual(float(loss_cel(scores, tokens, lengths)),
                               float(loss_cel(scores[order], tokens[order], lengths[order])), places=12)
        self.assertAlmostEqual(float(loss_dqa(necks, 0.5)), float(loss_dqa(necks[order], 0.5)), places=12)


class QueryAutoencoderTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.table = tiny_table()
        self.config = tiny_config()
        self.model = QueryAutoencoder(self.table, self.config)

    def test_encoding_is_deterministic(self):
        query = QueryTokens('q', (0, 3, 2))
        first, second = encode_query(self.model, query), encode_query(self.model, query)
        self.assertTrue(torch.equal(first[0], second[0]))
        self.assertTrue(torch.equal(first[1], second[1]))
        self.assertEqual(tuple(first[1].shape), (2, 6))

    def test_one_token_changes_the_necks(self):
        _, a = encode_query(self.model, QueryTokens('a', (0, 3, 2)))
        _, b = encode_query(self.model, QueryTokens('b', (0, 3, 5)))
        self.assertFalse(torch.equal(a, b))

    def test_zero_neck_heads_output_their_bias(self):
        with torch.no_grad():
            for head in self.model.neck_heads:
                head.hidden.weight.zero_()
                head.out.weight.zero_()
        _, necks = encode_query(self.model, QueryTokens('q', (1, 2)))
        for index, head in enumerate(self.model.neck_heads):
            torch.testing.assert_close(necks[index], head.out.bias)

    def test_zero_necks_and_biases_give_zero_sentence(self):
        with torch.no_grad():
            for aggregator in self.model.aggregators:
                aggregator.hidden.bias.zero_()
                aggregator.out.bias.zero_()
            self.model.merge.bias.zero_()
        sentence, scores = decode_necks(self.model, torch.zeros(2, 6))
        self.assertTrue(torch.equal(sentence, torch.zeros(8)))
        self.assertEqual(tuple(scores.shape), (5, self.table.vocab_size))

    def test_decoding_is_deterministic_and_sensitive(self):
        necks = torch.randn(2, 6)
        self.assertTrue(torch.equal(decode_necks(self.model, necks)[1], decode_necks(self.model, necks)[1]))
        changed = necks.clone()
        changed[1] += 1.0
        self.assertFalse(torch.equal(decode_necks(self.model, necks)[0], decode_necks(self.model, changed)[0]))

    def test_wrong_neck_shape_is_rejected(self):
        with self.assertRaises(ValueError):
            self.model.aggregate(torch.zeros(1, 3, 6))

    def test_padding_and_extraction(self):
        queries = [QueryTokens('a', (1,)), QueryTokens('b', (1, 2, 3))]
        tokens, lengths = pad_queries(queries, 5, self.table.pad_index)
        self.assertEqual(lengths.tolist(), [1, 3])
        self.assertEqual(tokens[0, 1].item(), self.table.pad_index)
        necks = extract_necks(self.model, queries)
        self.assertEqual(list(necks), ['a', 'b'])
        self.assertEqual(necks['a'].dtype, np.float64)
        frame = necks_to_frame(necks)
        self.assertEqual(len(frame), 4)
        self.assertEqual(list(frame.columns[:3]), ['query_id', 'neck', 'dim_0'])

    def test_reconstruction_rows(self):
        rows = reconstruct(self.model, [QueryTokens('a', (1, 2))])
        self.assertEqual(rows[0][0], 'a')
        self.assertEqual(len(rows[0][1]), 2)
        self.assertTrue(0.0 <= rows[0][2] <= 1.0)


class LanguageTrainingTests(SimpleTestCase):
    def setUp(self):
        self.table = tiny_table()
        self.queries = [QueryTokens(f'q{i}', tuple((i + k) % 8 for k in range(3))) for i in range(6)]

    def test_single_query_beats_uniform(self):
        query = [QueryTokens('only', (1, 4, 2, 6))]
        result = train_language_model(query, self.table, tiny_config(language_epochs=200, language_lr=0.01))
        last = result.trace.iloc[-1]
        self.assertLess(last.cel / 4, math.log(self.table.vocab_size))

    def test_zero_learning_rate_leaves_parameters(self):
        torch.manual_seed(0)
        model = QueryAutoencoder(self.table, tiny_config())
        before = {k: v.clone() for k, v in model.state_dict().items()}
        train_language_model(self.queries, self.table, tiny_config(language_lr=0.0), model=model)
        for name, value in model.state_dict().items():
            self.assertTrue(torch.equal(value, before[name]), name)

    def test_fixed_seed_reproduces_the_trace(self):
        first = train_language_model(self.queries, self.table, tiny_config())
        second = train_language_model(self.queries, self.table, tiny_config())
        self.assertTrue(first.trace.equals(second.trace))
        self.assertEqual(len(first.trace), 2 * 2)

    def test_held_out_loss_does_not_grow(self):
        result = train_language_model(self.queries, self.table, tiny_config(language_epochs=60))
        self.assertLessEqual(result.held_out_after['total'], result.held_out_before['total'])

    def test_small_corpus_is_its_own_held_out_slice(self):
        train, held = split_held_out(self.queries, 0.1, 0)
        self.assertEqual(train, held)
        many = [QueryTokens(f'q{i}', (1,)) for i in range(40)]
        train, held = split_held_out(many, 0.1, 0)
        self.assertEqual(len(held), 4)
        self.assertEqual(len(train), 36)

    def test_non_finite_loss_names_the_batch(self):
        model = QueryAutoencoder(self.table, tiny_config())
        with torch.no_grad():
            model.vocab_head.bias.fill_(float('nan'))
        with self.assertRaises(TrainingDivergedError) as ctx:
            train_language_model(self.queries, self.table, tiny_config(), model=model)
        self.assertTrue(set(ctx.exception.batch_ids) <= {q.query_id for q in self.queries})
        self.assertTrue(ctx.exception.batch_ids)
