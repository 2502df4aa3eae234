"""
Invariant and gradient suite behind the ``selfcheck`` command.

Each check is a function returning ``(passed, detail)``; ``run_selfcheck``
runs them all and never stops at the first failure.
"""

import logging
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .clustering import kmeans
from .config import Config
from .containers import read_archive, write_archive
from .gradcheck import gradient_check
from .losses import (
    combine_language, combine_video, loss_cel, loss_cls, loss_dqa, loss_mse, loss_sab, loss_trip,
)
from .pseudo_labels import ncut_bipartition
from .video import specific_attention

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ''


@dataclass
class SelfcheckReport:
    results: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    @property
    def failures(self):
        return [r for r in self.results if not r.passed]


def _leaf(generator, *shape):
    return torch.randn(*shape, generator=generator, dtype=torch.float64).requires_grad_()


def language_instance(seed, batch=2, sentence_dim=8, neck_dim=6, num_necks=2, vocab=11, length=4):
    """Random inputs of L_w as float64 leaves, plus the fixed targets."""
    g = torch.Generator().manual_seed(seed)
    params = {
        'scores': _leaf(g, batch, length, vocab),
        'necks': _leaf(g, batch, num_necks, neck_dim),
        'enc': _leaf(g, batch, sentence_dim),
        'dec': _leaf(g, batch, sentence_dim),
    }
    tokens = torch.randint(0, vocab, (batch, length), generator=g)
    lengths = torch.randint(1, length + 1, (batch,), generator=g)
    return params, tokens, lengths


def video_instance(seed, frames=5, centers=3, width=8, videos=3, sampled=2):
    g = torch.Generator().manual_seed(seed)
    params = {
        'logits': _leaf(g, centers, frames),
        'fore_logits': _leaf(g, frames),
        'trip_features': _leaf(g, frames, width),
        'positives': _leaf(g, sampled, videos, width),
        'negatives': _leaf(g, sampled, videos, width),
    }
    labels = torch.randint(0, 2, (centers, frames), generator=g).double()
    foreground = torch.zeros(frames, dtype=torch.bool)
    foreground[torch.randperm(frames, generator=g)[:max(2, frames // 2)]] = True
    return params, labels, foreground


def language_losses(config):
    """name -> builder(seed) returning (loss_fn, parameters)."""
    def build(select):
        def builder(seed):
            p, tokens, lengths = language_instance(seed)
            parts = {
                'cel': lambda: loss_cel(p['scores'], tokens, lengths),
                'mse': lambda: loss_mse(p['enc'], p['dec']),
                'dqa': lambda: loss_dqa(p['necks'], config.dqa_lambda),
            }
            parts['w'] = lambda: combine_language(parts['cel'](), parts['mse'](), parts['dqa'](),
                                                  config.alpha_w, config.beta_w)
            return parts[select], list(p.values())
        return builder
    return {f'L_{name}': build(name) for name in ('cel', 'mse', 'dqa', 'w')}


def video_losses(config):
    def build(select):
        def builder(seed):
            p, labels, foreground = video_instance(seed)
            parts = {
                'cls': lambda: loss_cls(torch.softmax(p['logits'], dim=-1), torch.sigmoid(p['fore_logits']), labels),
                'sab': lambda: loss_sab(p['positives'], p['negatives'], 0.1, 0.1, config.theta),
                'trip': lambda: loss_trip(p['trip_features'], foreground, config.tau3)[0],
            }
            parts['v'] = lambda: combine_video(parts['cls'](), parts['sab'](), parts['trip'](),
                                               config.alpha_v, config.beta_v)
            return parts[select], list(p.values())
        return builder
    return {f'L_{name}': build(name) for name in ('cls', 'sab', 'trip', 'v')}


def check_gradients(name, builder, seeds):
    worst = 0.0
    for seed in range(seeds):
        loss_fn, params = builder(seed)
        report = gradient_check(loss_fn, params)
        worst = max(worst, report.max_relative_error)
        if not report.passed(GRADIENT_TOLERANCE):
            return False, f'{name}: seed {seed} relative error {report.max_relative_error:.2e} at {report.worst}'
    return True, f'{name}: worst relative error {worst:.2e} over {seeds} seeds'


def check_attention(shapes, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(shapes):
        centers, frames, width = (int(v) for v in rng.integers(1, 9, size=3))
        projected = torch.as_tensor(rng.normal(size=(centers, width)))
        encoded = torch.as_tensor(rng.normal(size=(frames, width)))
        attention = specific_attention(projected, encoded)
        if not torch.allclose(attention.positive.sum(-1), torch.ones(centers, dtype=torch.float64), atol=1e-6):
            return False, f'A_spe rows do not sum to 1 for shape {(centers, frames, width)}'
        expected = torch.full((centers,), (frames - 1) / frames, dtype=torch.float64)
        if not torch.allclose(attention.negative.sum(-1), expected, atol=1e-6):
            return False, f'B_spe rows do not sum to (T-1)/T for shape {(centers, frames, width)}'
    return True, f'{shapes} random shapes'


def check_closed_forms():
    uniform = float(loss_cel(torch.zeros(5, 100, dtype=torch.float64), torch.arange(5)))
    if abs(uniform - 5 * math.log(100)) > 1e-9:
        return False, f'uniform L_cel {uniform}'
    dqa = float(loss_dqa(torch.zeros(1, 4, dtype=torch.float64), 0.5))
    if abs(dqa - 1.0) > 1e-9:
        return False, f'zero-neck L_dqa {dqa}'
    cls = float(loss_cls(torch.full((1, 1), 0.5, dtype=torch.float64), torch.ones(1, dtype=torch.float64),
                         torch.ones(1, 1)))
    if abs(cls - math.log(2)) > 1e-9:
        return False, f'h=0.5 L_cls {cls}'
    return True, 'L_cel, L_dqa and L_cls closed forms'


def check_kmeans(seeds):
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        points = np.vstack([rng.normal(0.0, 0.1, (10, 2)), rng.normal(10.0, 0.1, (10, 2))])
        result = kmeans(points, 2, seed=seed)
        if len(set(result.labels[:10])) != 1 or len(set(result.labels[10:])) != 1 \
                or result.labels[0] == result.labels[10]:
            return False, f'two-blob partition not recovered for seed {seed}'
    return True, f'two blobs recovered in {seeds} seeds'


def check_ncut(seeds):
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        affinity = np.full((6, 6), 1e-6)
        affinity[:3, :3] = affinity[3:, 3:] = 1.0
        affinity += np.diag(rng.uniform(0, 0.01, 6))
        order = rng.permutation(6)
        labels = ncut_bipartition(affinity[np.ix_(order, order)])
        planted = (order >= 3).astype(np.uint8)
        if not (np.array_equal(labels, planted) or np.array_equal(labels, 1 - planted)):
            return False, f'cliques not separated for seed {seed}'
    return True, f'cliques separated in {seeds} seeds'


def check_archive():
    rng = np.random.default_rng(0)
    matrix = rng.normal(size=(16, 5))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / 'roundtrip.arc'
        write_archive(path, {'m': matrix}, {'kind': 'roundtrip'})
        records, meta = read_archive(path)
    if records['m'].tobytes() != matrix.tobytes() or meta['kind'] != 'roundtrip':
        return False, 'archive round trip changed the payload'
    return True, 'archive round trip'


def run_selfcheck(config=None, seeds=20, shapes=1000):
    config = config or Config()
    report = SelfcheckReport()

    def record(name, outcome):
        passed, detail = outcome
        report.results.append(CheckResult(name, passed, detail))
        logger.log(logging.INFO if passed else logging.ERROR, '%s %s: %s', 'ok  ' if passed else 'FAIL', name, detail)

    for name, builder in {**language_losses(config), **video_losses(config)}.items():
        record(f'gradient {name}', check_gradients(name, builder, seeds))
    record('attention rows', check_attention(shapes))
    record('closed forms', check_closed_forms())
    record('k-means blobs', check_kmeans(seeds))
    record('n-cut cliques', check_ncut(seeds))
    record('archive', check_archive())
    return report
