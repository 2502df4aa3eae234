"""
Synthetic grounding corpus with planted ground truth, baselines and the
benchmark pipeline.

Every atom k has a prototype frame vector and a small vocabulary. A video
is background noise with planted segments whose frames are prototype(k)
plus noise; the paired query is drawn from atom k's words. The pairing and
the segments are only ever handed to inference and evaluation.
"""

import dataclasses
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .clustering import build_cluster_bank, cluster_purity
from .config import parse_key_value_text, read_key_value_file
from .domain import EmbeddingTable, FrameFeatureSequence, GroundingResult, QueryTokens, Segment
from .exceptions import ConfigurationError
from .inference import evaluation_table, ground_pairs, recall_at_n, temporal_iou
from .language import extract_necks
from .language_training import train_language_model
from .training import run_training

logger = logging.getLogger(__name__)

WORD_NOISE = 0.3


@dataclasses.dataclass(frozen=True)
class SyntheticSpec:
    num_atoms: int = 8
    words_per_atom: int = 6
    num_videos: int = 200
    num_frames: int = 64
    min_segment_fraction: float = 0.1
    max_segment_fraction: float = 0.3
    feature_dim: int = 32
    noise_std: float = 0.5
    query_length: int = 5
    segments_per_video: int = 1
    seed: int = 0

    @property
    def length_range(self):
        """Inclusive (shortest, longest) planted segment length in frames."""
        return (max(1, math.ceil(self.min_segment_fraction * self.num_frames)),
                math.floor(self.max_segment_fraction * self.num_frames))

    def as_dict(self):
        return dataclasses.asdict(self)


SPEC_FIELDS = tuple(f.name for f in dataclasses.fields(SyntheticSpec))


def build_spec(values):
    from .serializers import SyntheticSpecSerializer

    unknown = sorted(set(values) - set(SPEC_FIELDS))
    if unknown:
        raise ConfigurationError({key: ['unknown spec key'] for key in unknown})
    serializer = SyntheticSpecSerializer(data={**SyntheticSpec().as_dict(), **values})
    if not serializer.is_valid():
        raise ConfigurationError(serializer.errors)
    return SyntheticSpec(**serializer.validated_data)


def load_spec(path=None, text=None, **overrides):
    values = {}
    if path is not None:
        values.update(read_key_value_file(path))
    if text is not None:
        values.update(parse_key_value_text(text))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return build_spec(values)


def write_spec(spec, path):
    lines = [f'{key}={value}' for key, value in spec.as_dict().items()]
    Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')


@dataclasses.dataclass
class SyntheticCorpus:
    videos: list
    queries: list
    table: EmbeddingTable
    ground_truth: dict
    atom_labels: dict
    pairs: list


def atom_words(num_atoms, words_per_atom):
    return [f'a{k}w{w}' for k in range(num_atoms) for w in range(words_per_atom)]


def _embedding_table(spec, word_dim, rng):
    words = atom_words(spec.num_atoms, spec.words_per_atom)
    table = EmbeddingTable.from_vocabulary(words, word_dim, seed=spec.seed)
    rows = table.rows.copy()
    centers = rng.normal(size=(spec.num_atoms, word_dim))
    for index in range(len(words)):
        rows[index] = centers[index // spec.words_per_atom] + WORD_NOISE * rng.normal(size=word_dim)
    return EmbeddingTable(table.words, rows.astype(np.float32))


def _place_segments(rng, spec):
    low, high = spec.length_range
    placed = []
    for _ in range(100 * spec.segments_per_video):
        if len(placed) == spec.segments_per_video:
            break
        length = int(rng.integers(low, high + 1))
        start = int(rng.integers(0, spec.num_frames - length + 1))
        candidate = Segment(start, start + length - 1)
        if all(candidate.end < s.start or s.end < candidate.start for s in placed):
            placed.append(candidate)
    if len(placed) < spec.segments_per_video:
        raise ConfigurationError({'segments_per_video': [
            f'cannot place {spec.segments_per_video} disjoint segments in {spec.num_frames} frames']})
    return sorted(placed)


def generate_corpus(spec, word_dim=32):
    """Deterministic in ``spec`` (its seed included) and ``word_dim``."""
    low, high = spec.length_range
    if high < low or spec.segments_per_video * low > spec.num_frames:
        raise ConfigurationError({'min_segment_fraction': [
            f'no segment length fits {spec.num_frames} frames with fractions '
            f'{spec.min_segment_fraction}..{spec.max_segment_fraction}']})
    rng = np.random.default_rng(spec.seed)
    table = _embedding_table(spec, word_dim, rng)
    prototypes = rng.normal(size=(spec.num_atoms, spec.feature_dim))

    videos, queries, truth, atoms, pairs = [], [], {}, {}, []
    for v in range(spec.num_videos):
        video_id = f'v{v:05d}'
        frames = rng.normal(0.0, spec.noise_std, size=(spec.num_frames, spec.feature_dim))
        for s, segment in enumerate(_place_segments(rng, spec)):
            atom = int(rng.integers(spec.num_atoms))
            frames[segment.start:segment.end + 1] += prototypes[atom]
            query_id = f'{video_id}q{s}'
            words = rng.integers(spec.words_per_atom, size=spec.query_length) + atom * spec.words_per_atom
            queries.append(QueryTokens(query_id, tuple(int(w) for w in words)))
            truth[(video_id, query_id)] = segment
            atoms[query_id] = atom
            pairs.append((video_id, query_id))
        videos.append(FrameFeatureSequence(video_id, frames.astype(np.float32)))
    logger.info('generated %d videos and %d queries over %d atoms', len(videos), len(queries), spec.num_atoms)
    return SyntheticCorpus(videos, queries, table, truth, atoms, pairs)


def random_segments(rng, num_frames, length_range, top_n):
    low, high = length_range
    segments = []
    for rank in range(top_n):
        length = int(rng.integers(low, min(high, num_frames) + 1))
        start = int(rng.integers(0, num_frames - length + 1))
        segments.append(Segment(start, start + length - 1, (top_n - rank) / top_n))
    return tuple(segments)


def random_baseline(videos, pairs, spec, seed=0, top_n=5):
    """Per pair, ``top_n`` uniform random segments with lengths in the spec's range."""
    rng = np.random.default_rng(seed)
    frames = {video.video_id: video.num_frames for video in videos}
    return [GroundingResult(vid, qid, random_segments(rng, frames[vid], spec.length_range, top_n))
            for vid, qid in pairs]


def baseline_estimate(spec, iou_threshold=0.5, top_n=1, draws=10000, seed=0):
    """Monte-Carlo R@N of the random baseline against truths drawn the way the generator draws them."""
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(draws):
        truth = random_segments(rng, spec.num_frames, spec.length_range, 1)[0]
        guesses = random_segments(rng, spec.num_frames, spec.length_range, top_n)
        hits += any(temporal_iou(g, truth) > iou_threshold for g in guesses)
    return 100.0 * hits / draws


def planted_mask(segment, num_frames):
    mask = np.zeros(num_frames, dtype=np.uint8)
    mask[segment.start:segment.end + 1] = 1
    return mask


def label_agreement(store, bank, pairs, ground_truth, neck=None):
    """
    Mean frame accuracy (percent) of the label row belonging to each query's
    own cluster against the planted mask, over pairs and neck indices.
    """
    necks = range(bank.num_necks) if neck is None else [neck]
    scores = []
    for video_id, query_id in pairs:
        for index in necks:
            matrix = store[(index, video_id)]
            row = matrix[bank.assignments[index][query_id]]
            scores.append(float(np.mean(row == planted_mask(ground_truth[(video_id, query_id)], len(row)))))
    return 100.0 * float(np.mean(scores))


@dataclasses.dataclass
class BenchmarkResult:
    table: pd.DataFrame
    baseline: pd.DataFrame
    agreement: dict
    purity: list
    language_trace: pd.DataFrame
    metrics: pd.DataFrame

    def recall(self, top_n=1, iou_threshold=0.5):
        rows = self.table[(self.table.top_n == top_n) & (self.table.iou_threshold == iou_threshold)]
        return float(rows.recall.iloc[0])


def run_benchmark(spec, config):
    """Whole pipeline on a generated corpus; ground truth is used for scoring only."""
    corpus = generate_corpus(spec, word_dim=config.word_dim)
    language = train_language_model(corpus.queries, corpus.table, config)
    necks = extract_necks(language.model, corpus.queries)
    bank = build_cluster_bank(necks, config)
    purity = [cluster_purity(assignment, corpus.atom_labels) for assignment in bank.assignments]
    trained = run_training(corpus.videos, bank, config, language_model=language.model)

    results = ground_pairs(trained.model, corpus.pairs, corpus.videos, necks, config)
    baseline = random_baseline(corpus.videos, corpus.pairs, spec, seed=config.seed, top_n=config.top_n)
    agreement = {iteration: label_agreement(store, bank, corpus.pairs, corpus.ground_truth)
                 for iteration, store in sorted(trained.snapshots.items())}
    logger.info('benchmark R@1 IoU=0.5: %.2f (random %.2f)',
                recall_at_n(results, corpus.ground_truth, 1, 0.5),
                recall_at_n(baseline, corpus.ground_truth, 1, 0.5))
    return BenchmarkResult(
        table=evaluation_table(results, corpus.ground_truth),
        baseline=evaluation_table(baseline, corpus.ground_truth),
        agreement=agreement,
        purity=purity,
        language_trace=language.trace,
        metrics=trained.metrics,
    )
