"""Reading and writing frame features, embedding tables and query corpora."""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .containers import FEATURE_MAGIC, read_matrix, write_matrix
from .domain import EmbeddingTable, FrameFeatureSequence, QueryTokens, Segment
from .exceptions import CorpusError, FeatureFileError

logger = logging.getLogger(__name__)

FEATURE_SUFFIX = '.feat'


def load_frame_features(path, video_id=None):
    """Read one video's (T, d_v) float32 matrix; the id defaults to the file stem."""
    path = Path(path)
    features = read_matrix(path, magic=FEATURE_MAGIC)
    if features.dtype != np.float32:
        raise FeatureFileError(f'{path}: frame features must be 32-bit floats, got {features.dtype}')
    if features.shape[0] < 1:
        raise FeatureFileError(f'{path}: a video needs at least one frame')
    return FrameFeatureSequence(video_id or path.stem, features)


def save_frame_features(path, sequence):
    write_matrix(path, sequence.features.astype(np.float32, copy=False), magic=FEATURE_MAGIC)


def load_feature_directory(directory):
    """All ``*.feat`` files of a directory, sorted by video id; d_v must agree."""
    paths = sorted(Path(directory).glob(f'*{FEATURE_SUFFIX}'))
    if not paths:
        raise FeatureFileError(f'{directory}: no {FEATURE_SUFFIX} files')
    videos = [load_frame_features(p) for p in paths]
    dims = {v.dim for v in videos}
    if len(dims) != 1:
        raise FeatureFileError(f'{directory}: feature dimension differs across videos ({sorted(dims)})')
    return videos


def save_feature_directory(directory, videos):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for video in videos:
        save_frame_features(directory / f'{video.video_id}{FEATURE_SUFFIX}', video)


def load_embedding_table(path):
    """Whitespace-separated text, one ``word v_1 ... v_d`` row per line."""
    path = Path(path)
    words, rows = [], []
    try:
        with path.open(encoding='utf-8') as handle:
            for line_no, line in enumerate(handle, start=1):
                parts = line.split()
                if not parts:
                    continue
                try:
                    rows.append([float(v) for v in parts[1:]])
                except ValueError as exc:
                    raise CorpusError(f'{path}:{line_no}: {exc}') from exc
                words.append(parts[0])
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f'{path}: {exc}') from exc
    if len({len(r) for r in rows}) > 1:
        raise CorpusError(f'{path}: rows have different dimensions')
    try:
        return EmbeddingTable(tuple(words), np.asarray(rows, dtype=np.float32))
    except ValueError as exc:
        raise CorpusError(f'{path}: {exc}') from exc


def save_embedding_table(path, table):
    with Path(path).open('w', encoding='utf-8') as handle:
        for word, row in zip(table.words, table.rows):
            handle.write(word + ' ' + ' '.join(repr(float(v)) for v in row) + '\n')


def tokenize(line, table, max_length):
    """Map whitespace tokens to indices (UNK for unknown words), truncated to ``max_length``."""
    indices = [table.index_of(word) for word in line.split()[:max_length]]
    unknown = sum(1 for i in indices if i == table.unk_index)
    return tuple(indices), unknown


def load_query_corpus(path, table, max_length=10):
    """
    One query per line, either ``tokens ...`` or ``query_id<TAB>tokens ...``.

    Blank lines are skipped and counted; lines longer than ``max_length``
    are truncated. Out-of-vocabulary words map to the table's UNK index.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding='utf-8').splitlines()
    except UnicodeDecodeError as exc:
        raise CorpusError(f'{path}: not valid UTF-8 ({exc.reason} at byte {exc.start})') from exc
    except OSError as exc:
        raise CorpusError(f'{path}: {exc}') from exc

    queries, skipped, unknown = [], 0, 0
    for line_no, line in enumerate(lines, start=1):
        query_id, _, text = line.rpartition('\t')
        if not text.strip():
            skipped += 1
            continue
        tokens, oov = tokenize(text, table, max_length)
        unknown += oov
        queries.append(QueryTokens(query_id.strip() or f'q{line_no:05d}', tokens))
    if not queries:
        raise CorpusError(f'{path}: corpus has no queries')
    if skipped:
        logger.warning('%s: skipped %d empty line(s)', path, skipped)
    if unknown:
        logger.info('%s: %d out-of-vocabulary token(s) mapped to %s', path, unknown, table.words[table.unk_index])
    return queries


def write_query_corpus(path, queries, table):
    with Path(path).open('w', encoding='utf-8') as handle:
        for query in queries:
            handle.write(f'{query.query_id}\t{" ".join(table.words[i] for i in query.tokens)}\n')


def _read_table(path, **kwargs):
    try:
        return pd.read_csv(path, sep='\t', **kwargs)
    except FileNotFoundError:
        raise CorpusError(f'{path}: no such file') from None


def write_ground_truth(path, ground_truth):
    """``ground_truth`` maps (video_id, query_id) to a Segment."""
    frame = pd.DataFrame(
        [(vid, qid, seg.start, seg.end) for (vid, qid), seg in sorted(ground_truth.items())],
        columns=['video_id', 'query_id', 'start', 'end'],
    )
    frame.to_csv(path, sep='\t', index=False)


def read_ground_truth(path, fps=None):
    """
    Read (video_id, query_id) -> Segment. With ``fps``, start/end are seconds
    and are converted to inclusive frame indices.
    """
    frame = _read_table(path, dtype={'video_id': str, 'query_id': str})
    truth = {}
    for row in frame.itertuples(index=False):
        start, end = row.start, row.end
        if fps is not None:
            start, end = seconds_to_frames(start, end, fps)
        truth[(row.video_id, row.query_id)] = Segment(int(start), int(end))
    return truth


def seconds_to_frames(start, end, fps):
    first = int(np.floor(start * fps))
    last = max(first, int(np.ceil(end * fps)) - 1)
    return first, last


def write_pairs(path, pairs):
    """Video/query pairing used only at inference and evaluation time."""
    pd.DataFrame(pairs, columns=['video_id', 'query_id']).to_csv(path, sep='\t', index=False)


def read_pairs(path):
    frame = _read_table(path, dtype=str)
    return list(frame.itertuples(index=False, name=None))
