"""
Test-time grounding and the R@N, IoU=theta metric.

A query's own necks take the place of the cluster centers: each neck gives
a per-frame vector A_spe[i] * A_fore, every vector is softmaxed over time
and the results are multiplied together. Segments grow around the highest
local maxima of that curve.
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd
import torch
from joblib import Parallel, delayed

from .containers import write_archive
from .domain import GroundingResult, Segment
from .exceptions import EvaluationError

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ['video_id', 'query_id', 'rank', 'start', 'end', 'score']
TABLE_TOP_NS = (1, 5)
TABLE_THRESHOLDS = (0.3, 0.5, 0.7)


@torch.no_grad()
def neck_products(model, necks, frames):
    """(N_e, T) matrix of A_spe[i, t] * A_fore[t] with the necks as centers."""
    outputs = model(frames, necks)
    return outputs.attention.positive * outputs.foreground.probabilities.unsqueeze(0)


def combine_neck_scores(products):
    """Softmax each row over time, then multiply the rows entrywise."""
    products = torch.as_tensor(products, dtype=torch.float64)
    return torch.softmax(products, dim=-1).prod(dim=0)


def score_curve(model, necks, frames):
    return combine_neck_scores(neck_products(model, necks, frames)).numpy()


def grow_segment(scores, seed, threshold):
    """
    Grow [seed, seed] one frame at a time: a neighbour n of boundary b joins
    while score(n) / score(b) >= threshold. Each side grows independently.
    """
    if threshold <= 0:
        raise ValueError(f'threshold must be positive, got {threshold}')
    scores = np.asarray(scores, dtype=np.float64)
    start = end = int(seed)
    while start > 0 and scores[start - 1] >= threshold * scores[start]:
        start -= 1
    while end < len(scores) - 1 and scores[end + 1] >= threshold * scores[end]:
        end += 1
    return Segment(start, end, float(scores[seed]))


def local_maxima(scores):
    """Indices of local maxima; a plateau is reported by its leftmost frame."""
    scores = np.asarray(scores, dtype=np.float64)
    peaks, start = [], 0
    while start < len(scores):
        stop = start
        while stop + 1 < len(scores) and scores[stop + 1] == scores[start]:
            stop += 1
        rises = start == 0 or scores[start - 1] < scores[start]
        falls = stop == len(scores) - 1 or scores[stop + 1] < scores[stop]
        if rises and falls:
            peaks.append(start)
        start = stop + 1
    return peaks


def _overlaps(a, b):
    return a.start <= b.end and b.start <= a.end


def top_n_segments(scores, top_n, threshold):
    """
    Up to ``top_n`` segments grown from the highest local maxima. A grown
    segment overlapping a higher-scored one is dropped. Sorted by descending
    score, ties by start frame.
    """
    if top_n < 1:
        raise ValueError('top_n must be at least 1')
    scores = np.asarray(scores, dtype=np.float64)
    peaks = sorted(local_maxima(scores), key=lambda t: (-scores[t], t))[:top_n]
    kept = []
    for peak in peaks:
        segment = grow_segment(scores, peak, threshold)
        if not any(_overlaps(segment, other) for other in kept):
            kept.append(segment)
    return sorted(kept, key=lambda s: (-s.score, s.start))


def temporal_iou(a, b):
    """Intersection over union of inclusive frame intervals."""
    intersection = max(0, min(a.end, b.end) - max(a.start, b.start) + 1)
    return intersection / (a.length + b.length - intersection)


def ground_query(model, video, query_id, necks, config):
    curve = score_curve(model, necks, video.features)
    return GroundingResult(video.video_id, query_id, tuple(top_n_segments(curve, config.top_n, config.threshold)))


def check_pairs(pairs, videos, necks):
    """Raise ``EvaluationError`` naming every pair member without features or necks."""
    missing = sorted({vid for vid, _ in pairs if vid not in videos})
    if missing:
        raise EvaluationError(f'no features for video(s): {", ".join(missing)}')
    missing = sorted({qid for _, qid in pairs if qid not in necks})
    if missing:
        raise EvaluationError(f'no necks for query(s): {", ".join(missing)}')


def ground_pairs(model, pairs, videos, necks, config):
    """GroundingResults for (video_id, query_id) pairs, in pair order."""
    model.eval()
    videos = {video.video_id: video for video in videos}
    check_pairs(pairs, videos, necks)
    return Parallel(n_jobs=config.workers, prefer='threads')(
        delayed(ground_query)(model, videos[vid], qid, necks[qid], config) for vid, qid in pairs
    )


def recall_at_n(results, ground_truth, top_n, iou_threshold):
    """Percentage of queries with a top-N segment whose IoU strictly exceeds the threshold."""
    if not results:
        raise EvaluationError('no grounding results to evaluate')
    missing = sorted(r.query_id for r in results if (r.video_id, r.query_id) not in ground_truth)
    if missing:
        raise EvaluationError(f'no ground truth for query id(s): {", ".join(missing)}')
    hits = [
        any(temporal_iou(segment, ground_truth[(r.video_id, r.query_id)]) > iou_threshold
            for segment in r.segments[:top_n])
        for r in results
    ]
    return 100.0 * float(np.mean(hits))


def evaluation_table(results, ground_truth, top_ns=TABLE_TOP_NS, thresholds=TABLE_THRESHOLDS):
    rows = [(n, theta, recall_at_n(results, ground_truth, n, theta)) for n in top_ns for theta in thresholds]
    return pd.DataFrame(rows, columns=['top_n', 'iou_threshold', 'recall'])


def format_table(table):
    """R@N rows by IoU columns, for terminal output."""
    pivot = table.pivot(index='top_n', columns='iou_threshold', values='recall')
    pivot.index = [f'R@{n}' for n in pivot.index]
    pivot.columns = [f'IoU={theta}' for theta in pivot.columns]
    return pivot.to_string(float_format=lambda v: f'{v:.2f}')


def write_results(path, results):
    rows = [(r.video_id, r.query_id, rank, s.start, s.end, s.score)
            for r in results for rank, s in enumerate(r.segments, start=1)]
    pd.DataFrame(rows, columns=RESULT_COLUMNS).to_csv(path, sep='\t', index=False)


def read_results(path):
    try:
        frame = pd.read_csv(path, sep='\t', dtype={'video_id': str, 'query_id': str})
    except FileNotFoundError:
        raise EvaluationError(f'{path}: no such results file') from None
    absent = [c for c in RESULT_COLUMNS if c not in frame.columns]
    if absent:
        raise EvaluationError(f'{path}: missing column(s) {", ".join(absent)}')
    results = []
    for (vid, qid), group in frame.sort_values('rank', kind='stable').groupby(['video_id', 'query_id'], sort=False):
        segments = tuple(Segment(int(row.start), int(row.end), float(row.score))
                         for row in group.itertuples(index=False))
        results.append(GroundingResult(vid, qid, segments))
    return results


def curve_table(curves):
    """Long format (video_id, query_id, frame, score) from {(video_id, query_id): curve}."""
    rows = [(vid, qid, t, float(v)) for (vid, qid), curve in curves.items() for t, v in enumerate(curve)]
    return pd.DataFrame(rows, columns=['video_id', 'query_id', 'frame', 'score'])


@torch.no_grad()
def dump_attention(directory, model, video, centers):
    """Write A_spe and A_fore of one video as a named-record archive."""
    outputs = model(video.features, centers)
    path = Path(directory) / f'{video.video_id}.attn'
    write_archive(path, {
        'specific': outputs.attention.positive.double().numpy(),
        'foreground': outputs.foreground.probabilities.double().numpy(),
    }, {'kind': 'attention', 'video_id': video.video_id})
    return path
