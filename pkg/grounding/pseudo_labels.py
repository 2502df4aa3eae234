"""
Frame-level pseudo labels from normalized-cut bipartitions.

For a video and a center c_j, the points [f_t ; c_j] are connected by a
Gaussian kernel, split by the sign of the Fiedler vector of the symmetric
normalized Laplacian, and the side whose mean frame is more cosine-similar
to the center becomes the positive side.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import eigh
from scipy.spatial.distance import cdist, pdist

from .containers import read_archive, write_archive
from .exceptions import NCutError

logger = logging.getLogger(__name__)

EIGEN_RESIDUAL_BOUND = 1e-8
POLARITY_TIE = 1e-12


def self_tuning_sigma(points):
    """Median pairwise distance; falls back to the mean non-zero distance, 0 if all points coincide."""
    distances = pdist(points)
    if len(distances) == 0:
        return 0.0
    median = float(np.median(distances))
    if median > 0:
        return median
    nonzero = distances[distances > 0]
    return float(nonzero.mean()) if len(nonzero) else 0.0


def gaussian_affinity(points, sigma):
    """W[s, t] = exp(-|x_s - x_t|^2 / (2 sigma^2)); symmetric, unit diagonal, entries in (0, 1]."""
    if sigma <= 0:
        raise ValueError(f'kernel bandwidth must be positive, got {sigma}')
    points = np.asarray(points, dtype=np.float64)
    affinity = np.exp(-cdist(points, points, 'sqeuclidean') / (2.0 * sigma ** 2))
    affinity = np.maximum(0.5 * (affinity + affinity.T), np.finfo(np.float64).tiny)
    np.fill_diagonal(affinity, 1.0)
    return affinity


def ncut_bipartition(affinity):
    """
    Two-way normalized cut: threshold the Fiedler vector of
    I - D^-1/2 W D^-1/2 at zero. The side holding vertex 0 is labeled 0.
    """
    affinity = np.asarray(affinity, dtype=np.float64)
    n = affinity.shape[0]
    if affinity.shape != (n, n) or not np.allclose(affinity, affinity.T, rtol=0, atol=1e-12):
        raise NCutError('affinity must be a symmetric square matrix')
    if (affinity < 0).any():
        raise NCutError('affinity must be nonnegative')
    degrees = affinity.sum(axis=1)
    if (degrees <= 0).any():
        raise NCutError(f'vertex {int(np.argmin(degrees))} has zero degree')
    if n == 1:
        return np.zeros(1, dtype=np.uint8)
    if not (affinity - np.diag(np.diag(affinity))).any():
        raise NCutError('graph has no edges between distinct vertices')

    scale = 1.0 / np.sqrt(degrees)
    laplacian = np.eye(n) - scale[:, None] * affinity * scale[None, :]
    laplacian = 0.5 * (laplacian + laplacian.T)
    values, vectors = eigh(laplacian)
    fiedler, value = vectors[:, 1], values[1]
    residual = np.linalg.norm(laplacian @ fiedler - value * fiedler)
    if residual > EIGEN_RESIDUAL_BOUND:
        raise NCutError(f'eigen residual {residual:.3e} exceeds {EIGEN_RESIDUAL_BOUND:g}')
    labels = (fiedler > 0).astype(np.uint8)
    if labels[0] == 1:
        labels = 1 - labels
    return labels


def normalized_cut_value(affinity, labels):
    """cut(A, B) / vol(A) + cut(A, B) / vol(B)."""
    labels = np.asarray(labels).astype(bool)
    cut = affinity[labels][:, ~labels].sum()
    return cut / affinity[labels].sum() + cut / affinity[~labels].sum()


def _cosine(a, b):
    width = max(len(a), len(b))
    a = np.pad(a, (0, width - len(a)))
    b = np.pad(b, (0, width - len(b)))
    norms = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / norms) if norms > 0 else 0.0


def bipartition_frames(frames, center, sigma=None, polarity_reference=None):
    """
    Binary frame labels (length T) for one center.

    ``frames`` (T, d) are concatenated with ``center``; ``polarity_reference``
    (default ``center``) orients the result, zero-padded to the frame width
    for the cosine comparison. Degenerate videos (one frame, identical
    frames, or a one-sided cut) are labeled all ones.
    """
    frames = np.asarray(frames, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    reference = center if polarity_reference is None else np.asarray(polarity_reference, dtype=np.float64)
    count = len(frames)
    if count == 1:
        return np.ones(1, dtype=np.uint8)
    points = np.hstack([frames, np.broadcast_to(center, (count, len(center)))])
    sigma = sigma or self_tuning_sigma(points)
    if sigma <= 0:
        logger.warning('all %d frames are identical; labeling every frame positive', count)
        return np.ones(count, dtype=np.uint8)
    sides = ncut_bipartition(gaussian_affinity(points, sigma))
    if sides.all() or not sides.any():
        return np.ones(count, dtype=np.uint8)

    similarity = [_cosine(frames[sides == side].mean(axis=0), reference) for side in (0, 1)]
    if abs(similarity[0] - similarity[1]) <= POLARITY_TIE:
        sizes = [int((sides == side).sum()) for side in (0, 1)]
        positive = 0 if sizes[0] < sizes[1] else 1
    else:
        positive = int(np.argmax(similarity))
    return (sides == positive).astype(np.uint8)


def init_pseudo_labels(frames, center, sigma=None):
    """Labels from raw frame features F and a raw center c."""
    return bipartition_frames(frames, center, sigma)


def update_pseudo_labels(encoded, center, sigma=None, projected_center=None):
    """
    Labels from learned specific-branch features F-hat. The points are
    [f-hat_t ; c_j]; polarity is judged against the projected center, which
    lives in the same space as F-hat.
    """
    return bipartition_frames(encoded, center, sigma, polarity_reference=projected_center)


def label_matrix(frames, centers, sigma=None, projected_centers=None):
    """(N_c, T) uint8 label matrix of one video for all centers of a neck index."""
    rows = []
    for j, center in enumerate(centers):
        reference = None if projected_centers is None else projected_centers[j]
        rows.append(bipartition_frames(frames, center, sigma, reference))
    return np.stack(rows)


@dataclass
class PseudoLabelStore:
    """(neck index, video_id) -> (N_c, T) binary label matrix."""
    labels: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.labels[key]

    def __setitem__(self, key, value):
        self.labels[key] = np.asarray(value, dtype=np.uint8)

    def __contains__(self, key):
        return key in self.labels

    def __len__(self):
        return len(self.labels)

    def keys(self):
        return self.labels.keys()

    def copy(self):
        return PseudoLabelStore({k: v.copy() for k, v in self.labels.items()})

    def change_rate(self, other, neck=None):
        """Fraction of label entries that differ from ``other``, optionally for one neck index."""
        keys = [k for k in self.labels if neck is None or k[0] == neck]
        changed = sum(int((self.labels[k] != other.labels[k]).sum()) for k in keys)
        total = sum(self.labels[k].size for k in keys)
        return changed / total if total else 0.0


def compute_labels(videos, centers, sigma=None, encoded=None, projected_centers=None, n_jobs=1):
    """
    Label matrices for every video against one neck index's centers.

    Without ``encoded`` the raw frame features are cut (initialization);
    with it, the learned features are (refresh). Runs per video in parallel
    and returns them in input order.
    """
    def one(position, video):
        frames = video.features if encoded is None else encoded[position]
        return label_matrix(frames, centers, sigma, projected_centers)

    return Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(one)(position, video) for position, video in enumerate(videos)
    )


def save_label_store(path, store, iteration):
    """Bit-packed rows, one record per (video_id, neck index)."""
    records, shapes = {}, {}
    for (neck, video_id), matrix in sorted(store.labels.items()):
        name = f'{video_id}/{neck}'
        records[name] = np.packbits(matrix, axis=1)
        shapes[name] = list(matrix.shape)
    write_archive(path, records, {'kind': 'pseudo_labels', 'iteration': iteration, 'shapes': shapes})


def load_label_store(path):
    records, meta = read_archive(path)
    store = PseudoLabelStore()
    for name, packed in records.items():
        video_id, _, neck = name.rpartition('/')
        rows, count = meta['shapes'][name]
        store[(int(neck), video_id)] = np.unpackbits(packed, axis=1, count=count)[:rows]
    return store, meta['iteration']
